//! Damped Newton solver with continuation in the mean curvature for the
//! Dirichlet problem on a ball sub-grid.

use crate::error::{Result, SolverError};
use crate::linsolve::{solve, LinearSolverKind};
use crate::model::check_mean_curvature;
use crate::operator::{assemble_jacobian, assemble_residual, BallDomain, GraphField, OperatorState};

/// Newton and continuation parameters.
#[derive(Debug, Clone, Copy)]
pub struct SolverConfig {
    /// Sup-norm residual tolerance.
    pub tol: f64,
    pub max_newton: usize,
    /// Largest continuation step in H.
    pub dh: f64,
    /// Backtracking floor for the line-search step.
    pub step_floor: f64,
    pub linear: LinearSolverKind,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_newton: 50,
            dh: 0.1,
            step_floor: 1e-4,
            linear: LinearSolverKind::Direct,
        }
    }
}

/// Dirichlet problem on the sub-grid `{ring ≤ boundary_ring}` with data on
/// the outermost ring.
#[derive(Debug, Clone)]
pub struct DirichletProblem {
    pub boundary_ring: usize,
    /// Values on the boundary ring, one per azimuth node.
    pub boundary_values: Vec<f64>,
    pub h: f64,
    /// Initial guess; nodes outside the ball are carried through untouched.
    pub initial: GraphField,
}

impl DirichletProblem {
    pub fn domain(&self) -> BallDomain {
        BallDomain {
            boundary_ring: self.boundary_ring,
        }
    }
}

/// Convergence record of one Dirichlet solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    pub newton_iterations: usize,
    /// Sup-norm residuals of the accepted iterates, strictly decreasing.
    pub residual_history: Vec<f64>,
    pub converged: bool,
    /// Smallest eigenvalue of A seen over accepted iterates.
    pub min_ellipticity: f64,
    pub sup_u: f64,
    pub inf_u: f64,
    /// Sup of |du|_sigma over the interior.
    pub sup_gradient: f64,
}

fn min_max_active(u: &GraphField, boundary_ring: usize) -> (f64, f64) {
    let grid = &u.grid;
    let mut lo = u.u[0];
    let mut hi = u.u[0];
    for i in 1..=boundary_ring {
        for j in 0..grid.n_beta {
            let v = u.u[grid.idx(i, j)];
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    (lo, hi)
}

/// Newton iteration with backtracking line search on the sup-norm residual.
/// Trial steps that lose ellipticity are rejected by the search; degenerate
/// accepted iterates are an error.
pub fn dirichlet_solve(p: &DirichletProblem, cfg: &SolverConfig) -> Result<(GraphField, SolveReport)> {
    check_mean_curvature(p.h)?;
    assert!(
        p.boundary_values.len() == p.initial.grid.n_beta,
        "boundary data length mismatch"
    );
    assert!(p.initial.is_finite(), "non-finite initial guess");
    assert!(
        p.boundary_values.iter().all(|v| v.is_finite()),
        "non-finite boundary data"
    );
    let domain = p.domain();
    let grid = p.initial.grid.clone();
    let n_int = domain.interior_count(&grid);

    let mut u = p.initial.clone();
    for j in 0..grid.n_beta {
        u.u[grid.idx(p.boundary_ring, j)] = p.boundary_values[j];
    }

    let mut state = assemble_residual(&u, p.h, domain);
    if !state.elliptic {
        return Err(ellipticity_error(&state, p.h));
    }
    let mut history = vec![state.residual_inf];
    let mut min_ellipticity = state.min_ellipticity;
    let mut iterations = 0usize;

    while state.residual_inf > cfg.tol {
        if iterations >= cfg.max_newton {
            return Err(SolverError::NonConvergence {
                iterations,
                residual: state.residual_inf,
                h: p.h,
            });
        }
        iterations += 1;
        let jac = assemble_jacobian(&u, p.h, domain);
        let rhs: Vec<f64> = state.nodes.iter().map(|n| -n.residual).collect();
        let delta = solve(&jac, &rhs, cfg.linear)?;

        let mut step = 1.0f64;
        let mut accepted = false;
        let mut ellipticity_blocked = false;
        let mut last_trial: Option<(GraphField, OperatorState)> = None;
        while step >= cfg.step_floor {
            let mut trial = u.clone();
            for k in 0..n_int {
                trial.u[k] += step * delta[k];
            }
            let trial_state = assemble_residual(&trial, p.h, domain);
            if trial_state.elliptic
                && (trial_state.residual_inf < state.residual_inf
                    || trial_state.residual_inf <= cfg.tol)
            {
                last_trial = Some((trial, trial_state));
                accepted = true;
                break;
            }
            ellipticity_blocked = !trial_state.elliptic;
            step *= 0.5;
        }
        if !accepted {
            if ellipticity_blocked {
                let trial_state = {
                    let mut trial = u.clone();
                    for k in 0..n_int {
                        trial.u[k] += cfg.step_floor * delta[k];
                    }
                    assemble_residual(&trial, p.h, domain)
                };
                return Err(ellipticity_error(&trial_state, p.h));
            }
            return Err(SolverError::NonConvergence {
                iterations,
                residual: state.residual_inf,
                h: p.h,
            });
        }
        let (trial, trial_state) = last_trial.expect("accepted trial present");
        u = trial;
        state = trial_state;
        history.push(state.residual_inf);
        min_ellipticity = min_ellipticity.min(state.min_ellipticity);
    }

    let (inf_u, sup_u) = min_max_active(&u, p.boundary_ring);
    let report = SolveReport {
        newton_iterations: iterations,
        residual_history: history,
        converged: true,
        min_ellipticity,
        sup_u,
        inf_u,
        sup_gradient: state.sup_gradient(&grid, p.boundary_ring - 1),
    };
    Ok((u, report))
}

fn ellipticity_error(state: &OperatorState, h: f64) -> SolverError {
    let (node, min_eig) = state
        .nodes
        .iter()
        .enumerate()
        .map(|(k, n)| (k, n.min_eig))
        .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
    SolverError::EllipticityLoss {
        node,
        min_eig,
        h,
    }
}

/// Record of one continuation sweep: the visited curvatures and the Newton
/// iterations each needed.
#[derive(Debug, Clone)]
pub struct ContinuationReport {
    pub path: Vec<(f64, usize)>,
    pub last: SolveReport,
}

/// Globalized solve: starts at the minimal problem `H = 0` and steps the
/// curvature by at most `cfg.dh`, reusing each solution as the next initial
/// guess. Errors carry the failing curvature value.
pub fn continuation_solve(
    p: &DirichletProblem,
    cfg: &SolverConfig,
) -> Result<(GraphField, ContinuationReport)> {
    check_mean_curvature(p.h)?;
    let mut ladder = vec![0.0];
    if p.h != 0.0 {
        let steps = (p.h.abs() / cfg.dh).ceil() as usize;
        for k in 1..=steps {
            ladder.push(p.h * k as f64 / steps as f64);
        }
    }
    let mut current = p.initial.clone();
    let mut path = Vec::with_capacity(ladder.len());
    let mut last: Option<SolveReport> = None;
    for h_k in ladder {
        let sub = DirichletProblem {
            boundary_ring: p.boundary_ring,
            boundary_values: p.boundary_values.clone(),
            h: h_k,
            initial: current,
        };
        let (u, report) = dirichlet_solve(&sub, cfg)?;
        path.push((h_k, report.newton_iterations));
        current = u;
        last = Some(report);
    }
    let last = last.expect("ladder is never empty");
    Ok((current, ContinuationReport { path, last }))
}

/// Discrete comparison-principle check: if `u ≤ v` on the boundary ring
/// (within tolerance) then `u ≤ v` at all interior nodes. Report-only.
#[derive(Debug, Clone, Copy)]
pub struct OrderingReport {
    /// Whether the boundary hypothesis held.
    pub boundary_ordered: bool,
    /// Worst interior excess `max(u - v)` (clamped at zero).
    pub worst_violation: f64,
    /// Violation within `10·tol` whenever the hypothesis held.
    pub ok: bool,
}

pub fn ordering_check(
    u: &GraphField,
    v: &GraphField,
    boundary_ring: usize,
    tol: f64,
) -> OrderingReport {
    let grid = &u.grid;
    let tol_cmp = 10.0 * tol;
    let mut boundary_excess = f64::NEG_INFINITY;
    for j in 0..grid.n_beta {
        let k = grid.idx(boundary_ring, j);
        boundary_excess = boundary_excess.max(u.u[k] - v.u[k]);
    }
    let boundary_ordered = boundary_excess <= tol_cmp;
    let mut worst = u.u[0] - v.u[0];
    for i in 1..boundary_ring {
        for j in 0..grid.n_beta {
            let k = grid.idx(i, j);
            worst = worst.max(u.u[k] - v.u[k]);
        }
    }
    let worst_violation = worst.max(0.0);
    OrderingReport {
        boundary_ordered,
        worst_violation,
        ok: !boundary_ordered || worst_violation <= tol_cmp,
    }
}
