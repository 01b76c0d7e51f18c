//! The exhaustion scheme: extend the asymptotic datum into the section,
//! solve Dirichlet problems on growing balls, monitor the cap-barrier height
//! bounds and the interior gradients, and declare convergence from Cauchy
//! deltas on a fixed compact.

use std::sync::Arc;

use crate::error::{Result, SolverError};
use crate::mesh::mean_curvature_oracle;
use crate::model::check_mean_curvature;
use crate::operator::{assemble_residual, embed_graph, BallDomain, GraphField};
use crate::section::SectionGrid;
use crate::solver::{continuation_solve, dirichlet_solve, DirichletProblem, SolveReport, SolverConfig};

/// Asymptotic boundary datum on the equator circle: continuous and
/// 2π-periodic.
#[derive(Debug, Clone)]
pub enum BoundaryTrace {
    Constant(f64),
    /// `a0 + Σ cos[l-1]·cos(lβ) + sin[l-1]·sin(lβ)`.
    Fourier {
        a0: f64,
        cos: Vec<f64>,
        sin: Vec<f64>,
    },
    /// Uniform samples with periodic linear interpolation.
    Samples(Vec<f64>),
}

impl BoundaryTrace {
    pub fn eval(&self, beta: f64) -> f64 {
        match self {
            BoundaryTrace::Constant(c) => *c,
            BoundaryTrace::Fourier { a0, cos, sin } => {
                let mut v = *a0;
                for (l, c) in cos.iter().enumerate() {
                    v += c * ((l + 1) as f64 * beta).cos();
                }
                for (l, s) in sin.iter().enumerate() {
                    v += s * ((l + 1) as f64 * beta).sin();
                }
                v
            }
            BoundaryTrace::Samples(vals) => {
                let n = vals.len();
                let t = beta.rem_euclid(2.0 * std::f64::consts::PI) / (2.0 * std::f64::consts::PI)
                    * n as f64;
                let i = (t.floor() as usize) % n;
                let frac = t - t.floor();
                vals[i] * (1.0 - frac) + vals[(i + 1) % n] * frac
            }
        }
    }

    /// Mean over the circle (exact for constant and Fourier data).
    pub fn mean(&self) -> f64 {
        match self {
            BoundaryTrace::Constant(c) => *c,
            BoundaryTrace::Fourier { a0, .. } => *a0,
            BoundaryTrace::Samples(vals) => vals.iter().sum::<f64>() / vals.len() as f64,
        }
    }

    /// (inf, sup) of the trace; Fourier data is sampled densely.
    pub fn bounds(&self) -> (f64, f64) {
        match self {
            BoundaryTrace::Constant(c) => (*c, *c),
            BoundaryTrace::Samples(vals) => vals
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                    (lo.min(v), hi.max(v))
                }),
            BoundaryTrace::Fourier { .. } => {
                let n = 8192;
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for i in 0..n {
                    let v = self.eval(2.0 * std::f64::consts::PI * i as f64 / n as f64);
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                (lo, hi)
            }
        }
    }

    pub fn oscillation(&self) -> f64 {
        let (lo, hi) = self.bounds();
        hi - lo
    }

    pub fn sup_abs(&self) -> f64 {
        let (lo, hi) = self.bounds();
        lo.abs().max(hi.abs())
    }
}

/// Interior ramp `m(α)` used by the boundary extension: `m(0) = 0`,
/// `m(π/2) = 1`, monotone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ramp {
    /// `sin²α` (default; smooth at the pole).
    SinSq,
    /// `α/(π/2)`.
    Linear,
}

impl Ramp {
    pub fn eval(&self, alpha: f64) -> f64 {
        match self {
            Ramp::SinSq => alpha.sin().powi(2),
            Ramp::Linear => alpha / std::f64::consts::FRAC_PI_2,
        }
    }
}

/// Interior extension `F(α, β) = φ̄ + m(α)·(φ(β) - φ̄)` of the trace.
pub fn extend_boundary(phi: &BoundaryTrace, grid: &Arc<SectionGrid>, ramp: Ramp) -> GraphField {
    let mean = phi.mean();
    GraphField::from_fn(grid.clone(), |alpha, beta| {
        mean + ramp.eval(alpha) * (phi.eval(beta) - mean)
    })
}

/// Height interval every exact solution with trace `φ` must respect, from
/// the umbilic-cap barriers: `[inf φ - arctanh|H|, sup φ + arctanh|H|]`.
pub fn barrier_bounds(phi: &BoundaryTrace, h: f64) -> Result<(f64, f64)> {
    check_mean_curvature(h)?;
    let (lo, hi) = phi.bounds();
    let margin = h.abs().atanh();
    Ok((lo - margin, hi + margin))
}

/// Exhaustion parameters. Balls run `k = 2..=k_max`; convergence is
/// declared from successive-iterate deltas on the fixed compact of radius
/// `cauchy_radius`.
#[derive(Debug, Clone, Copy)]
pub struct ExhaustionConfig {
    pub k_max: usize,
    pub cauchy_tol: f64,
    pub cauchy_radius: f64,
    pub ramp: Ramp,
    pub solver: SolverConfig,
    /// Run the independent curvature oracle on each iterate (reported per
    /// ball; mildly expensive).
    pub oracle_check: bool,
}

impl ExhaustionConfig {
    pub fn new(k_max: usize) -> Self {
        assert!(k_max >= 3, "k_max must be at least 3, got {k_max}");
        Self {
            k_max,
            cauchy_tol: 1e-6,
            cauchy_radius: 2.0,
            ramp: Ramp::SinSq,
            solver: SolverConfig::default(),
            oracle_check: true,
        }
    }
}

/// Per-ball record of the exhaustion run.
#[derive(Debug, Clone)]
pub struct BallRecord {
    pub k: usize,
    pub boundary_ring: usize,
    pub alpha_ring: f64,
    pub solve: SolveReport,
    /// Continuation path `(H, newton iterations)` when a sweep ran.
    pub continuation: Option<Vec<(f64, usize)>>,
    pub inf_u: f64,
    pub sup_u: f64,
    /// Sup of |du|_σ over the unit-radius ball.
    pub sup_grad_b1: f64,
    /// Sup deviation from the previous iterate on the Cauchy compact.
    pub cauchy_delta: Option<f64>,
    /// Max |oracle curvature - H| over the embedded interior.
    pub oracle_mc_max_err: Option<f64>,
}

/// Full exhaustion report: monitors per ball plus the convergence verdict.
#[derive(Debug, Clone)]
pub struct ExhaustionReport {
    pub h: f64,
    pub barrier: (f64, f64),
    pub records: Vec<BallRecord>,
    /// First ball index whose Cauchy delta dropped below tolerance.
    pub converged_at: Option<usize>,
    pub final_residual: f64,
}

impl ExhaustionReport {
    pub fn converged(&self) -> bool {
        self.converged_at.is_some()
    }
}

/// Runs the exhaustion: solve on each ball with the extension data on its
/// rim, warm-starting from the previous iterate (continuation sweep on the
/// first ball or after a warm-start failure), and record all monitors.
pub fn exhaustion_solve(
    phi: &BoundaryTrace,
    h: f64,
    grid: &Arc<SectionGrid>,
    cfg: &ExhaustionConfig,
) -> Result<(GraphField, ExhaustionReport)> {
    check_mean_curvature(h)?;
    let barrier = barrier_bounds(phi, h)?;
    let extension = extend_boundary(phi, grid, cfg.ramp);
    let b1_ring = grid.ball_ring(1.0);
    let cauchy_ring = grid.ball_ring(cfg.cauchy_radius);

    let mut u = extension.clone();
    let mut prev: Option<GraphField> = None;
    let mut records: Vec<BallRecord> = Vec::new();
    let mut converged_at = None;
    let mut final_residual = f64::NAN;

    for k in 2..=cfg.k_max {
        let ring = grid.ball_ring(k as f64);
        assert!(ring >= 2, "ball k = {k} has no interior on this grid");
        let boundary_values: Vec<f64> = (0..grid.n_beta)
            .map(|j| extension.u[grid.idx(ring, j)])
            .collect();
        let problem = DirichletProblem {
            boundary_ring: ring,
            boundary_values,
            h,
            initial: u.clone(),
        };

        let (solution, solve_report, continuation) = if prev.is_none() {
            let (sol, rep) = continuation_solve(&problem, &cfg.solver).map_err(|e| e.at_ball(k))?;
            (sol, rep.last, Some(rep.path))
        } else {
            match dirichlet_solve(&problem, &cfg.solver) {
                Ok((sol, rep)) => (sol, rep, None),
                Err(SolverError::NonConvergence { .. }) | Err(SolverError::EllipticityLoss { .. }) => {
                    let (sol, rep) =
                        continuation_solve(&problem, &cfg.solver).map_err(|e| e.at_ball(k))?;
                    (sol, rep.last, Some(rep.path))
                }
                Err(e) => return Err(e.at_ball(k)),
            }
        };

        // height monitor against the cap barriers
        let excess = (barrier.0 - solve_report.inf_u).max(solve_report.sup_u - barrier.1);
        if excess > 10.0 * cfg.solver.tol {
            return Err(SolverError::BarrierViolation {
                k,
                lower: barrier.0,
                upper: barrier.1,
                excess,
            });
        }

        // monitors from the converged state
        let domain = BallDomain {
            boundary_ring: ring,
        };
        let state = assemble_residual(&solution, h, domain);
        final_residual = state.residual_inf;
        let sup_grad_b1 = state.sup_gradient(grid, b1_ring);

        let cauchy_delta = prev.as_ref().map(|p| {
            let mut d = (solution.u[0] - p.u[0]).abs();
            for i in 1..=cauchy_ring.min(ring) {
                for j in 0..grid.n_beta {
                    let idx = grid.idx(i, j);
                    d = d.max((solution.u[idx] - p.u[idx]).abs());
                }
            }
            d
        });
        if converged_at.is_none() {
            if let Some(d) = cauchy_delta {
                if d <= cfg.cauchy_tol {
                    converged_at = Some(k);
                }
            }
        }

        let oracle_mc_max_err = if cfg.oracle_check {
            Some(oracle_error(&solution, h, ring))
        } else {
            None
        };

        records.push(BallRecord {
            k,
            boundary_ring: ring,
            alpha_ring: grid.alpha(ring),
            inf_u: solve_report.inf_u,
            sup_u: solve_report.sup_u,
            solve: solve_report,
            continuation,
            sup_grad_b1,
            cauchy_delta,
            oracle_mc_max_err,
        });

        prev = Some(solution.clone());
        u = solution;
    }

    let report = ExhaustionReport {
        h,
        barrier,
        records,
        converged_at,
        final_residual,
    };
    Ok((u, report))
}

/// Max curvature-oracle error over embedded vertices safely inside the ball.
fn oracle_error(u: &GraphField, h: f64, boundary_ring: usize) -> f64 {
    let grid = &u.grid;
    let mesh = embed_graph(u);
    let est = mean_curvature_oracle(&mesh);
    let mut mask = vec![false; mesh.vertex_count()];
    let limit = boundary_ring.saturating_sub(2);
    mask[0] = true;
    for i in 1..=limit {
        for j in 0..grid.n_beta {
            mask[grid.idx(i, j)] = true;
        }
    }
    est.max_error(h, &mask).unwrap_or(f64::NAN)
}

/// Boundedness verdict on the interior gradients across the exhaustion: the
/// computable shadow of the interior gradient estimate.
#[derive(Debug, Clone, Copy)]
pub struct GradientVerdict {
    pub ok: bool,
    pub max: f64,
    pub median: f64,
    pub monotone_divergent: bool,
}

/// Checks `max ≤ 2 × median` of the per-ball `sup_{B_1}|Du|` values and
/// flags monotone blowup. Needs at least three recorded balls.
pub fn gradient_monitor(report: &ExhaustionReport) -> GradientVerdict {
    let values: Vec<f64> = report.records.iter().map(|r| r.sup_grad_b1).collect();
    gradient_monitor_values(&values)
}

pub fn gradient_monitor_values(values: &[f64]) -> GradientVerdict {
    assert!(values.len() >= 3, "gradient monitor needs at least 3 values");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    let max = *sorted.last().unwrap();
    let stable = max <= 2.0 * median + 1e-12;
    let monotone = values.windows(2).all(|w| w[1] > w[0]);
    let monotone_divergent = monotone && values.last().unwrap() > &(1.5 * values[0] + 1e-12);
    GradientVerdict {
        ok: stable && !monotone_divergent,
        max,
        median,
        monotone_divergent,
    }
}
