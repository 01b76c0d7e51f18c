//! The individual acceptance criteria. Expensive solves are shared between
//! criteria through lazily initialized caches so the suite stays inside its
//! runtime budgets.

use std::sync::{Arc, OnceLock};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::CriterionResult;
use crate::error::SolverError;
use crate::exhaustion::{
    exhaustion_solve, gradient_monitor, BoundaryTrace, ExhaustionConfig, ExhaustionReport,
};
use crate::mesh::mean_curvature_oracle;
use crate::model::{flow, hyperbolic_distance, AmbientPoint, KillingMotion, ModelSpec};
use crate::operator::{
    assemble_jacobian, assemble_residual, BallDomain, GraphField,
};
use crate::oracles::{equivariant_ode_solve, reference_surfaces, CapSolution};
use crate::section::{
    ball_alpha, cylinder_mean_curvature, gamma_terms, SectionCoords, SectionGrid,
};
use crate::solver::{dirichlet_solve, DirichletProblem, SolverConfig};

struct ExhaustionRun {
    grid: Arc<SectionGrid>,
    u: GraphField,
    report: ExhaustionReport,
    elapsed: f64,
}

fn run_exhaustion(
    theta: f64,
    h: f64,
    phi: BoundaryTrace,
    n_alpha: usize,
    n_beta: usize,
    k_max: usize,
    oracle_check: bool,
) -> Result<ExhaustionRun, SolverError> {
    let grid = Arc::new(SectionGrid::new(
        KillingMotion::new(theta),
        n_alpha,
        n_beta,
        ball_alpha(k_max as f64),
    ));
    let cfg = ExhaustionConfig {
        oracle_check,
        ..ExhaustionConfig::new(k_max)
    };
    let start = Instant::now();
    let (u, report) = exhaustion_solve(&phi, h, &grid, &cfg)?;
    Ok(ExhaustionRun {
        grid,
        u,
        report,
        elapsed: start.elapsed().as_secs_f64(),
    })
}

/// Sup error on the radius-2 ball against the exact solution of the largest
/// truncated cap problem (the cap profile matched to the outer Dirichlet
/// ring).
fn cap_error_b2(run: &ExhaustionRun, h: f64) -> f64 {
    let cap = CapSolution::new(h, 1.0).expect("valid cap");
    let grid = &run.grid;
    let ring = run
        .report
        .records
        .last()
        .expect("records present")
        .boundary_ring;
    let shift = cap.profile(grid.alpha(ring));
    let b2 = grid.ball_ring(2.0);
    let mut err = (run.u.u[0] - (cap.profile(0.0) - shift)).abs();
    for i in 1..=b2 {
        let exact = cap.profile(grid.alpha(i)) - shift;
        for j in 0..grid.n_beta {
            err = err.max((run.u.u[grid.idx(i, j)] - exact).abs());
        }
    }
    err
}

fn leaf_runs() -> &'static Vec<(f64, Result<ExhaustionRun, SolverError>)> {
    static CACHE: OnceLock<Vec<(f64, Result<ExhaustionRun, SolverError>)>> = OnceLock::new();
    CACHE.get_or_init(|| {
        [0.0, 1.0]
            .iter()
            .map(|&theta| {
                (
                    theta,
                    run_exhaustion(theta, 0.0, BoundaryTrace::Constant(0.3), 64, 128, 3, true),
                )
            })
            .collect()
    })
}

fn cap_run_64() -> &'static Result<ExhaustionRun, SolverError> {
    static CACHE: OnceLock<Result<ExhaustionRun, SolverError>> = OnceLock::new();
    CACHE.get_or_init(|| run_exhaustion(0.0, 0.5, BoundaryTrace::Constant(0.0), 64, 128, 5, true))
}

fn cap_run_128() -> &'static Result<ExhaustionRun, SolverError> {
    static CACHE: OnceLock<Result<ExhaustionRun, SolverError>> = OnceLock::new();
    CACHE.get_or_init(|| run_exhaustion(0.0, 0.5, BoundaryTrace::Constant(0.0), 128, 256, 5, false))
}

fn equivariant_run() -> &'static Result<ExhaustionRun, SolverError> {
    static CACHE: OnceLock<Result<ExhaustionRun, SolverError>> = OnceLock::new();
    CACHE.get_or_init(|| run_exhaustion(1.0, 0.4, BoundaryTrace::Constant(0.0), 64, 128, 5, true))
}

fn sharpness_run() -> &'static Result<ExhaustionRun, SolverError> {
    static CACHE: OnceLock<Result<ExhaustionRun, SolverError>> = OnceLock::new();
    CACHE.get_or_init(|| run_exhaustion(0.0, 0.95, BoundaryTrace::Constant(0.0), 32, 64, 3, false))
}

fn fail(name: &'static str, details: String) -> CriterionResult {
    CriterionResult {
        name,
        passed: false,
        details,
    }
}

/// Criterion 1: totally geodesic leaves. Constant data with `H = 0` must be
/// reproduced exactly and immediately for both the transvection and a
/// twisted motion.
pub fn trivial_leaf() -> CriterionResult {
    const NAME: &str = "trivial-leaf";
    let mut details = Vec::new();
    let mut passed = true;
    for (theta, run) in leaf_runs() {
        match run {
            Err(e) => {
                passed = false;
                details.push(format!("theta={theta}: solve error: {e}"));
            }
            Ok(run) => {
                let exact = run.u.u.iter().all(|v| *v == 0.3);
                let res_ok = run.report.final_residual <= 1e-9;
                let cauchy_ok = run.report.records.len() >= 2
                    && run.report.records[1].cauchy_delta == Some(0.0)
                    && run.report.converged_at == Some(3);
                let time_ok = run.elapsed < 10.0;
                passed &= exact && res_ok && cauchy_ok && time_ok;
                details.push(format!(
                    "theta={theta}: exact={exact} residual={:.1e} cauchy0={cauchy_ok} {:.2}s",
                    run.report.final_residual, run.elapsed
                ));
            }
        }
    }
    CriterionResult {
        name: NAME,
        passed,
        details: details.join("; "),
    }
}

/// Criterion 2: the exhaustion reproduces the umbilic cap at second order.
pub fn cap_oracle() -> CriterionResult {
    const NAME: &str = "cap-oracle";
    let r64 = match cap_run_64() {
        Ok(r) => r,
        Err(e) => return fail(NAME, format!("64x128 solve error: {e}")),
    };
    let r128 = match cap_run_128() {
        Ok(r) => r,
        Err(e) => return fail(NAME, format!("128x256 solve error: {e}")),
    };
    let e64 = cap_error_b2(r64, 0.5);
    let e128 = cap_error_b2(r128, 0.5);
    let ratio = e64 / e128;
    let elapsed = r64.elapsed + r128.elapsed;
    let passed = e64 <= 5e-3 && (3.0..=5.0).contains(&ratio) && elapsed < 120.0;
    CriterionResult {
        name: NAME,
        passed,
        details: format!(
            "err(64x128)={e64:.3e} (≤5e-3), err(128x256)={e128:.3e}, ratio={ratio:.2} (in [3,5]), {elapsed:.1}s (<120s)"
        ),
    }
}

/// Criterion 3: the independent curvature estimator agrees with the target
/// curvature on converged runs and reproduces the classical reference
/// values.
pub fn curvature_oracle() -> CriterionResult {
    const NAME: &str = "curvature-oracle";
    let mut details = Vec::new();
    let mut passed = true;

    for (label, run, h) in [
        ("cap", cap_run_64(), 0.5),
        ("equivariant", equivariant_run(), 0.4),
        (
            "leaf",
            leaf_runs()
                .first()
                .map(|(_, r)| r)
                .expect("leaf runs present"),
            0.0,
        ),
    ] {
        match run {
            Err(e) => {
                passed = false;
                details.push(format!("{label}: solve error: {e}"));
            }
            Ok(run) => {
                let tol = 10.0 * run.grid.h_alpha;
                let err = run
                    .report
                    .records
                    .last()
                    .and_then(|r| r.oracle_mc_max_err)
                    .unwrap_or(f64::NAN);
                let ok = err.is_finite() && err <= tol;
                passed &= ok;
                details.push(format!("{label}: |H_mesh-{h}| = {err:.3e} (≤ {tol:.2e})"));
            }
        }
    }

    for r in reference_surfaces() {
        let est = mean_curvature_oracle(&r.mesh);
        let interior = r.mesh.interior_mask(2);
        let err = est.max_error(r.exact_h, &interior).unwrap_or(f64::NAN);
        let ok = err.is_finite() && err <= 1e-2;
        passed &= ok;
        if r.name == "horosphere" || r.name == "hemisphere" || r.name == "tube_d1" {
            details.push(format!("{}: err={err:.2e}", r.name));
        }
    }
    CriterionResult {
        name: NAME,
        passed,
        details: details.join("; "),
    }
}

/// Criterion 4: every exhaustion iterate respects the cap-barrier height
/// interval.
pub fn height_estimates() -> CriterionResult {
    const NAME: &str = "height-estimates";
    let mut passed = true;
    let mut details = Vec::new();
    let mut check = |label: &str, run: &Result<ExhaustionRun, SolverError>| match run {
        Err(e) => {
            passed = false;
            details.push(format!("{label}: solve error: {e}"));
        }
        Ok(run) => {
            let (lo, hi) = run.report.barrier;
            let mut worst = 0.0f64;
            for r in &run.report.records {
                worst = worst.max(lo - r.inf_u).max(r.sup_u - hi);
            }
            let ok = worst <= 1e-8;
            passed &= ok;
            details.push(format!(
                "{label}: worst barrier excess {worst:.2e} over [{lo:.4}, {hi:.4}]"
            ));
        }
    };
    check("cap", cap_run_64());
    check("equivariant", equivariant_run());
    check("sharp", sharpness_run());
    CriterionResult {
        name: NAME,
        passed,
        details: details.join("; "),
    }
}

/// Criterion 5: the interior gradient monitor is stable across the
/// exhaustion and matches the closed-form cap gradient.
pub fn gradient_estimate_shadow() -> CriterionResult {
    const NAME: &str = "gradient-shadow";
    let run = match cap_run_64() {
        Ok(r) => r,
        Err(e) => return fail(NAME, format!("cap solve error: {e}")),
    };
    let verdict = gradient_monitor(&run.report);
    let cap = CapSolution::new(0.5, 1.0).expect("valid cap");
    let b1 = run.grid.ball_ring(1.0);
    let mut exact_sup = 0.0f64;
    for i in 1..=b1 {
        exact_sup = exact_sup.max(cap.gradient_norm(run.grid.alpha(i)));
    }
    let last = run
        .report
        .records
        .last()
        .expect("records present")
        .sup_grad_b1;
    let dev = (last - exact_sup).abs();
    let passed = verdict.ok && dev <= 1e-2;
    CriterionResult {
        name: NAME,
        passed,
        details: format!(
            "max={:.4} median={:.4} stable={} divergent={}; |sup grad - exact| = {dev:.2e} (≤1e-2)",
            verdict.max, verdict.median, verdict.ok, verdict.monotone_divergent
        ),
    }
}

/// Criterion 6: the equidistant-tube curvature dominates `tanh d` exactly,
/// and the mesh estimator reproduces the closed form.
pub fn killing_cylinder_bound() -> CriterionResult {
    const NAME: &str = "killing-cylinder-bound";
    let mut passed = true;
    let mut details = Vec::new();
    for d in [0.5, 1.0, 2.0, 4.0] {
        passed &= cylinder_mean_curvature(d) >= d.tanh();
    }
    details.push(format!(
        "closed form ≥ tanh(d) on all sampled d; H(1) = {:.6}",
        cylinder_mean_curvature(1.0)
    ));
    for r in reference_surfaces() {
        if !r.name.starts_with("tube") {
            continue;
        }
        let est = mean_curvature_oracle(&r.mesh);
        let interior = r.mesh.interior_mask(2);
        let err = est.max_error(r.exact_h, &interior).unwrap_or(f64::NAN);
        let ok = err.is_finite() && err <= 1e-2;
        passed &= ok;
        details.push(format!("{}: err={err:.2e}", r.name));
    }
    CriterionResult {
        name: NAME,
        passed,
        details: details.join("; "),
    }
}

/// Criterion 7: structural property suites — group law, isometry
/// invariance, frame-term antisymmetry, exact translation invariance of the
/// residual, ellipticity along accepted iterates and the Jacobian
/// directional-derivative check.
pub fn structural_invariants() -> CriterionResult {
    const NAME: &str = "structural-invariants";
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut passed = true;
    let mut notes: Vec<String> = Vec::new();

    // flow group law and isometry invariance
    let mut worst_group = 0.0f64;
    let mut worst_iso = 0.0f64;
    for _ in 0..300 {
        let m = KillingMotion::new(rng.gen_range(-2.0..2.0));
        let q = AmbientPoint::new(
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(0.1..3.0),
        );
        let p = AmbientPoint::new(
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(0.1..3.0),
        );
        let (s, t) = (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
        let a = flow(t, flow(s, q, m), m).vec();
        let b = flow(t + s, q, m).vec();
        worst_group = worst_group.max((a - b).norm() / (1.0 + b.norm()));
        let d0 = hyperbolic_distance(p, q);
        let d1 = hyperbolic_distance(flow(t, p, m), flow(t, q, m));
        worst_iso = worst_iso.max((d0 - d1).abs() / (1.0 + d0));
    }
    passed &= worst_group < 1e-12 && worst_iso < 1e-12;
    notes.push(format!("group law {worst_group:.1e}, isometry {worst_iso:.1e}"));

    // gamma antisymmetry and theta = 0 collapse
    let mut worst_asym = 0.0f64;
    let mut worst_zero = 0.0f64;
    for _ in 0..10 {
        let c = SectionCoords::new(rng.gen_range(0.15..1.4), rng.gen_range(0.0..6.28));
        let g = gamma_terms(c, KillingMotion::new(rng.gen_range(-2.0..2.0)));
        worst_asym = worst_asym.max((g.m12 + g.m21).abs());
        let g0 = gamma_terms(c, KillingMotion::transvection());
        worst_zero = worst_zero.max(g0.norm());
    }
    passed &= worst_asym < 1e-6 && worst_zero < 1e-9;
    notes.push(format!("gamma antisym {worst_asym:.1e}, theta0 {worst_zero:.1e}"));

    // exact flow-translation invariance of the assembled residual
    let grid = Arc::new(SectionGrid::new(
        KillingMotion::new(1.0),
        24,
        32,
        ball_alpha(3.0),
    ));
    let scale = f64::powi(2.0, -20);
    let u = GraphField {
        grid: grid.clone(),
        u: (0..grid.node_count())
            .map(|_| (rng.gen_range(-512i32..512) as f64) * scale)
            .collect(),
    };
    let dom = BallDomain::full(&grid);
    let s0 = assemble_residual(&u, 0.3, dom);
    let s1 = assemble_residual(&u.shift(1.75), 0.3, dom);
    let exact = s0
        .nodes
        .iter()
        .zip(&s1.nodes)
        .all(|(a, b)| a.residual == b.residual);
    passed &= exact;
    notes.push(format!("translation invariance exact = {exact}"));

    // ellipticity along accepted iterates of a genuine solve
    let cap = CapSolution::new(0.5, 1.0).expect("valid cap");
    let ring = grid.n_alpha - 1;
    let problem = DirichletProblem {
        boundary_ring: ring,
        boundary_values: vec![cap.profile(grid.alpha(ring)); grid.n_beta],
        h: 0.5,
        initial: GraphField::constant(grid.clone(), cap.profile(grid.alpha(ring))),
    };
    match dirichlet_solve(&problem, &SolverConfig::default()) {
        Err(e) => {
            passed = false;
            notes.push(format!("ellipticity solve failed: {e}"));
        }
        Ok((_, rep)) => {
            passed &= rep.min_ellipticity > 0.0;
            notes.push(format!("min ellipticity {:.3e}", rep.min_ellipticity));
        }
    }

    // Jacobian vs directional derivative at eps = 1e-6: a smooth direction
    // with a tight bound, plus the O(eps) rate on a rough one
    let n_int = dom.interior_count(&grid);
    let defect = |v: &[f64], eps: f64| -> f64 {
        let jac = assemble_jacobian(&u, 0.3, dom);
        let jv = jac.apply(v);
        let mut up = u.clone();
        for (k, vk) in v.iter().enumerate() {
            up.u[k] += eps * vk;
        }
        let r1 = assemble_residual(&up, 0.3, dom);
        (0..v.len())
            .map(|k| ((r1.nodes[k].residual - s0.nodes[k].residual) / eps - jv[k]).abs())
            .fold(0.0f64, f64::max)
    };
    let v_smooth = GraphField::from_fn(grid.clone(), |a, b| a.sin() * b.cos());
    let worst_dir = defect(&v_smooth.u[..n_int], 1e-6);
    let v: Vec<f64> = (0..n_int).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let e1 = defect(&v, 1e-6);
    let e2 = defect(&v, 5e-7);
    let rate_ok = e2 <= 0.65 * e1 + 1e-9;
    passed &= worst_dir < 1e-4 && rate_ok;
    notes.push(format!(
        "jacobian check: smooth {worst_dir:.1e}, O(eps) rate {:.2}",
        e2 / e1.max(1e-300)
    ));

    let elapsed = start.elapsed().as_secs_f64();
    passed &= elapsed < 60.0;
    notes.push(format!("{elapsed:.1}s (<60s)"));
    CriterionResult {
        name: NAME,
        passed,
        details: notes.join("; "),
    }
}

/// Criterion 8: the twisted 2D solve agrees with the shooting ODE, and
/// azimuthal rotations of the data rotate the solution node for node.
pub fn equivariant_cross_check() -> CriterionResult {
    const NAME: &str = "equivariant-cross-check";
    let run = match equivariant_run() {
        Ok(r) => r,
        Err(e) => return fail(NAME, format!("solve error: {e}")),
    };
    let grid = &run.grid;
    let ring = run
        .report
        .records
        .last()
        .expect("records present")
        .boundary_ring;
    let b2 = grid.ball_ring(2.0);
    let samples: Vec<f64> = (0..=b2).map(|i| grid.alpha(i).max(0.0)).collect();
    let profile = match equivariant_ode_solve(1.0, 0.4, 0.0, grid.alpha(ring), &samples) {
        Ok(p) => p,
        Err(e) => return fail(NAME, format!("ode error: {e}")),
    };
    let mut ode_err = 0.0f64;
    for (i, v) in profile.values.iter().enumerate() {
        if i == 0 {
            ode_err = ode_err.max((run.u.u[0] - v).abs());
            continue;
        }
        for j in 0..grid.n_beta {
            ode_err = ode_err.max((run.u.u[grid.idx(i, j)] - v).abs());
        }
    }

    // rotation equivariance on a smaller twisted problem
    let g = Arc::new(SectionGrid::new(
        KillingMotion::new(1.0),
        32,
        64,
        ball_alpha(3.0),
    ));
    let nb = g.n_beta;
    let samples_b: Vec<f64> = (0..nb).map(|j| 0.2 * g.beta(j).cos()).collect();
    let rot = 7usize;
    let rotated: Vec<f64> = (0..nb).map(|j| samples_b[(j + nb - rot) % nb]).collect();
    let mut cfg = ExhaustionConfig {
        oracle_check: false,
        ..ExhaustionConfig::new(3)
    };
    cfg.solver.tol = 1e-12;
    let sol = exhaustion_solve(&BoundaryTrace::Samples(samples_b), 0.4, &g, &cfg);
    let sol_rot = exhaustion_solve(&BoundaryTrace::Samples(rotated), 0.4, &g, &cfg);
    let rot_defect = match (sol, sol_rot) {
        (Ok((u0, _)), Ok((u1, _))) => {
            let mut worst = (u1.u[0] - u0.u[0]).abs();
            for i in 1..g.n_alpha {
                for j in 0..nb {
                    let jr = (j + nb - rot) % nb;
                    worst = worst.max((u1.u[g.idx(i, j)] - u0.u[g.idx(i, jr)]).abs());
                }
            }
            worst
        }
        _ => f64::INFINITY,
    };

    let passed = ode_err <= 5e-3 && rot_defect <= 1e-10;
    CriterionResult {
        name: NAME,
        passed,
        details: format!(
            "2D vs ODE on B_2: {ode_err:.3e} (≤5e-3); rotation defect {rot_defect:.2e} (≤1e-10)"
        ),
    }
}

/// Criterion 9: the admissibility constraint is sharp — `|H| ≥ 1` is
/// rejected at validation, while `H = 0.95` still completes with the wide
/// barrier respected.
pub fn sharpness_behavior() -> CriterionResult {
    const NAME: &str = "sharpness";
    let mut passed = true;
    let mut details = Vec::new();

    let rejected = [1.0, -1.0, 1.5, f64::NAN]
        .iter()
        .all(|&h| ModelSpec::new(KillingMotion::transvection(), h).is_err());
    let grid = Arc::new(SectionGrid::new(
        KillingMotion::transvection(),
        16,
        16,
        ball_alpha(3.0),
    ));
    let runtime_rejected = matches!(
        exhaustion_solve(
            &BoundaryTrace::Constant(0.0),
            1.0,
            &grid,
            &ExhaustionConfig::new(3)
        ),
        Err(SolverError::ConstraintViolation { .. })
    );
    passed &= rejected && runtime_rejected;
    details.push(format!("|H|≥1 rejected = {}", rejected && runtime_rejected));

    match sharpness_run() {
        Err(e) => {
            passed = false;
            details.push(format!("H=0.95 run failed: {e}"));
        }
        Ok(run) => {
            let width = 0.95f64.atanh();
            let (lo, hi) = run.report.barrier;
            let width_ok = (hi - width).abs() < 1e-12 && (lo + width).abs() < 1e-12;
            let mut worst = 0.0f64;
            for r in &run.report.records {
                worst = worst.max(lo - r.inf_u).max(r.sup_u - hi);
            }
            let ok = width_ok && worst <= 1e-8;
            passed &= ok;
            details.push(format!(
                "H=0.95 completed, barrier ±{width:.3} respected (excess {worst:.1e})"
            ));
        }
    }
    CriterionResult {
        name: NAME,
        passed,
        details: details.join("; "),
    }
}
