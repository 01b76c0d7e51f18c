//! The Killing section (unit hemisphere), the orbit projection, and the
//! submersion-geometry coefficients that enter the graph operator.
//!
//! The section `P` is the unit hemisphere `{|q| = 1, z > 0}`, charted by the
//! polar angle `alpha` from the pole `o = (0,0,1)` and the azimuth `beta`.
//! Every screw-motion orbit crosses `P` exactly once, transversally; the
//! projection sends `q` to its orbit's crossing point. `P` carries the
//! submersion metric `σ` (horizontal projection of `g` against the Killing
//! field), which together with
//!
//! * `f = 1/|Y|²`,
//! * the Killing covector `ξ_i = f·g(v_i, Y)` and its covariant derivative,
//! * the orbit-acceleration covector `df/(2f)`,
//! * the frame non-integrability term `γ`,
//!
//! forms the per-node coefficient cache of a [`SectionGrid`]. All of these
//! depend on `alpha` only, so the cache is stored per ring. The equator
//! `alpha = π/2` is the asymptotic boundary and is never a grid node.

use nalgebra::{Matrix2, Vector2, Vector3};

use crate::model::{flow_differential, killing_vector, metric_inner, AmbientPoint, KillingMotion};

/// Default step for geometric finite differencing of the closed-form
/// coefficients (chart coordinates).
pub const H_GEOM: f64 = 1e-5;

/// Polar chart coordinates on the section.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SectionCoords {
    /// Polar angle from the pole, in `[0, π/2)`.
    pub alpha: f64,
    /// Azimuth in `[0, 2π)`.
    pub beta: f64,
}

impl SectionCoords {
    pub fn new(alpha: f64, beta: f64) -> Self {
        Self { alpha, beta }
    }
}

/// Chart embedding of the section: `(sin α cos β, sin α sin β, cos α)`.
pub fn section_point(c: SectionCoords) -> AmbientPoint {
    let (sa, ca) = c.alpha.sin_cos();
    let (sb, cb) = c.beta.sin_cos();
    AmbientPoint::new(sa * cb, sa * sb, ca)
}

/// Orbit projection: returns the chart coordinates of the unique crossing of
/// the orbit of `q` with the section, and the flow parameter `s = log|q|`.
pub fn project(q: AmbientPoint, motion: KillingMotion) -> (SectionCoords, f64) {
    let r = q.vec().norm();
    let s = r.ln();
    // undo the dilation, then the rotation accumulated over flow time s
    let p = q.vec() / r;
    let (sn, cs) = (-motion.theta * s).sin_cos();
    let x = cs * p.x - sn * p.y;
    let y = sn * p.x + cs * p.y;
    let alpha = p.z.clamp(-1.0, 1.0).acos();
    let beta = y.atan2(x).rem_euclid(2.0 * std::f64::consts::PI);
    (SectionCoords::new(alpha, beta), s)
}

/// Geodesic radius of the chart disk `{α ≤ a}` seen from the pole in the
/// section's induced metric: `cosh ρ = 1/cos α`, inverted here as
/// `α = arccos(1/cosh ρ)`.
pub fn ball_alpha(rho: f64) -> f64 {
    debug_assert!(rho > 0.0);
    (1.0 / rho.cosh()).acos()
}

/// Equidistant tube about the axis geodesic at hyperbolic distance `d`.
#[derive(Debug, Clone, Copy)]
pub struct KillingCylinder {
    pub d: f64,
}

impl KillingCylinder {
    pub fn new(d: f64) -> Self {
        debug_assert!(d > 0.0);
        Self { d }
    }

    /// Chart angle of the tube: the cone `{α = arccos(sech d)}`.
    pub fn alpha(&self) -> f64 {
        ball_alpha(self.d)
    }

    pub fn mean_curvature(&self) -> f64 {
        cylinder_mean_curvature(self.d)
    }
}

/// Exact mean curvature (average convention, inner normal) of the
/// distance-`d` tube about the axis: `(coth d + tanh d)/2`. Always at least
/// `tanh d`.
pub fn cylinder_mean_curvature(d: f64) -> f64 {
    debug_assert!(d > 0.0);
    0.5 * (1.0 / d.tanh() + d.tanh())
}

// ---------------------------------------------------------------------------
// closed-form coefficients (alpha-only)
// ---------------------------------------------------------------------------

/// `σ = diag(sec²α, tan²α / D)` with `D = 1 + θ² sin²α`.
fn sigma_closed(alpha: f64, theta: f64) -> Matrix2<f64> {
    let (sa, ca) = alpha.sin_cos();
    let d = 1.0 + theta * theta * sa * sa;
    Matrix2::new(1.0 / (ca * ca), 0.0, 0.0, sa * sa / (ca * ca * d))
}

/// `f = cos²α / D`.
fn f_closed(alpha: f64, theta: f64) -> f64 {
    let (sa, ca) = alpha.sin_cos();
    ca * ca / (1.0 + theta * theta * sa * sa)
}

/// Killing covector `ξ = (0, θ sin²α / D)`; the `alpha` component vanishes
/// identically and is stored as an exact zero.
fn xi_closed(alpha: f64, theta: f64) -> Vector2<f64> {
    let sa = alpha.sin();
    Vector2::new(0.0, theta * sa * sa / (1.0 + theta * theta * sa * sa))
}

/// Submersion metric at a chart point: closed form away from the equator.
pub fn submersion_metric(c: SectionCoords, motion: KillingMotion) -> Matrix2<f64> {
    sigma_closed(c.alpha, motion.theta)
}

/// Submersion metric computed from its definition `σ(v,w) = g(v^h, w^h)`
/// by numerically differentiating the chart embedding and projecting out the
/// Killing direction. Validation path; the production cache uses the closed
/// form.
pub fn submersion_metric_numeric(c: SectionCoords, motion: KillingMotion, h: f64) -> Matrix2<f64> {
    let p = section_point(c);
    let tangent = |k: usize| -> Vector3<f64> {
        let mut cp = c;
        let mut cm = c;
        match k {
            0 => {
                cp.alpha += h;
                cm.alpha -= h;
            }
            _ => {
                cp.beta += h;
                cm.beta -= h;
            }
        }
        (section_point(cp).vec() - section_point(cm).vec()) / (2.0 * h)
    };
    let kd = killing_vector(p, motion);
    let horiz = |v: Vector3<f64>| -> Vector3<f64> {
        v - kd.y * (metric_inner(p, v, kd.y) / kd.norm2)
    };
    let va = horiz(tangent(0));
    let vb = horiz(tangent(1));
    Matrix2::new(
        metric_inner(p, va, va),
        metric_inner(p, va, vb),
        metric_inner(p, va, vb),
        metric_inner(p, vb, vb),
    )
}

/// Orbit-acceleration covector `a_i = ∂_i f/(2f)`; only the `alpha`
/// component is nonzero. Central differencing of the closed-form `f`.
pub fn acceleration_term(c: SectionCoords, motion: KillingMotion) -> Vector2<f64> {
    acceleration_term_with_step(c, motion, H_GEOM)
}

pub fn acceleration_term_with_step(c: SectionCoords, motion: KillingMotion, h: f64) -> Vector2<f64> {
    let th = motion.theta;
    let df = (f_closed(c.alpha + h, th) - f_closed(c.alpha - h, th)) / (2.0 * h);
    Vector2::new(df / (2.0 * f_closed(c.alpha, th)), 0.0)
}

/// Direct numeric evaluation of the orbit acceleration `Π_*∇̄_{D_0} D_0`,
/// expressed as a chart covector. Independent of the `grad f / (2f)`
/// identity; used to validate it.
pub fn acceleration_term_numeric(c: SectionCoords, motion: KillingMotion, h: f64) -> Vector2<f64> {
    let p = section_point(c);
    // D_0 = f^{1/2} Y as an ambient field; covariant derivative along itself.
    let d0 = |q: Vector3<f64>| -> Vector3<f64> {
        let ap = AmbientPoint::from_vec(q);
        let kd = killing_vector(ap, motion);
        kd.y * kd.f.sqrt()
    };
    let v0 = d0(p.vec());
    let mut deriv = Vector3::zeros();
    for j in 0..3 {
        let mut qp = p.vec();
        let mut qm = p.vec();
        qp[j] += h;
        qm[j] -= h;
        deriv += (d0(qp) - d0(qm)) * (v0[j] / (2.0 * h));
    }
    // Christoffel correction of the half-space metric.
    let z = p.z;
    let gamma = Vector3::new(
        -(v0.x * v0.z + v0.z * v0.x) / z,
        -(v0.y * v0.z + v0.z * v0.y) / z,
        (v0.x * v0.x + v0.y * v0.y - v0.z * v0.z) / z,
    );
    let acc = deriv + gamma;
    // chart components: pair with the chart tangents, then raise nothing --
    // the covector is <acc, v_i>.
    let tangent = |k: usize| -> Vector3<f64> {
        let mut cp = c;
        let mut cm = c;
        if k == 0 {
            cp.alpha += h;
            cm.alpha -= h;
        } else {
            cp.beta += h;
            cm.beta -= h;
        }
        (section_point(cp).vec() - section_point(cm).vec()) / (2.0 * h)
    };
    Vector2::new(
        metric_inner(p, acc, tangent(0)),
        metric_inner(p, acc, tangent(1)),
    )
}

/// Frame non-integrability term `γ_{ki} = f^{1/2}⟨[D_k, D_i], D_0⟩` from
/// numeric brackets of the basic (horizontally lifted, flow-pushed) fields.
/// Antisymmetric by construction check; vanishes identically for `θ = 0`.
pub fn gamma_terms(c: SectionCoords, motion: KillingMotion) -> Matrix2<f64> {
    gamma_terms_with_step(c, motion, H_GEOM)
}

pub fn gamma_terms_with_step(c: SectionCoords, motion: KillingMotion, h: f64) -> Matrix2<f64> {
    let p = section_point(c);
    // Basic field D_k at an ambient point: project to the section, take the
    // chart tangent, lift horizontally, push back by the flow differential.
    let basic = |q: Vector3<f64>, k: usize| -> Vector3<f64> {
        let aq = AmbientPoint::from_vec(q);
        let (cc, s) = project(aq, motion);
        let mut cp = cc;
        let mut cm = cc;
        if k == 0 {
            cp.alpha += h;
            cm.alpha -= h;
        } else {
            cp.beta += h;
            cm.beta -= h;
        }
        let v = (section_point(cp).vec() - section_point(cm).vec()) / (2.0 * h);
        let sp = section_point(cc);
        let kd = killing_vector(sp, motion);
        let lift = v - kd.y * (metric_inner(sp, v, kd.y) / kd.norm2);
        flow_differential(s, lift, motion)
    };
    // coordinate bracket [D_k, D_i]^m = D_k^j ∂_j D_i^m - D_i^j ∂_j D_k^m
    let bracket = |k: usize, i: usize| -> Vector3<f64> {
        let jac = |which: usize| -> nalgebra::Matrix3<f64> {
            let mut j = nalgebra::Matrix3::zeros();
            for col in 0..3 {
                let mut qp = p.vec();
                let mut qm = p.vec();
                qp[col] += h;
                qm[col] -= h;
                j.set_column(col, &((basic(qp, which) - basic(qm, which)) / (2.0 * h)));
            }
            j
        };
        let dk = basic(p.vec(), k);
        let di = basic(p.vec(), i);
        jac(i) * dk - jac(k) * di
    };
    let kd = killing_vector(p, motion);
    let d0 = kd.y * kd.f.sqrt();
    let fsqrt = kd.f.sqrt();
    let g12 = fsqrt * metric_inner(p, bracket(0, 1), d0);
    let g21 = fsqrt * metric_inner(p, bracket(1, 0), d0);
    Matrix2::new(0.0, g12, g21, 0.0)
}

/// Closed-form value of `γ_{αβ} = -ξ_β'(α)`, the curl of the Killing
/// covector; equals the bracket definition.
pub fn gamma_alpha_beta_closed(alpha: f64, theta: f64, h: f64) -> f64 {
    -(xi_closed(alpha + h, theta).y - xi_closed(alpha - h, theta).y) / (2.0 * h)
}

// ---------------------------------------------------------------------------
// grid
// ---------------------------------------------------------------------------

/// Cached coefficients at one interior ring (alpha = const).
#[derive(Debug, Clone)]
pub struct RingCoeffs {
    pub sigma: Matrix2<f64>,
    pub sigma_inv: Matrix2<f64>,
    pub f: f64,
    /// Covector `df = (f'(α), 0)`.
    pub df: Vector2<f64>,
    /// Acceleration covector `df/(2f)`.
    pub acc: Vector2<f64>,
    /// Killing covector `ξ`.
    pub xi: Vector2<f64>,
    /// Covariant derivative `E_{ki} = ∇^σ_i ξ_k` (row k, column i).
    pub grad_xi: Matrix2<f64>,
    /// `γ_{αβ}` (the antisymmetric part of `E`, also `-ξ_β'`).
    pub gamma: f64,
    /// Christoffel symbols of σ: `(Γ^α_{αα}, Γ^α_{ββ}, Γ^β_{αβ})`.
    pub christoffel: [f64; 3],
}

/// Full coefficient set at one interior latitude. Closed forms for `σ`, `f`
/// and `ξ`; centered differences with step `h_geom` for everything derived.
pub fn ring_coeffs_at(alpha: f64, theta: f64, h_geom: f64) -> RingCoeffs {
    let sigma = sigma_closed(alpha, theta);
    let dsig_aa =
        (sigma_closed(alpha + h_geom, theta).m11 - sigma_closed(alpha - h_geom, theta).m11)
            / (2.0 * h_geom);
    let dsig_bb =
        (sigma_closed(alpha + h_geom, theta).m22 - sigma_closed(alpha - h_geom, theta).m22)
            / (2.0 * h_geom);
    let f = f_closed(alpha, theta);
    let dfa = (f_closed(alpha + h_geom, theta) - f_closed(alpha - h_geom, theta)) / (2.0 * h_geom);
    let xi = xi_closed(alpha, theta);
    let dxi_b =
        (xi_closed(alpha + h_geom, theta).y - xi_closed(alpha - h_geom, theta).y) / (2.0 * h_geom);
    let christoffel = [
        dsig_aa / (2.0 * sigma.m11),
        -dsig_bb / (2.0 * sigma.m11),
        dsig_bb / (2.0 * sigma.m22),
    ];
    // E_{ki} = ∇_i ξ_k: only the off-diagonal entries survive.
    let e_ba = dxi_b - christoffel[2] * xi.y; // ∇_α ξ_β
    let e_ab = -christoffel[2] * xi.y; // ∇_β ξ_α
    let grad_xi = Matrix2::new(0.0, e_ab, e_ba, 0.0);
    let sigma_inv = Matrix2::new(1.0 / sigma.m11, 0.0, 0.0, 1.0 / sigma.m22);
    RingCoeffs {
        sigma,
        sigma_inv,
        f,
        df: Vector2::new(dfa, 0.0),
        acc: Vector2::new(dfa / (2.0 * f), 0.0),
        xi,
        grad_xi,
        gamma: e_ab - e_ba,
        christoffel,
    }
}

/// Structured polar grid on the section with per-ring coefficient caches.
///
/// Ring `i` sits at `α_i = i·h_α` for `i = 0..n_alpha`; ring 0 is the single
/// pole node, the outermost ring is `alpha_max < π/2`. The azimuth is
/// uniform with periodic wrap. Node storage is pole-first, then rings in
/// order, `beta`-major within a ring.
#[derive(Debug, Clone)]
pub struct SectionGrid {
    pub motion: KillingMotion,
    pub n_alpha: usize,
    pub n_beta: usize,
    pub alpha_max: f64,
    pub h_alpha: f64,
    pub h_beta: f64,
    pub h_geom: f64,
    rings: Vec<RingCoeffs>,
}

impl SectionGrid {
    pub fn new(motion: KillingMotion, n_alpha: usize, n_beta: usize, alpha_max: f64) -> Self {
        Self::with_geom_step(motion, n_alpha, n_beta, alpha_max, H_GEOM)
    }

    pub fn with_geom_step(
        motion: KillingMotion,
        n_alpha: usize,
        n_beta: usize,
        alpha_max: f64,
        h_geom: f64,
    ) -> Self {
        assert!(n_alpha >= 4 && n_beta >= 8, "grid too small: {n_alpha}x{n_beta}");
        assert!(
            alpha_max > 0.0 && alpha_max < std::f64::consts::FRAC_PI_2,
            "alpha_max must lie in (0, pi/2), got {alpha_max}"
        );
        let h_alpha = alpha_max / (n_alpha - 1) as f64;
        let h_beta = 2.0 * std::f64::consts::PI / n_beta as f64;
        let th = motion.theta;
        let rings = (1..n_alpha)
            .map(|i| ring_coeffs_at(i as f64 * h_alpha, th, h_geom))
            .collect();
        Self {
            motion,
            n_alpha,
            n_beta,
            alpha_max,
            h_alpha,
            h_beta,
            h_geom,
            rings,
        }
    }

    /// Number of logical nodes: one pole plus `(n_alpha - 1)` full rings.
    pub fn node_count(&self) -> usize {
        1 + (self.n_alpha - 1) * self.n_beta
    }

    /// Flat index of a node; `ring = 0` is the pole regardless of `j`.
    pub fn idx(&self, ring: usize, j: usize) -> usize {
        if ring == 0 {
            0
        } else {
            1 + (ring - 1) * self.n_beta + j
        }
    }

    pub fn alpha(&self, ring: usize) -> f64 {
        ring as f64 * self.h_alpha
    }

    pub fn beta(&self, j: usize) -> f64 {
        j as f64 * self.h_beta
    }

    pub fn coords(&self, ring: usize, j: usize) -> SectionCoords {
        SectionCoords::new(self.alpha(ring), self.beta(j))
    }

    /// Coefficients of ring `i ≥ 1`.
    pub fn ring(&self, i: usize) -> &RingCoeffs {
        &self.rings[i - 1]
    }

    /// Largest ring index whose `alpha` does not exceed the geodesic
    /// ball radius `rho` (chart realization of the exhaustion balls).
    pub fn ball_ring(&self, rho: f64) -> usize {
        let a = ball_alpha(rho);
        let r = ((a / self.h_alpha) + 1e-9).floor() as usize;
        r.min(self.n_alpha - 1)
    }

    pub fn wrap(&self, j: isize) -> usize {
        j.rem_euclid(self.n_beta as isize) as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::flow;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn section_point_examples() {
        let p = section_point(SectionCoords::new(0.0, 1.234));
        assert_eq!((p.x, p.y, p.z), (0.0, 0.0, 1.0));

        let p = section_point(SectionCoords::new(std::f64::consts::FRAC_PI_3, 0.0));
        assert_relative_eq!(p.x, 3.0f64.sqrt() / 2.0, max_relative = 1e-15);
        assert_eq!(p.y, 0.0);
        assert_relative_eq!(p.z, 0.5, max_relative = 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let c = SectionCoords::new(rng.gen_range(0.0..1.5), rng.gen_range(0.0..6.28));
            assert_relative_eq!(section_point(c).vec().norm(), 1.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn project_inverts_flow() {
        let m = KillingMotion::new(1.0);
        let c0 = SectionCoords::new(std::f64::consts::FRAC_PI_4, 1.0);
        let q = flow(0.7, section_point(c0), m);
        let (c, s) = project(q, m);
        assert_relative_eq!(s, 0.7, max_relative = 1e-12);
        assert_relative_eq!(c.alpha, c0.alpha, max_relative = 1e-12);
        assert_relative_eq!(c.beta, c0.beta, max_relative = 1e-12);

        // round-trip through the flow
        let back = flow(s, section_point(c), m);
        assert!((back.vec() - q.vec()).norm() < 1e-12);

        // transvection on the axis
        let (c, s) = project(AmbientPoint::new(0.0, 0.0, 2.0), KillingMotion::transvection());
        assert_relative_eq!(s, 2.0f64.ln(), max_relative = 1e-15);
        assert!(c.alpha.abs() < 1e-12);
    }

    #[test]
    fn projection_is_orbit_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let q = AmbientPoint::new(
                rng.gen_range(-2.0..2.0),
                rng.gen_range(-2.0..2.0),
                rng.gen_range(0.1..3.0),
            );
            let m = KillingMotion::new(rng.gen_range(-2.0..2.0));
            let t = rng.gen_range(-1.5..1.5);
            let (c0, s0) = project(q, m);
            let (c1, s1) = project(flow(t, q, m), m);
            assert!((c0.alpha - c1.alpha).abs() < 1e-11);
            let db = (c0.beta - c1.beta).abs();
            assert!(db < 1e-10 || (db - 2.0 * std::f64::consts::PI).abs() < 1e-10);
            assert!((s1 - s0 - t).abs() < 1e-11);
        }
    }

    #[test]
    fn orbit_meets_section_once() {
        // f(t) = |flow(t,p)| has a single unit-modulus crossing at t = 0 for
        // p on the section: |flow(t,p)| = e^t.
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..1000 {
            let c = SectionCoords::new(rng.gen_range(0.0..1.55), rng.gen_range(0.0..6.28));
            let m = KillingMotion::new(rng.gen_range(-2.0..2.0));
            let p = section_point(c);
            let t = rng.gen_range(-3.0..3.0);
            let r = flow(t, p, m).vec().norm();
            assert_relative_eq!(r, t.exp(), max_relative = 1e-12);
        }
    }

    #[test]
    fn ball_alpha_examples() {
        assert!(ball_alpha(1e-6) < 2e-3);
        assert_relative_eq!(ball_alpha(2.0), 1.301760336046015, max_relative = 1e-12);
        let mut prev = 0.0;
        for k in 1..30 {
            let a = ball_alpha(k as f64 * 0.5);
            assert!(a > prev);
            assert!(a < std::f64::consts::FRAC_PI_2);
            prev = a;
        }
    }

    #[test]
    fn cylinder_curvature_examples() {
        assert_relative_eq!(cylinder_mean_curvature(1.0), 1.0373147207275482, max_relative = 1e-12);
        assert!((cylinder_mean_curvature(40.0) - 1.0).abs() < 1e-12);
        for d in [0.1, 0.5, 1.0, 2.0, 4.0, 8.0] {
            assert!(cylinder_mean_curvature(d) >= d.tanh());
        }
    }

    #[test]
    fn submersion_metric_identity_at_pole_and_theta_zero() {
        for th in [0.0, 1.0, 2.5] {
            let m = KillingMotion::new(th);
            let s = submersion_metric_numeric(SectionCoords::new(1e-5, 0.3), m, 1e-6);
            assert!((s.m11 - 1.0).abs() < 1e-7, "m11 = {}", s.m11);
            // beta row degenerates like sin²α at the pole; scale out
            assert!((s.m22 / (1e-5f64).sin().powi(2) - 1.0).abs() < 1e-4);
        }
        // theta = 0: sigma equals the induced hemisphere metric
        let m = KillingMotion::transvection();
        for a in [0.3, 0.9, 1.4] {
            let s = submersion_metric(SectionCoords::new(a, 0.0), m);
            assert_relative_eq!(s.m11, 1.0 / a.cos().powi(2), max_relative = 1e-13);
            assert_relative_eq!(s.m22, a.tan().powi(2), max_relative = 1e-13);
        }
    }

    #[test]
    fn submersion_metric_closed_form_matches_definition() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let c = SectionCoords::new(rng.gen_range(0.1..1.45), rng.gen_range(0.0..6.28));
            let m = KillingMotion::new(rng.gen_range(-2.0..2.0));
            let closed = submersion_metric(c, m);
            let numeric = submersion_metric_numeric(c, m, 1e-6);
            assert!((closed - numeric).norm() < 1e-8 * (1.0 + closed.norm()));
            // projection never increases norms: sigma <= induced metric
            let induced = submersion_metric_numeric(c, KillingMotion::transvection(), 1e-6);
            let v = Vector2::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let sv = (closed * v).dot(&v);
            let gv = (induced * v).dot(&v);
            assert!(sv <= gv * (1.0 + 1e-7));
        }
    }

    #[test]
    fn gamma_vanishes_for_transvection_and_is_antisymmetric() {
        let m0 = KillingMotion::transvection();
        for a in [0.2, 0.8, 1.3] {
            let g = gamma_terms(SectionCoords::new(a, 0.5), m0);
            assert!(g.norm() < 1e-9, "gamma(theta=0) = {g}");
        }
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let c = SectionCoords::new(rng.gen_range(0.15..1.4), rng.gen_range(0.0..6.28));
            let m = KillingMotion::new(rng.gen_range(-2.0..2.0));
            let g = gamma_terms(c, m);
            assert!((g.m12 + g.m21).abs() < 1e-7 * (1.0 + g.m12.abs()));
        }
    }

    #[test]
    fn gamma_matches_closed_form_with_richardson_rate() {
        let c = SectionCoords::new(std::f64::consts::FRAC_PI_4, 0.0);
        let m = KillingMotion::new(1.0);
        // exact: gamma_ab = -theta sin(2a)/D^2 = -1/2.25
        let exact = -1.0 / 2.25;
        let g1 = gamma_terms_with_step(c, m, 2e-3).m12;
        let g2 = gamma_terms_with_step(c, m, 1e-3).m12;
        let e1 = (g1 - exact).abs();
        let e2 = (g2 - exact).abs();
        let ratio = e1 / e2;
        assert!((3.0..5.5).contains(&ratio), "O(h²) ratio test failed: {ratio}");
        assert!((gamma_terms(c, m).m12 - exact).abs() < 1e-8);
    }

    #[test]
    fn acceleration_matches_direct_covariant_derivative() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..20 {
            let c = SectionCoords::new(rng.gen_range(0.15..1.3), rng.gen_range(0.0..6.28));
            let m = KillingMotion::new(rng.gen_range(-1.5..1.5));
            let closed = acceleration_term(c, m);
            let direct = acceleration_term_numeric(c, m, 1e-5);
            assert!(
                (closed - direct).norm() < 1e-5 * (1.0 + closed.norm()),
                "closed {closed:?} direct {direct:?}"
            );
        }
        // pole: vanishes
        for th in [0.0, 1.0] {
            let a = acceleration_term(SectionCoords::new(1e-9, 0.0), KillingMotion::new(th));
            assert!(a.norm() < 1e-8);
        }
        // theta = 0 closed form: f = cos²α, df/(2f) = -tan α
        let a = acceleration_term(
            SectionCoords::new(std::f64::consts::FRAC_PI_4, 0.0),
            KillingMotion::transvection(),
        );
        assert_relative_eq!(a.x, -1.0, epsilon = 1e-9);
    }

    #[test]
    fn coefficients_are_orbit_independent() {
        // recomputing sigma, f, gamma after flowing the base point changes
        // nothing: they are functions of the projected chart point only.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let c = SectionCoords::new(rng.gen_range(0.1..1.4), rng.gen_range(0.0..6.28));
            let m = KillingMotion::new(rng.gen_range(-2.0..2.0));
            let t = rng.gen_range(-2.0..2.0);
            let (c2, _) = project(flow(t, section_point(c), m), m);
            assert!((submersion_metric(c, m) - submersion_metric(c2, m)).norm() < 1e-10);
            assert!((f_closed(c.alpha, m.theta) - f_closed(c2.alpha, m.theta)).abs() < 1e-12);
        }
    }

    #[test]
    fn cached_coefficients_richardson_second_order() {
        // derivative caches converge at second order in the geometric step
        let m = KillingMotion::new(1.3);
        let a = 0.9;
        let exact_g = {
            // tiny-step proxy for the exact derivative
            gamma_alpha_beta_closed(a, 1.3, 1e-7)
        };
        for (h1, h2) in [(2e-2, 1e-2), (1e-2, 5e-3)] {
            let e1 = (gamma_alpha_beta_closed(a, 1.3, h1) - exact_g).abs();
            let e2 = (gamma_alpha_beta_closed(a, 1.3, h2) - exact_g).abs();
            let r = e1 / e2;
            assert!((3.5..4.5).contains(&r), "gamma ratio {r}");
        }
        let exact_acc = acceleration_term_with_step(SectionCoords::new(a, 0.0), m, 1e-7).x;
        let e1 = (acceleration_term_with_step(SectionCoords::new(a, 0.0), m, 2e-2).x - exact_acc).abs();
        let e2 = (acceleration_term_with_step(SectionCoords::new(a, 0.0), m, 1e-2).x - exact_acc).abs();
        let r = e1 / e2;
        assert!((3.5..4.5).contains(&r), "acc ratio {r}");
    }

    #[test]
    fn grid_caches_are_finite_and_positive() {
        for th in [0.0, 1.0] {
            let g = SectionGrid::new(KillingMotion::new(th), 24, 32, ball_alpha(3.0));
            assert_eq!(g.node_count(), 1 + 23 * 32);
            for i in 1..g.n_alpha {
                let rc = g.ring(i);
                assert!(rc.sigma.m11 > 0.0 && rc.sigma.determinant() > 0.0);
                assert!(rc.f > 0.0);
                assert!(rc.sigma.iter().all(|v| v.is_finite()));
                assert!(rc.grad_xi.iter().all(|v| v.is_finite()));
                // gamma is the antisymmetric part of grad_xi
                assert_relative_eq!(rc.gamma, rc.grad_xi.m12 - rc.grad_xi.m21, epsilon = 1e-15);
                if th == 0.0 {
                    assert_eq!(rc.xi.y, 0.0);
                    assert_eq!(rc.gamma, 0.0);
                }
            }
        }
    }

    #[test]
    fn ball_ring_realizes_sub_grids() {
        let g = SectionGrid::new(KillingMotion::transvection(), 64, 128, ball_alpha(5.0));
        let r2 = g.ball_ring(2.0);
        assert!(g.alpha(r2) <= ball_alpha(2.0) + 1e-12);
        assert!(g.alpha(r2 + 1) > ball_alpha(2.0));
        assert_eq!(g.ball_ring(5.0), 63);
        assert!(g.ball_ring(3.0) > r2);
    }
}
