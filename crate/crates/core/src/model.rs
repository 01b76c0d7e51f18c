//! The half-space model of hyperbolic 3-space and its loxodromic
//! one-parameter isometry groups.
//!
//! Points live in the upper half-space `{z > 0}` with metric
//! `g = (dx² + dy² + dz²)/z²` (sectional curvature -1). The isometry family
//! implemented here is the screw motion `φ_t = e^t · R_{θt}` — dilation about
//! the origin composed with rotation of the horizontal plane about the
//! vertical axis — which translates the axis geodesic `γ(t) = (0,0,e^t)` at
//! unit speed. `θ = 0` is a pure transvection; `θ ≠ 0` twists orbits into
//! loxodromic curves.

use nalgebra::Vector3;

use crate::error::{Result, SolverError};

/// A point of the upper half-space, curvature -1 length units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmbientPoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl AmbientPoint {
    /// Creates a point; the caller is responsible for `z > 0`.
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        debug_assert!(z > 0.0, "half-space point needs z > 0, got z = {z}");
        Self { x, y, z }
    }

    pub fn from_vec(v: Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }

    pub fn vec(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn is_valid(&self) -> bool {
        self.z > 0.0 && self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }
}

/// Screw-motion parameters: rotation rate `theta` per unit translation along
/// the axis geodesic. Finite `theta`; zero means pure transvection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KillingMotion {
    pub theta: f64,
}

impl KillingMotion {
    pub fn new(theta: f64) -> Self {
        debug_assert!(theta.is_finite());
        Self { theta }
    }

    pub fn transvection() -> Self {
        Self { theta: 0.0 }
    }
}

/// Ambient model plus solve target: motion, prescribed mean curvature H
/// (average convention, so horospheres have H = 1) and the fixed curvature
/// bound alpha = 1.
#[derive(Debug, Clone, Copy)]
pub struct ModelSpec {
    pub motion: KillingMotion,
    pub h: f64,
}

impl ModelSpec {
    /// Validates the admissible range `|H| < 1`.
    pub fn new(motion: KillingMotion, h: f64) -> Result<Self> {
        check_mean_curvature(h)?;
        Ok(Self { motion, h })
    }
}

/// Rejects mean curvatures outside the admissible open interval (-1, 1).
pub fn check_mean_curvature(h: f64) -> Result<()> {
    if !h.is_finite() || h.abs() >= 1.0 {
        return Err(SolverError::ConstraintViolation { h });
    }
    Ok(())
}

/// Applies the screw motion `φ_t(q) = e^t · R_{θt}(q)`, rotating the
/// horizontal coordinates and fixing the vertical one before scaling.
pub fn flow(t: f64, q: AmbientPoint, motion: KillingMotion) -> AmbientPoint {
    let (s, c) = (motion.theta * t).sin_cos();
    let e = t.exp();
    AmbientPoint::new(
        e * (c * q.x - s * q.y),
        e * (s * q.x + c * q.y),
        e * q.z,
    )
}

/// Differential of `flow(t, ·)` applied to a tangent vector (the flow is
/// linear in ambient coordinates).
pub fn flow_differential(t: f64, v: Vector3<f64>, motion: KillingMotion) -> Vector3<f64> {
    let (s, c) = (motion.theta * t).sin_cos();
    let e = t.exp();
    Vector3::new(e * (c * v.x - s * v.y), e * (s * v.x + c * v.y), e * v.z)
}

/// The Killing field of the screw motion together with its squared hyperbolic
/// norm and the reciprocal `f = 1/|Y|²`.
#[derive(Debug, Clone, Copy)]
pub struct KillingData {
    pub y: Vector3<f64>,
    pub norm2: f64,
    pub f: f64,
}

/// Evaluates `Y(q) = q + θ·(-y, x, 0)` and `f = 1/|Y|²_g`.
pub fn killing_vector(q: AmbientPoint, motion: KillingMotion) -> KillingData {
    let th = motion.theta;
    let y = Vector3::new(q.x - th * q.y, q.y + th * q.x, q.z);
    // |Y|²_g = (|q|² + θ²(x²+y²)) / z²; the cross term q·J(q) vanishes.
    let horiz2 = q.x * q.x + q.y * q.y;
    let norm2 = (q.vec().norm_squared() + th * th * horiz2) / (q.z * q.z);
    KillingData {
        y,
        norm2,
        f: 1.0 / norm2,
    }
}

/// Hyperbolic distance, `cosh d = 1 + |p-q|²_euc / (2 z_p z_q)`.
pub fn hyperbolic_distance(p: AmbientPoint, q: AmbientPoint) -> f64 {
    let diff2 = (p.vec() - q.vec()).norm_squared();
    let c = 1.0 + diff2 / (2.0 * p.z * q.z);
    c.max(1.0).acosh()
}

/// Metric pairing `g_q(v, w) = (v·w)/z²`.
pub fn metric_inner(q: AmbientPoint, v: Vector3<f64>, w: Vector3<f64>) -> f64 {
    v.dot(&w) / (q.z * q.z)
}

/// Inverse exponential map: the tangent vector at `p` (ambient components)
/// whose geodesic reaches `q` at time 1. Zero vector when the points
/// coincide to roundoff.
pub fn log_map(p: AmbientPoint, q: AmbientPoint) -> Vector3<f64> {
    let diff = p.vec() - q.vec();
    let qq = diff.norm_squared() / (2.0 * p.z * q.z);
    let cosh_d = 1.0 + qq;
    let d = cosh_d.max(1.0).acosh();
    if d < 1e-15 {
        return Vector3::zeros();
    }
    // grad_p of the cosh-distance, converted to the hyperbolic gradient of d.
    let mut grad_euc = diff / (p.z * q.z);
    grad_euc.z -= qq / p.z;
    let grad_hyp = grad_euc * (p.z * p.z);
    let sinh_d = (cosh_d * cosh_d - 1.0).sqrt();
    -grad_hyp * (d / sinh_d)
}

/// Components of a tangent vector at `p` in the orthonormal frame
/// `z_p·(e_x, e_y, e_z)`.
pub fn frame_coords(p: AmbientPoint, v: Vector3<f64>) -> Vector3<f64> {
    v / p.z
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_point(rng: &mut ChaCha8Rng) -> AmbientPoint {
        AmbientPoint::new(
            rng.gen_range(-2.0..2.0),
            rng.gen_range(-2.0..2.0),
            rng.gen_range(0.1..3.0),
        )
    }

    #[test]
    fn flow_is_pure_dilation_on_axis() {
        let q = AmbientPoint::new(0.0, 0.0, 1.0);
        let m = KillingMotion::transvection();
        let r = flow(2.0f64.ln(), q, m);
        assert_relative_eq!(r.z, 2.0, max_relative = 1e-15);
        assert_eq!((r.x, r.y), (0.0, 0.0));
    }

    #[test]
    fn flow_rotates_and_dilates() {
        // t = pi, theta = 1: rotation by pi composed with dilation e^pi.
        let q = AmbientPoint::new(1.0, 0.0, 1.0);
        let r = flow(std::f64::consts::PI, q, KillingMotion::new(1.0));
        let e = std::f64::consts::PI.exp();
        assert_relative_eq!(r.x, -e, max_relative = 1e-12);
        assert!(r.y.abs() < 1e-12 * e);
        assert_relative_eq!(r.z, e, max_relative = 1e-12);
    }

    #[test]
    fn flow_group_law_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let q = rand_point(&mut rng);
            let m = KillingMotion::new(rng.gen_range(-2.0..2.0));
            let (s, t) = (rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5));
            let a = flow(t, flow(s, q, m), m).vec();
            let b = flow(t + s, q, m).vec();
            assert!((a - b).norm() < 1e-12 * (1.0 + b.norm()));

            let back = flow(-1.0, flow(1.0, q, m), m).vec();
            assert!((back - q.vec()).norm() < 1e-12 * (1.0 + q.vec().norm()));
        }
    }

    #[test]
    fn flow_translates_axis_geodesic() {
        let m = KillingMotion::new(1.3);
        for s in [-1.0f64, 0.0, 0.7] {
            for t in [-0.5, 0.4, 2.0] {
                let gs = AmbientPoint::new(0.0, 0.0, s.exp());
                let moved = flow(t, gs, m);
                assert_relative_eq!(moved.z, (s + t).exp(), max_relative = 1e-13);
                assert_eq!((moved.x, moved.y), (0.0, 0.0));
            }
        }
    }

    #[test]
    fn killing_vector_on_axis_and_closed_form() {
        let kd = killing_vector(AmbientPoint::new(0.0, 0.0, 1.0), KillingMotion::new(5.0));
        assert_eq!(kd.y, Vector3::new(0.0, 0.0, 1.0));
        assert_relative_eq!(kd.f, 1.0, max_relative = 1e-15);

        // f(alpha) = cos²α / (1 + θ² sin²α) on the unit hemisphere.
        let a = std::f64::consts::FRAC_PI_3;
        let q = AmbientPoint::new(a.sin(), 0.0, a.cos());
        let kd = killing_vector(q, KillingMotion::new(1.0));
        assert_relative_eq!(kd.f, 1.0 / 7.0, max_relative = 1e-14);
        // numeric norm of Y agrees
        assert_relative_eq!(kd.norm2, metric_inner(q, kd.y, kd.y), max_relative = 1e-14);
    }

    #[test]
    fn f_is_constant_along_orbits() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let q = rand_point(&mut rng);
            let m = KillingMotion::new(rng.gen_range(-2.0..2.0));
            let t = rng.gen_range(-2.0..2.0);
            let f0 = killing_vector(q, m).f;
            let f1 = killing_vector(flow(t, q, m), m).f;
            assert!((f0 - f1).abs() <= 1e-12 * f0.max(f1));
            assert!(f0 > 0.0);
        }
    }

    #[test]
    fn distance_examples() {
        let o = AmbientPoint::new(0.0, 0.0, 1.0);
        let e = AmbientPoint::new(0.0, 0.0, std::f64::consts::E);
        assert_relative_eq!(hyperbolic_distance(o, e), 1.0, max_relative = 1e-14);

        // cosh d = 1/cos α on the unit hemisphere.
        let a = std::f64::consts::FRAC_PI_3;
        let q = AmbientPoint::new(a.sin(), 0.0, a.cos());
        assert_relative_eq!(hyperbolic_distance(o, q), 2.0f64.acosh(), max_relative = 1e-12);
        assert_relative_eq!(hyperbolic_distance(o, q), 1.3169578969248168, max_relative = 1e-12);
    }

    #[test]
    fn distance_is_flow_invariant_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let p = rand_point(&mut rng);
            let q = rand_point(&mut rng);
            let m = KillingMotion::new(rng.gen_range(-2.0..2.0));
            let t = rng.gen_range(-1.5..1.5);
            let d0 = hyperbolic_distance(p, q);
            let d1 = hyperbolic_distance(flow(t, p, m), flow(t, q, m));
            assert!((d0 - d1).abs() < 1e-12 * (1.0 + d0));
            assert!((d0 - hyperbolic_distance(q, p)).abs() < 1e-15);
        }
        let p = rand_point(&mut rng);
        assert_eq!(hyperbolic_distance(p, p), 0.0);
    }

    #[test]
    fn metric_inner_examples() {
        let ex = Vector3::new(1.0, 0.0, 0.0);
        assert_eq!(metric_inner(AmbientPoint::new(0.0, 0.0, 1.0), ex, ex), 1.0);
        assert_eq!(metric_inner(AmbientPoint::new(0.0, 0.0, 2.0), ex, ex), 0.25);
    }

    #[test]
    fn metric_inner_cauchy_schwarz() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..200 {
            let q = rand_point(&mut rng);
            let v = Vector3::new(rng.gen(), rng.gen(), rng.gen());
            let w = Vector3::new(rng.gen(), rng.gen(), rng.gen());
            let lhs = metric_inner(q, v, w).powi(2);
            let rhs = metric_inner(q, v, v) * metric_inner(q, w, w);
            assert!(lhs <= rhs * (1.0 + 1e-12));
        }
    }

    #[test]
    fn log_map_reproduces_distance_and_axis() {
        let p = AmbientPoint::new(0.0, 0.0, 1.0);
        let q = AmbientPoint::new(0.0, 0.0, 2.0);
        let v = log_map(p, q);
        assert_relative_eq!(v.z, 2.0f64.ln(), max_relative = 1e-12);
        assert!(v.x.abs() < 1e-15 && v.y.abs() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..100 {
            let p = rand_point(&mut rng);
            let q = rand_point(&mut rng);
            let v = log_map(p, q);
            let d = hyperbolic_distance(p, q);
            assert_relative_eq!(metric_inner(p, v, v).sqrt(), d, max_relative = 1e-10);
        }
    }

    #[test]
    fn model_spec_validates_mean_curvature() {
        assert!(ModelSpec::new(KillingMotion::transvection(), 0.5).is_ok());
        assert!(matches!(
            ModelSpec::new(KillingMotion::transvection(), 1.0),
            Err(SolverError::ConstraintViolation { .. })
        ));
        assert!(ModelSpec::new(KillingMotion::transvection(), -1.2).is_err());
    }
}
