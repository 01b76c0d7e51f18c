//! Closed-form and independently integrated reference solutions: umbilic
//! caps, the rotationally equivariant profile ODE, and a catalog of constant
//! curvature reference surfaces. These are the ground truth the discrete
//! solver is checked against.

use nalgebra::{Matrix2, Vector2};

use crate::error::{Result, SolverError};
use crate::mesh::{parametric_mesh, TriMesh};
use crate::model::{check_mean_curvature, AmbientPoint};
use crate::section::{ball_alpha, cylinder_mean_curvature, ring_coeffs_at, RingCoeffs, H_GEOM};

/// Totally umbilic cap of mean curvature `H` over the asymptotic circle of
/// Euclidean radius `rho0`: a Euclidean sphere cap centered at
/// `(0, 0, a)` with `a = H·ρ₀/√(1-H²)`, written as a radial graph.
#[derive(Debug, Clone, Copy)]
pub struct CapSolution {
    pub h: f64,
    pub rho0: f64,
}

impl CapSolution {
    pub fn new(h: f64, rho0: f64) -> Result<Self> {
        check_mean_curvature(h)?;
        debug_assert!(rho0 > 0.0);
        Ok(Self { h, rho0 })
    }

    /// Sphere-center height `a = H·ρ₀/√(1-H²)`.
    pub fn center_height(&self) -> f64 {
        self.h * self.rho0 / (1.0 - self.h * self.h).sqrt()
    }

    /// Radial-graph height `u(α) = log(a cos α + √(a² cos²α + ρ₀²))`.
    pub fn profile(&self, alpha: f64) -> f64 {
        let a = self.center_height();
        let ca = alpha.cos();
        (a * ca + (a * a * ca * ca + self.rho0 * self.rho0).sqrt()).ln()
    }

    /// Chart derivative `u'(α) = -a sin α / √(a² cos²α + ρ₀²)`.
    pub fn profile_derivative(&self, alpha: f64) -> f64 {
        let a = self.center_height();
        let (sa, ca) = alpha.sin_cos();
        -a * sa / (a * a * ca * ca + self.rho0 * self.rho0).sqrt()
    }

    /// σ-norm of the chart gradient, `|u'(α)| cos α`.
    pub fn gradient_norm(&self, alpha: f64) -> f64 {
        self.profile_derivative(alpha).abs() * alpha.cos()
    }
}

/// Exact radial-graph height of the CMC-`H` cap; errors on `|H| ≥ 1`.
pub fn umbilic_cap(h: f64, rho0: f64, alpha: f64) -> Result<f64> {
    Ok(CapSolution::new(h, rho0)?.profile(alpha))
}

// ---------------------------------------------------------------------------
// equivariant profile ODE
// ---------------------------------------------------------------------------

/// Rotationally invariant profile `u(α)` of the graph equation, produced by
/// the shooting solver.
#[derive(Debug, Clone)]
pub struct EquivariantProfile {
    pub theta: f64,
    pub h: f64,
    /// Boundary value `u(alpha_max) = c`.
    pub c: f64,
    pub alphas: Vec<f64>,
    pub values: Vec<f64>,
}

impl EquivariantProfile {
    pub fn value_at(&self, alpha: f64) -> f64 {
        // samples are caller-chosen; linear interpolation between them
        match self
            .alphas
            .binary_search_by(|a| a.partial_cmp(&alpha).unwrap())
        {
            Ok(i) => self.values[i],
            Err(0) => self.values[0],
            Err(i) if i >= self.alphas.len() => *self.values.last().unwrap(),
            Err(i) => {
                let (a0, a1) = (self.alphas[i - 1], self.alphas[i]);
                let t = (alpha - a0) / (a1 - a0);
                self.values[i - 1] * (1.0 - t) + self.values[i] * t
            }
        }
    }
}

/// Second derivative `u''` isolated from the β-independent reduction of the
/// graph equation at angle `alpha`.
fn profile_rhs(_alpha: f64, up: f64, h_target: f64, rc: &RingCoeffs) -> f64 {
    let uhat = Vector2::new(up, 0.0) + rc.xi;
    let raised = rc.sigma_inv * uhat;
    let w2 = rc.f + uhat.dot(&raised);
    let w = w2.sqrt();
    let a_mat: Matrix2<f64> = rc.sigma_inv - raised * raised.transpose() / w2;
    let sym_e12 = 0.5 * (rc.grad_xi.m12 + rc.grad_xi.m21);
    let m12 = sym_e12;
    let m22 = -rc.christoffel[1] * up;
    let g = rc.acc.dot(&raised);
    let c_w = (rc.f + w2) / w2;
    // residual = -(T - c_W G)/W - 2H with T = A:(Hess + symE);
    // solve T = c_W G - 2 H W for the u'' inside M11.
    rc.christoffel[0] * up
        + (c_w * g - 2.0 * h_target * w - 2.0 * a_mat.m12 * m12 - a_mat.m22 * m22) / a_mat.m11
}

/// Dormand-Prince 5(4) adaptive step for the 2-vector system
/// `(u, u')' = (u', profile_rhs)`. Integrates from `a0` to `a1` and reports
/// the state at `a1`.
fn dopri5_segment(
    mut y: [f64; 2],
    a0: f64,
    a1: f64,
    h_target: f64,
    theta: f64,
    tol: f64,
) -> std::result::Result<[f64; 2], String> {
    const A21: f64 = 1.0 / 5.0;
    const A31: f64 = 3.0 / 40.0;
    const A32: f64 = 9.0 / 40.0;
    const A41: f64 = 44.0 / 45.0;
    const A42: f64 = -56.0 / 15.0;
    const A43: f64 = 32.0 / 9.0;
    const A51: f64 = 19372.0 / 6561.0;
    const A52: f64 = -25360.0 / 2187.0;
    const A53: f64 = 64448.0 / 6561.0;
    const A54: f64 = -212.0 / 729.0;
    const A61: f64 = 9017.0 / 3168.0;
    const A62: f64 = -355.0 / 33.0;
    const A63: f64 = 46732.0 / 5247.0;
    const A64: f64 = 49.0 / 176.0;
    const A65: f64 = -5103.0 / 18656.0;
    const B1: f64 = 35.0 / 384.0;
    const B3: f64 = 500.0 / 1113.0;
    const B4: f64 = 125.0 / 192.0;
    const B5: f64 = -2187.0 / 6784.0;
    const B6: f64 = 11.0 / 84.0;
    // embedded 4th-order weights
    const E1: f64 = 5179.0 / 57600.0;
    const E3: f64 = 7571.0 / 16695.0;
    const E4: f64 = 393.0 / 640.0;
    const E5: f64 = -92097.0 / 339200.0;
    const E6: f64 = 187.0 / 2100.0;
    const E7: f64 = 1.0 / 40.0;
    const C: [f64; 6] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0];

    let rhs = |a: f64, y: &[f64; 2]| -> [f64; 2] {
        let rc = ring_coeffs_at(a, theta, H_GEOM);
        [y[1], profile_rhs(a, y[1], h_target, &rc)]
    };

    let mut a = a0;
    let mut h = ((a1 - a0) / 16.0).min(0.02).max(1e-8);
    let mut steps = 0usize;
    while a < a1 - 1e-15 {
        steps += 1;
        if steps > 2_000_000 {
            return Err(format!("step limit reached at alpha = {a}"));
        }
        if a + h > a1 {
            h = a1 - a;
        }
        let k1 = rhs(a, &y);
        let y2 = [y[0] + h * A21 * k1[0], y[1] + h * A21 * k1[1]];
        let k2 = rhs(a + C[1] * h, &y2);
        let y3 = [
            y[0] + h * (A31 * k1[0] + A32 * k2[0]),
            y[1] + h * (A31 * k1[1] + A32 * k2[1]),
        ];
        let k3 = rhs(a + C[2] * h, &y3);
        let y4 = [
            y[0] + h * (A41 * k1[0] + A42 * k2[0] + A43 * k3[0]),
            y[1] + h * (A41 * k1[1] + A42 * k2[1] + A43 * k3[1]),
        ];
        let k4 = rhs(a + C[3] * h, &y4);
        let y5 = [
            y[0] + h * (A51 * k1[0] + A52 * k2[0] + A53 * k3[0] + A54 * k4[0]),
            y[1] + h * (A51 * k1[1] + A52 * k2[1] + A53 * k3[1] + A54 * k4[1]),
        ];
        let k5 = rhs(a + C[4] * h, &y5);
        let y6 = [
            y[0] + h * (A61 * k1[0] + A62 * k2[0] + A63 * k3[0] + A64 * k4[0] + A65 * k5[0]),
            y[1] + h * (A61 * k1[1] + A62 * k2[1] + A63 * k3[1] + A64 * k4[1] + A65 * k5[1]),
        ];
        let k6 = rhs(a + C[5] * h, &y6);
        let y_new = [
            y[0] + h * (B1 * k1[0] + B3 * k3[0] + B4 * k4[0] + B5 * k5[0] + B6 * k6[0]),
            y[1] + h * (B1 * k1[1] + B3 * k3[1] + B4 * k4[1] + B5 * k5[1] + B6 * k6[1]),
        ];
        let k7 = rhs(a + h, &y_new);
        let y_low = [
            y[0] + h * (E1 * k1[0] + E3 * k3[0] + E4 * k4[0] + E5 * k5[0] + E6 * k6[0] + E7 * k7[0]),
            y[1] + h * (E1 * k1[1] + E3 * k3[1] + E4 * k4[1] + E5 * k5[1] + E6 * k6[1] + E7 * k7[1]),
        ];
        let scale0 = tol * (1.0 + y[0].abs());
        let scale1 = tol * (1.0 + y[1].abs());
        let err = (((y_new[0] - y_low[0]) / scale0).powi(2)
            + ((y_new[1] - y_low[1]) / scale1).powi(2))
        .sqrt()
        .max(1e-30)
            / 2.0f64.sqrt();
        if err <= 1.0 {
            a += h;
            y = y_new;
        }
        let factor = (0.9 * err.powf(-0.2)).clamp(0.2, 5.0);
        h = (h * factor).max(1e-12);
        if !y.iter().all(|v| v.is_finite()) {
            return Err(format!("state diverged at alpha = {a}"));
        }
    }
    Ok(y)
}

/// Integrates the regular profile from the pole (series start, `u'(0) = 0`,
/// `u''(0) = -H`) out to `alpha_max`, with states recorded at `samples`.
fn integrate_profile(
    theta: f64,
    h_target: f64,
    u0: f64,
    samples: &[f64],
    tol: f64,
) -> std::result::Result<Vec<f64>, String> {
    let a_start = 1e-4;
    let mut out = Vec::with_capacity(samples.len());
    let mut y = [u0 - 0.5 * h_target * a_start * a_start, -h_target * a_start];
    let mut a = a_start;
    for &target in samples {
        if target <= a_start {
            out.push(u0 - 0.5 * h_target * target * target);
            continue;
        }
        y = dopri5_segment(y, a, target, h_target, theta, tol)?;
        a = target;
        out.push(y[0]);
    }
    Ok(out)
}

/// Solves the two-point problem `u'(0) = 0`, `u(alpha_max) = c` by shooting
/// on the pole value, with a Dormand-Prince 5(4) integrator at tolerance
/// `1e-10`. Independent of the 2D grid machinery.
pub fn equivariant_ode_solve(
    theta: f64,
    h: f64,
    c: f64,
    alpha_max: f64,
    samples: &[f64],
) -> Result<EquivariantProfile> {
    check_mean_curvature(h)?;
    debug_assert!(alpha_max > 0.0 && alpha_max < std::f64::consts::FRAC_PI_2);
    let tol = 1e-10;
    let shoot = |mu: f64| -> std::result::Result<f64, String> {
        let end = integrate_profile(theta, h, mu, &[alpha_max], tol)?;
        Ok(end[0] - c)
    };
    let mk_err = |reason: String, lo: f64, hi: f64, flo: f64, fhi: f64| SolverError::Shooting {
        reason,
        lo,
        hi,
        flo,
        fhi,
    };
    // secant iteration on the pole value; the translation structure of the
    // equation makes this converge essentially in one step
    let mut mu0 = c;
    let mut mu1 = c + h.atanh();
    let mut f0 = shoot(mu0).map_err(|e| mk_err(e, mu0, mu1, f64::NAN, f64::NAN))?;
    let mut f1 = shoot(mu1).map_err(|e| mk_err(e, mu0, mu1, f0, f64::NAN))?;
    let mut converged = f1.abs() < 1e-12;
    for _ in 0..40 {
        if converged {
            break;
        }
        if (f1 - f0).abs() < 1e-16 {
            return Err(mk_err("flat secant".into(), mu0, mu1, f0, f1));
        }
        let mu2 = mu1 - f1 * (mu1 - mu0) / (f1 - f0);
        let f2 = shoot(mu2).map_err(|e| mk_err(e, mu0, mu1, f0, f1))?;
        mu0 = mu1;
        f0 = f1;
        mu1 = mu2;
        f1 = f2;
        converged = f1.abs() < 1e-12;
    }
    if !converged {
        return Err(mk_err("secant did not converge".into(), mu0, mu1, f0, f1));
    }
    let values = integrate_profile(theta, h, mu1, samples, tol)
        .map_err(|e| mk_err(e, mu1, mu1, f1, f1))?;
    Ok(EquivariantProfile {
        theta,
        h,
        c,
        alphas: samples.to_vec(),
        values,
    })
}

// ---------------------------------------------------------------------------
// reference surfaces
// ---------------------------------------------------------------------------

/// A reference mesh with its exact mean curvature (with respect to the
/// mesh's stored winding).
#[derive(Debug, Clone)]
pub struct ReferenceSurface {
    pub name: String,
    pub mesh: TriMesh,
    pub exact_h: f64,
}

/// Deterministic catalog of constant curvature test meshes: the totally
/// geodesic hemisphere (H = 0), the horosphere `z = 1` oriented upward
/// (H = 1) and equidistant tubes about the axis at several distances,
/// oriented toward the axis (H = (coth d + tanh d)/2).
pub fn reference_surfaces() -> Vec<ReferenceSurface> {
    let mut out = Vec::new();
    out.push(ReferenceSurface {
        name: "hemisphere".into(),
        mesh: parametric_mesh(
            |a, b| AmbientPoint::new(a.sin() * b.cos(), a.sin() * b.sin(), a.cos()),
            (0.05, 1.35),
            48,
            (0.0, 2.0 * std::f64::consts::PI),
            96,
            true,
            true,
        ),
        exact_h: 0.0,
    });
    out.push(ReferenceSurface {
        name: "horosphere".into(),
        mesh: parametric_mesh(
            |r, b| AmbientPoint::new(r * b.cos(), r * b.sin(), 1.0),
            (0.02, 0.9),
            48,
            (0.0, 2.0 * std::f64::consts::PI),
            96,
            true,
            true,
        ),
        exact_h: 1.0,
    });
    for d in [0.5, 1.0, 2.0, 4.0] {
        let alpha_d = ball_alpha(d);
        let (sa, ca) = alpha_d.sin_cos();
        // patch extents scaled to unit hyperbolic size: the flow direction
        // moves at speed cosh d, the circle direction at sinh d
        let t_half = 0.5 / d.cosh();
        let b_half = 0.5 / d.sinh();
        out.push(ReferenceSurface {
            name: format!("tube_d{d}"),
            mesh: parametric_mesh(
                |t, b| {
                    let e = t.exp();
                    AmbientPoint::new(e * sa * b.cos(), e * sa * b.sin(), e * ca)
                },
                (-t_half, t_half),
                48,
                (-b_half, b_half),
                48,
                false,
                true,
            ),
            exact_h: cylinder_mean_curvature(d),
        });
    }
    out
}
