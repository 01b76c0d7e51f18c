//! Assembly of the discrete CMC Killing-graph operator, its analytic
//! linearization, and the graph embedding.
//!
//! The residual at an interior node is
//!
//! ```text
//! R[u] = -(1/W)·(A : (Hess_σ u + sym ∇ξ) - ((f+W²)/W²)·⟨df/2f, û⟩_σ) - 2H
//! ```
//!
//! with `û = du + ξ`, `W² = f + |û|²_σ` and `A = σ⁻¹ - û♯⊗û♯/W²`. The sign
//! is fixed so that `R = 2(H_η[u] - H)` where `H_η` is the graph's mean
//! curvature toward the side opposite the Killing field; constants are then
//! exact discrete solutions for `H = 0` and the upward umbilic caps solve
//! positive `H`.
//!
//! Interior derivatives are second-order centered differences on the polar
//! grid with periodic azimuth. The pole is closed by trigonometric moments
//! of the first ring: in the local Cartesian chart the metric is Euclidean
//! and Christoffels vanish at the pole, so the gradient and Hessian there
//! come from the first and second azimuthal harmonics of `u - u_pole`.

use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};
use rayon::prelude::*;

use crate::mesh::TriMesh;
use crate::model::flow;
use crate::section::{section_point, RingCoeffs, SectionGrid};

/// Scalar field on a [`SectionGrid`]: the flow-parameter height of the
/// Killing graph at every node.
#[derive(Debug, Clone)]
pub struct GraphField {
    pub grid: Arc<SectionGrid>,
    pub u: Vec<f64>,
}

impl GraphField {
    pub fn constant(grid: Arc<SectionGrid>, c: f64) -> Self {
        let n = grid.node_count();
        Self {
            grid,
            u: vec![c; n],
        }
    }

    /// Builds a field from a chart function (the pole value is `f(0, 0)`).
    pub fn from_fn<F: Fn(f64, f64) -> f64>(grid: Arc<SectionGrid>, f: F) -> Self {
        let mut u = Vec::with_capacity(grid.node_count());
        u.push(f(0.0, 0.0));
        for i in 1..grid.n_alpha {
            for j in 0..grid.n_beta {
                u.push(f(grid.alpha(i), grid.beta(j)));
            }
        }
        Self { grid, u }
    }

    pub fn value(&self, ring: usize, j: usize) -> f64 {
        self.u[self.grid.idx(ring, j)]
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().all(|v| v.is_finite())
    }

    /// Adds a constant (flow translation of the graph).
    pub fn shift(&self, c: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            u: self.u.iter().map(|v| v + c).collect(),
        }
    }
}

/// Active sub-domain for a Dirichlet solve: interior nodes are the pole and
/// rings `1..boundary_ring`; ring `boundary_ring` carries the data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BallDomain {
    pub boundary_ring: usize,
}

impl BallDomain {
    pub fn full(grid: &SectionGrid) -> Self {
        Self {
            boundary_ring: grid.n_alpha - 1,
        }
    }

    /// Number of interior unknowns.
    pub fn interior_count(&self, grid: &SectionGrid) -> usize {
        1 + (self.boundary_ring - 1) * grid.n_beta
    }
}

/// Pointwise operator data at an interior node.
#[derive(Debug, Clone, Copy, Default)]
pub struct NodeState {
    /// Chart gradient `du` (Cartesian components at the pole).
    pub du: Vector2<f64>,
    /// Graph covector `û = du + ξ`.
    pub uhat: Vector2<f64>,
    pub w: f64,
    pub a_mat: Matrix2<f64>,
    pub residual: f64,
    /// Smallest eigenvalue of `A`.
    pub min_eig: f64,
}

/// Assembled residual and per-node diagnostics over a ball domain.
#[derive(Debug, Clone)]
pub struct OperatorState {
    pub domain: BallDomain,
    pub nodes: Vec<NodeState>,
    pub residual_inf: f64,
    pub min_ellipticity: f64,
    /// `A` positive definite and `W² ≥ f` at every node.
    pub elliptic: bool,
}

impl OperatorState {
    /// Sup of `|du|_σ` over interior nodes with ring index `≤ ring_limit`.
    pub fn sup_gradient(&self, grid: &SectionGrid, ring_limit: usize) -> f64 {
        let mut sup: f64 = self.nodes[0].du.norm(); // pole, Euclidean frame
        let max_ring = ring_limit.min(self.domain.boundary_ring - 1);
        for i in 1..=max_ring {
            let sinv = grid.ring(i).sigma_inv;
            for j in 0..grid.n_beta {
                let du = self.nodes[grid.idx(i, j)].du;
                sup = sup.max((du.dot(&(sinv * du))).sqrt());
            }
        }
        sup
    }
}

#[derive(Debug, Clone, Copy)]
struct CorePartials {
    d_uhat: Vector2<f64>,
    d_m11: f64,
    d_m12: f64,
    d_m22: f64,
}

#[derive(Debug, Clone, Copy)]
struct CoreEval {
    state: NodeState,
}

/// Pointwise residual from the covector `uhat`, symmetric tensor `M` and
/// the ring coefficients. Shared by ring nodes and the pole (with Euclidean
/// pole coefficients).
fn eval_core(
    sinv: &Matrix2<f64>,
    f: f64,
    acc: &Vector2<f64>,
    du: Vector2<f64>,
    xi: &Vector2<f64>,
    m11: f64,
    m12: f64,
    m22: f64,
    h_target: f64,
) -> CoreEval {
    let uhat = du + xi;
    let raised = sinv * uhat;
    let w2 = f + uhat.dot(&raised);
    let w = w2.sqrt();
    let a_mat = sinv - raised * raised.transpose() / w2;
    let t = a_mat.m11 * m11 + 2.0 * a_mat.m12 * m12 + a_mat.m22 * m22;
    let g = acc.dot(&raised);
    let c_w = (f + w2) / w2;
    let residual = -(t - c_w * g) / w - 2.0 * h_target;
    let half_tr = 0.5 * (a_mat.m11 + a_mat.m22);
    let disc = (half_tr * half_tr - a_mat.determinant()).max(0.0);
    let min_eig = half_tr - disc.sqrt();
    CoreEval {
        state: NodeState {
            du,
            uhat,
            w,
            a_mat,
            residual,
            min_eig,
        },
    }
}

/// Analytic partial derivatives of the pointwise residual with respect to
/// the covector components and the symmetric tensor entries.
fn eval_core_partials(
    sinv: &Matrix2<f64>,
    f: f64,
    acc: &Vector2<f64>,
    du: Vector2<f64>,
    xi: &Vector2<f64>,
    m11: f64,
    m12: f64,
    m22: f64,
) -> CorePartials {
    let uhat = du + xi;
    let raised = sinv * uhat;
    let w2 = f + uhat.dot(&raised);
    let w = w2.sqrt();
    let a_mat = sinv - raised * raised.transpose() / w2;
    let m = Matrix2::new(m11, m12, m12, m22);
    let t = a_mat.m11 * m11 + 2.0 * a_mat.m12 * m12 + a_mat.m22 * m22;
    let g = acc.dot(&raised);
    let c_w = (f + w2) / w2;
    let bk = t - c_w * g;

    let m_up = m * raised;
    let sinv_m_up = sinv * m_up;
    let up_m_up = raised.dot(&m_up);
    let sinv_acc = sinv * acc;

    let mut d_uhat = Vector2::zeros();
    for k in 0..2 {
        let dt = -2.0 * sinv_m_up[k] / w2 + up_m_up * 2.0 * raised[k] / (w2 * w2);
        let dcw = -2.0 * f * raised[k] / (w2 * w2);
        let dg = sinv_acc[k];
        let dw = raised[k] / w;
        let dbk = dt - dcw * g - c_w * dg;
        d_uhat[k] = -dbk / w + bk * dw / w2;
    }
    CorePartials {
        d_uhat,
        d_m11: -a_mat.m11 / w,
        d_m12: -2.0 * a_mat.m12 / w,
        d_m22: -a_mat.m22 / w,
    }
}

const POLE_COEFF_SINV: Matrix2<f64> = Matrix2::new(1.0, 0.0, 0.0, 1.0);
const POLE_COEFF_ACC: Vector2<f64> = Vector2::new(0.0, 0.0);
const POLE_COEFF_XI: Vector2<f64> = Vector2::new(0.0, 0.0);

/// Gradient/Hessian primitives at the pole from first-ring moments of
/// `u - u_pole`.
struct PoleMoments {
    ux: f64,
    uy: f64,
    hxx: f64,
    hxy: f64,
    hyy: f64,
}

fn pole_moments(u: &GraphField) -> PoleMoments {
    let grid = &u.grid;
    let nb = grid.n_beta;
    let u0 = u.u[0];
    let (mut m0, mut c1, mut s1, mut c2, mut s2) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for j in 0..nb {
        let d = u.u[grid.idx(1, j)] - u0;
        let b = grid.beta(j);
        m0 += d;
        c1 += d * b.cos();
        s1 += d * b.sin();
        c2 += d * (2.0 * b).cos();
        s2 += d * (2.0 * b).sin();
    }
    let n = nb as f64;
    m0 /= n;
    c1 *= 2.0 / n;
    s1 *= 2.0 / n;
    c2 *= 2.0 / n;
    s2 *= 2.0 / n;
    let ha = grid.h_alpha;
    let ha2 = ha * ha;
    PoleMoments {
        ux: c1 / ha,
        uy: s1 / ha,
        hxx: 2.0 * (m0 + c2) / ha2,
        hyy: 2.0 * (m0 - c2) / ha2,
        hxy: 2.0 * s2 / ha2,
    }
}

/// Finite-difference primitives at ring node `(i, j)`.
#[inline]
fn ring_primitives(u: &GraphField, i: usize, j: usize) -> (f64, f64, f64, f64, f64) {
    let grid = &u.grid;
    let jm = grid.wrap(j as isize - 1);
    let jp = grid.wrap(j as isize + 1);
    let c = u.u[grid.idx(i, j)];
    let n = u.u[grid.idx(i + 1, j)];
    let s = u.u[grid.idx(i - 1, j)];
    let e = u.u[grid.idx(i, jp)];
    let w = u.u[grid.idx(i, jm)];
    let ne = u.u[grid.idx(i + 1, jp)];
    let nw = u.u[grid.idx(i + 1, jm)];
    let se = u.u[grid.idx(i - 1, jp)];
    let sw = u.u[grid.idx(i - 1, jm)];
    let ha = grid.h_alpha;
    let hb = grid.h_beta;
    let ua = (n - s) / (2.0 * ha);
    let ub = (e - w) / (2.0 * hb);
    let uaa = (n - 2.0 * c + s) / (ha * ha);
    let ubb = (e - 2.0 * c + w) / (hb * hb);
    let uab = (ne - nw - se + sw) / (4.0 * ha * hb);
    (ua, ub, uaa, ubb, uab)
}

#[inline]
fn ring_tensor(rc: &RingCoeffs, ua: f64, ub: f64, uaa: f64, ubb: f64, uab: f64) -> (f64, f64, f64) {
    let sym_e = 0.5 * (rc.grad_xi.m12 + rc.grad_xi.m21);
    let m11 = uaa - rc.christoffel[0] * ua;
    let m22 = ubb - rc.christoffel[1] * ua;
    let m12 = uab - rc.christoffel[2] * ub + sym_e;
    (m11, m12, m22)
}

/// Assembles the residual field and per-node operator state on `domain`.
/// Boundary-ring values of `u` enter the stencils as data. Non-finite input
/// is rejected by assertion; ellipticity loss is flagged, not fatal.
pub fn assemble_residual(u: &GraphField, h_target: f64, domain: BallDomain) -> OperatorState {
    let grid = &u.grid;
    assert!(
        domain.boundary_ring >= 2 && domain.boundary_ring <= grid.n_alpha - 1,
        "boundary ring {} out of range",
        domain.boundary_ring
    );
    debug_assert!(u.is_finite(), "non-finite graph field");
    let nb = grid.n_beta;
    let m = domain.boundary_ring - 1;
    let mut nodes = vec![NodeState::default(); 1 + m * nb];
    let (pole_nodes, ring_nodes) = nodes.split_at_mut(1);

    ring_nodes
        .par_chunks_mut(nb)
        .enumerate()
        .for_each(|(i0, chunk)| {
            let i = i0 + 1;
            let rc = grid.ring(i);
            for (j, out) in chunk.iter_mut().enumerate() {
                let (ua, ub, uaa, ubb, uab) = ring_primitives(u, i, j);
                let (m11, m12, m22) = ring_tensor(rc, ua, ub, uaa, ubb, uab);
                *out = eval_core(
                    &rc.sigma_inv,
                    rc.f,
                    &rc.acc,
                    Vector2::new(ua, ub),
                    &rc.xi,
                    m11,
                    m12,
                    m22,
                    h_target,
                )
                .state;
            }
        });

    let pm = pole_moments(u);
    pole_nodes[0] = eval_core(
        &POLE_COEFF_SINV,
        1.0,
        &POLE_COEFF_ACC,
        Vector2::new(pm.ux, pm.uy),
        &POLE_COEFF_XI,
        pm.hxx,
        pm.hxy,
        pm.hyy,
        h_target,
    )
    .state;

    let residual_inf = nodes
        .iter()
        .map(|n| n.residual.abs())
        .fold(0.0f64, f64::max);
    let min_ellipticity = nodes.iter().map(|n| n.min_eig).fold(f64::INFINITY, f64::min);
    let elliptic = min_ellipticity > 0.0 && nodes.iter().all(|n| n.w.is_finite() && n.w > 0.0);
    OperatorState {
        domain,
        nodes,
        residual_inf,
        min_ellipticity,
        elliptic,
    }
}

// ---------------------------------------------------------------------------
// Jacobian
// ---------------------------------------------------------------------------

/// Periodic tridiagonal coupling block between two rings (or within one):
/// row `j` couples to columns `j-1`, `j`, `j+1` mod `n_beta`.
#[derive(Debug, Clone)]
pub struct Band3 {
    pub sub: Vec<f64>,
    pub diag: Vec<f64>,
    pub sup: Vec<f64>,
}

impl Band3 {
    fn zeros(n: usize) -> Self {
        Self {
            sub: vec![0.0; n],
            diag: vec![0.0; n],
            sup: vec![0.0; n],
        }
    }

    /// y += B x (periodic index wrap).
    pub fn apply_add(&self, x: &[f64], y: &mut [f64]) {
        let n = self.diag.len();
        for j in 0..n {
            let jm = (j + n - 1) % n;
            let jp = (j + 1) % n;
            y[j] += self.sub[j] * x[jm] + self.diag[j] * x[j] + self.sup[j] * x[jp];
        }
    }
}

/// Sparse Jacobian of the discrete operator on a ball domain: a
/// block-tridiagonal system in ring index with a bordered pole row/column.
/// Row support is exactly the 9-point stencil (plus the pole closure).
#[derive(Debug, Clone)]
pub struct BlockTridiag {
    pub n_beta: usize,
    /// Number of interior rings.
    pub m: usize,
    pub a00: f64,
    pub pole_row: Vec<f64>,
    pub pole_col: Vec<f64>,
    /// Within-ring couplings, `diag[i-1]` for ring `i`.
    pub diag: Vec<Band3>,
    /// Couplings of ring `i ≥ 2` to ring `i-1`: `lower[i-2]`.
    pub lower: Vec<Band3>,
    /// Couplings of ring `i ≤ m-1` to ring `i+1`: `upper[i-1]`.
    pub upper: Vec<Band3>,
}

impl BlockTridiag {
    pub fn unknowns(&self) -> usize {
        1 + self.m * self.n_beta
    }

    /// Dense matrix-vector product, for verification and the iterative
    /// solver.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let nb = self.n_beta;
        let mut y = vec![0.0; self.unknowns()];
        y[0] = self.a00 * x[0];
        for j in 0..nb {
            y[0] += self.pole_row[j] * x[1 + j];
        }
        for i in 1..=self.m {
            let rows = 1 + (i - 1) * nb;
            let (head, tail) = {
                let (a, b) = x.split_at(rows);
                (a, b)
            };
            let xi_ring = &tail[..nb];
            let yslice = &mut y[rows..rows + nb];
            self.diag[i - 1].apply_add(xi_ring, yslice);
            if i == 1 {
                for j in 0..nb {
                    yslice[j] += self.pole_col[j] * head[0];
                }
            } else {
                let xprev = &x[rows - nb..rows];
                self.lower[i - 2].apply_add(xprev, yslice);
            }
            if i < self.m {
                let xnext = &x[rows + nb..rows + 2 * nb];
                self.upper[i - 1].apply_add(xnext, yslice);
            }
        }
        y
    }
}

/// Analytic linearization of [`assemble_residual`] with the same stencil.
pub fn assemble_jacobian(u: &GraphField, _h_target: f64, domain: BallDomain) -> BlockTridiag {
    let grid = &u.grid;
    let nb = grid.n_beta;
    let m = domain.boundary_ring - 1;
    let ha = grid.h_alpha;
    let hb = grid.h_beta;

    let mut diag = vec![Band3::zeros(nb); m];
    let mut lower = vec![Band3::zeros(nb); m.saturating_sub(1)];
    let mut upper = vec![Band3::zeros(nb); m.saturating_sub(1)];
    let mut pole_col = vec![0.0; nb];

    struct RingOut {
        diag: Band3,
        lower: Option<Band3>,
        upper: Option<Band3>,
        pole_col: Option<Vec<f64>>,
    }

    let outs: Vec<RingOut> = (1..=m)
        .into_par_iter()
        .map(|i| {
            let rc = grid.ring(i);
            let mut d = Band3::zeros(nb);
            let mut lo = Band3::zeros(nb);
            let mut up = Band3::zeros(nb);
            let mut pc = vec![0.0; nb];
            for j in 0..nb {
                let (ua, ub, uaa, ubb, uab) = ring_primitives(u, i, j);
                let (m11, m12, m22) = ring_tensor(rc, ua, ub, uaa, ubb, uab);
                let p = eval_core_partials(
                    &rc.sigma_inv,
                    rc.f,
                    &rc.acc,
                    Vector2::new(ua, ub),
                    &rc.xi,
                    m11,
                    m12,
                    m22,
                );
                // chain rule through the covariant tensor entries
                let dr_dua =
                    p.d_uhat[0] - p.d_m11 * rc.christoffel[0] - p.d_m22 * rc.christoffel[1];
                let dr_dub = p.d_uhat[1] - p.d_m12 * rc.christoffel[2];
                let dr_duaa = p.d_m11;
                let dr_dubb = p.d_m22;
                let dr_duab = p.d_m12;

                let w_n = dr_dua / (2.0 * ha) + dr_duaa / (ha * ha);
                let w_s = -dr_dua / (2.0 * ha) + dr_duaa / (ha * ha);
                let w_e = dr_dub / (2.0 * hb) + dr_dubb / (hb * hb);
                let w_w = -dr_dub / (2.0 * hb) + dr_dubb / (hb * hb);
                let w_c = -2.0 * dr_duaa / (ha * ha) - 2.0 * dr_dubb / (hb * hb);
                let w_x = dr_duab / (4.0 * ha * hb);

                d.diag[j] = w_c;
                d.sup[j] = w_e;
                d.sub[j] = w_w;
                if i == 1 {
                    // the three pole-ward stencil values coincide; corners cancel
                    pc[j] = w_s;
                } else {
                    lo.diag[j] = w_s;
                    lo.sup[j] = -w_x;
                    lo.sub[j] = w_x;
                }
                if i < m {
                    up.diag[j] = w_n;
                    up.sup[j] = w_x;
                    up.sub[j] = -w_x;
                }
                // couplings to the Dirichlet ring (i == m) are dropped
            }
            RingOut {
                diag: d,
                lower: (i >= 2).then_some(lo),
                upper: (i < m).then_some(up),
                pole_col: (i == 1).then_some(pc),
            }
        })
        .collect();

    for (i0, out) in outs.into_iter().enumerate() {
        diag[i0] = out.diag;
        if let Some(lo) = out.lower {
            lower[i0 - 1] = lo;
        }
        if let Some(up) = out.upper {
            upper[i0] = up;
        }
        if let Some(pc) = out.pole_col {
            pole_col = pc;
        }
    }

    // pole row
    let pm = pole_moments(u);
    let p = eval_core_partials(
        &POLE_COEFF_SINV,
        1.0,
        &POLE_COEFF_ACC,
        Vector2::new(pm.ux, pm.uy),
        &POLE_COEFF_XI,
        pm.hxx,
        pm.hxy,
        pm.hyy,
    );
    let ha2 = ha * ha;
    let n = nb as f64;
    let a00 = (p.d_m11 + p.d_m22) * (-2.0 / ha2);
    let mut pole_row = vec![0.0; nb];
    for (j, e) in pole_row.iter_mut().enumerate() {
        let b = grid.beta(j);
        let dm0 = 1.0 / n;
        let dc1 = 2.0 * b.cos() / n;
        let ds1 = 2.0 * b.sin() / n;
        let dc2 = 2.0 * (2.0 * b).cos() / n;
        let ds2 = 2.0 * (2.0 * b).sin() / n;
        *e = p.d_m11 * 2.0 * (dm0 + dc2) / ha2
            + p.d_m22 * 2.0 * (dm0 - dc2) / ha2
            + p.d_m12 * 2.0 * ds2 / ha2
            + p.d_uhat[0] * dc1 / ha
            + p.d_uhat[1] * ds1 / ha;
    }

    BlockTridiag {
        n_beta: nb,
        m,
        a00,
        pole_row,
        pole_col,
        diag,
        lower,
        upper,
    }
}

// ---------------------------------------------------------------------------
// embedding
// ---------------------------------------------------------------------------

/// Structured triangulation of the Killing graph in half-space coordinates.
/// Vertices follow node order (pole, then rings alpha-major, beta within);
/// faces are wound so that the oriented normal is the one opposing the
/// Killing field, matching the solver's curvature convention.
pub fn embed_graph(u: &GraphField) -> TriMesh {
    let grid = &u.grid;
    let nb = grid.n_beta;
    let mut vertices = Vec::with_capacity(grid.node_count());
    vertices.push(flow(u.u[0], section_point(grid.coords(0, 0)), grid.motion));
    for i in 1..grid.n_alpha {
        for j in 0..nb {
            let q = section_point(grid.coords(i, j));
            vertices.push(flow(u.u[grid.idx(i, j)], q, grid.motion));
        }
    }
    let mut faces = Vec::with_capacity(nb * (2 * grid.n_alpha - 3));
    let vid = |i: usize, j: usize| -> u32 {
        if i == 0 {
            0
        } else {
            (1 + (i - 1) * nb + j % nb) as u32
        }
    };
    for j in 0..nb {
        faces.push([0, vid(1, j + 1), vid(1, j)]);
    }
    for i in 1..grid.n_alpha - 1 {
        for j in 0..nb {
            faces.push([vid(i, j), vid(i, j + 1), vid(i + 1, j)]);
            faces.push([vid(i, j + 1), vid(i + 1, j + 1), vid(i + 1, j)]);
        }
    }
    TriMesh { vertices, faces }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::mean_curvature_oracle;
    use crate::model::KillingMotion;
    use crate::oracles::CapSolution;
    use crate::section::ball_alpha;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn test_grid(theta: f64, na: usize, nb: usize) -> Arc<SectionGrid> {
        Arc::new(SectionGrid::new(
            KillingMotion::new(theta),
            na,
            nb,
            ball_alpha(3.0),
        ))
    }

    #[test]
    fn constants_are_exact_minimal_solutions() {
        for theta in [0.0, 1.0, 2.5] {
            let grid = test_grid(theta, 24, 32);
            let u = GraphField::constant(grid.clone(), 1.234);
            let st = assemble_residual(&u, 0.0, BallDomain::full(&grid));
            assert_eq!(st.residual_inf, 0.0, "theta = {theta}");
            assert!(st.elliptic);
        }
    }

    #[test]
    fn residual_is_translation_invariant() {
        let grid = test_grid(1.0, 20, 32);
        // dyadic node values and shift: the shifted stencil differences are
        // then exact and the residuals bitwise equal
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let scale = f64::powi(2.0, -20);
        let u = GraphField {
            grid: grid.clone(),
            u: (0..grid.node_count())
                .map(|_| (rng.gen_range(-512i32..512) as f64) * scale)
                .collect(),
        };
        let shifted = u.shift(1.75);
        let dom = BallDomain::full(&grid);
        let s0 = assemble_residual(&u, 0.3, dom);
        let s1 = assemble_residual(&shifted, 0.3, dom);
        for (a, b) in s0.nodes.iter().zip(&s1.nodes) {
            assert_eq!(a.residual, b.residual);
        }
        // generic (non-representable) shift: equality to roundoff
        let shifted = u.shift(1.7);
        let s2 = assemble_residual(&shifted, 0.3, dom);
        for (a, b) in s0.nodes.iter().zip(&s2.nodes) {
            assert!((a.residual - b.residual).abs() < 1e-10);
        }
    }

    #[test]
    fn cap_residual_converges_second_order() {
        let cap = CapSolution::new(0.5, 1.0).unwrap();
        let mut sup = Vec::new();
        for n in [17usize, 33, 65] {
            let grid = Arc::new(SectionGrid::new(
                KillingMotion::transvection(),
                n,
                4 * (n - 1),
                ball_alpha(2.0),
            ));
            let u = GraphField::from_fn(grid.clone(), |a, _| cap.profile(a));
            let st = assemble_residual(&u, 0.5, BallDomain::full(&grid));
            sup.push(st.residual_inf);
        }
        assert!(sup[0] / sup[1] > 3.0, "ratios {sup:?}");
        assert!(sup[1] / sup[2] > 3.0, "ratios {sup:?}");
    }

    #[test]
    fn ellipticity_state_bounds() {
        let grid = test_grid(1.0, 20, 32);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = GraphField {
            grid: grid.clone(),
            u: (0..grid.node_count())
                .map(|_| rng.gen_range(-0.3..0.3))
                .collect(),
        };
        let st = assemble_residual(&u, 0.2, BallDomain::full(&grid));
        assert!(st.elliptic);
        for (k, node) in st.nodes.iter().enumerate() {
            assert!(node.min_eig > 0.0, "node {k}");
            let ring = if k == 0 {
                None
            } else {
                Some(1 + (k - 1) / grid.n_beta)
            };
            let f = ring.map_or(1.0, |i| grid.ring(i).f);
            assert!(node.w * node.w >= f * (1.0 - 1e-14));
        }
    }

    fn directional_defect(u: &GraphField, dom: BallDomain, v: &[f64], eps: f64) -> f64 {
        let jac = assemble_jacobian(u, 0.3, dom);
        let r0 = assemble_residual(u, 0.3, dom);
        let jv = jac.apply(v);
        let mut up = u.clone();
        for (k, vk) in v.iter().enumerate() {
            up.u[k] += eps * vk;
        }
        let r1 = assemble_residual(&up, 0.3, dom);
        let mut worst = 0.0f64;
        for k in 0..v.len() {
            let fd = (r1.nodes[k].residual - r0.nodes[k].residual) / eps;
            worst = worst.max((fd - jv[k]).abs());
        }
        worst
    }

    #[test]
    fn jacobian_matches_directional_derivative() {
        for theta in [0.0, 1.0] {
            let grid = test_grid(theta, 16, 24);
            let mut rng = ChaCha8Rng::seed_from_u64(9);
            let u = GraphField {
                grid: grid.clone(),
                u: (0..grid.node_count())
                    .map(|_| rng.gen_range(-0.2..0.2))
                    .collect(),
            };
            let dom = BallDomain::full(&grid);
            let n_int = dom.interior_count(&grid);
            // rough direction: the defect is pure finite-difference
            // truncation, so it must shrink linearly with eps
            let v: Vec<f64> = (0..n_int).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let e1 = directional_defect(&u, dom, &v, 1e-6);
            let e2 = directional_defect(&u, dom, &v, 5e-7);
            assert!(
                e2 <= 0.65 * e1 + 1e-9,
                "theta={theta}: defect not O(eps): {e1} -> {e2}"
            );
        }
    }

    #[test]
    fn jacobian_entries_match_finite_differences() {
        for theta in [0.0, 1.3] {
            let grid = test_grid(theta, 8, 12);
            let mut rng = ChaCha8Rng::seed_from_u64(13);
            let u = GraphField {
                grid: grid.clone(),
                u: (0..grid.node_count())
                    .map(|_| rng.gen_range(-0.3..0.3))
                    .collect(),
            };
            let dom = BallDomain::full(&grid);
            let n = dom.interior_count(&grid);
            let jac = assemble_jacobian(&u, 0.3, dom);
            let eps = 1e-5;
            let mut worst = 0.0f64;
            for c in 0..n {
                let mut up = u.clone();
                let mut um = u.clone();
                up.u[c] += eps;
                um.u[c] -= eps;
                let rp = assemble_residual(&up, 0.3, dom);
                let rm = assemble_residual(&um, 0.3, dom);
                let mut e = vec![0.0; n];
                e[c] = 1.0;
                let col = jac.apply(&e);
                for r in 0..n {
                    let fd = (rp.nodes[r].residual - rm.nodes[r].residual) / (2.0 * eps);
                    worst = worst.max((fd - col[r]).abs());
                }
            }
            assert!(worst < 1e-5, "theta={theta}: entrywise defect {worst}");
        }
    }

    #[test]
    fn jacobian_rows_respect_stencil_sparsity() {
        let grid = test_grid(1.0, 10, 12);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let u = GraphField {
            grid: grid.clone(),
            u: (0..grid.node_count())
                .map(|_| rng.gen_range(-0.3..0.3))
                .collect(),
        };
        let dom = BallDomain::full(&grid);
        let n = dom.interior_count(&grid);
        let nb = grid.n_beta;
        let jac = assemble_jacobian(&u, 0.2, dom);
        let neighbor = |r: usize, c: usize| -> bool {
            if r == 0 || c == 0 {
                // pole closure couples the pole with the whole first ring
                let other = r.max(c);
                return other == 0 || (other - 1) / nb == 0;
            }
            let (ri, rj) = (1 + (r - 1) / nb, (r - 1) % nb);
            let (ci, cj) = (1 + (c - 1) / nb, (c - 1) % nb);
            let dj = (rj as isize - cj as isize).rem_euclid(nb as isize);
            ri.abs_diff(ci) <= 1 && (dj <= 1 || dj == nb as isize - 1)
        };
        for c in 0..n {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            let col = jac.apply(&e);
            for (r, val) in col.iter().enumerate() {
                if *val != 0.0 {
                    assert!(neighbor(r, c), "entry ({r},{c}) outside stencil");
                }
            }
        }
    }

    #[test]
    fn jacobian_symmetric_about_geodesic_leaf() {
        // At u = const, H = 0, theta = 0 the linearization is self-adjoint
        // with respect to the weight sqrt(det sigma)/sqrt(f); check the
        // weighted matrix is symmetric to discretization accuracy.
        let grid = Arc::new(SectionGrid::new(
            KillingMotion::transvection(),
            14,
            16,
            ball_alpha(2.0),
        ));
        let dom = BallDomain::full(&grid);
        let u = GraphField::constant(grid.clone(), 0.0);
        let jac = assemble_jacobian(&u, 0.0, dom);
        let n = dom.interior_count(&grid);
        // dense reconstruction via unit vectors
        let mut dense = vec![vec![0.0; n]; n];
        for c in 0..n {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            let col = jac.apply(&e);
            for r in 0..n {
                dense[r][c] = col[r];
            }
        }
        let weight = |k: usize| -> f64 {
            if k == 0 {
                // pole cell: cartesian frame, unit weight density
                return (std::f64::consts::PI * grid.h_alpha * grid.h_alpha / 4.0)
                    / (grid.h_alpha * grid.h_beta);
            }
            let i = 1 + (k - 1) / grid.n_beta;
            let rc = grid.ring(i);
            rc.sigma.determinant().sqrt() / rc.f.sqrt()
        };
        let mut asym = 0.0f64;
        let mut scale = 0.0f64;
        for r in 0..n {
            for c in 0..n {
                let a = weight(r) * dense[r][c];
                let b = weight(c) * dense[c][r];
                asym = asym.max((a - b).abs());
                scale = scale.max(a.abs());
            }
        }
        // first-order symmetric: the defect vanishes with the grid
        assert!(
            asym < 0.2 * scale,
            "weighted asymmetry {asym} vs scale {scale}"
        );
    }

    #[test]
    fn embed_constant_graph_is_hemisphere() {
        let grid = test_grid(0.0, 16, 24);
        let mesh = embed_graph(&GraphField::constant(grid.clone(), 0.0));
        assert_eq!(mesh.vertex_count(), grid.node_count());
        assert_eq!(mesh.euler_characteristic(), 1); // disk
        for v in &mesh.vertices {
            assert!((v.vec().norm() - 1.0).abs() < 1e-14);
            assert!(v.z > 0.0);
        }
        // u = c is the flow image of u = 0
        let mesh_c = embed_graph(&GraphField::constant(grid.clone(), 0.4));
        for (a, b) in mesh.vertices.iter().zip(&mesh_c.vertices) {
            let moved = flow(0.4, *a, grid.motion);
            assert!((moved.vec() - b.vec()).norm() < 1e-14);
        }
    }

    #[test]
    fn embedded_cap_has_prescribed_curvature() {
        let cap = CapSolution::new(0.5, 1.0).unwrap();
        let grid = Arc::new(SectionGrid::new(
            KillingMotion::transvection(),
            48,
            96,
            ball_alpha(2.0),
        ));
        let u = GraphField::from_fn(grid.clone(), |a, _| cap.profile(a));
        let mesh = embed_graph(&u);
        let est = mean_curvature_oracle(&mesh);
        let interior = mesh.interior_mask(2);
        let err = est.max_error(0.5, &interior).unwrap();
        assert!(err < 6e-3, "cap oracle error {err}");
    }
}
