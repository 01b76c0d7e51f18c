//! Linear sub-solvers for the Newton step.
//!
//! The Jacobian of the 9-point polar stencil is block tridiagonal in the
//! ring index (periodic tridiagonal blocks of azimuth size) bordered by the
//! pole row/column. The default solver is a direct block-Thomas elimination
//! with dense LU pivoting per ring block; a preconditioned BiCGSTAB is
//! available as a configuration option.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Result, SolverError};
use crate::operator::{Band3, BlockTridiag};

/// Linear solver selection for the Newton step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LinearSolverKind {
    /// Structured direct factorization (default).
    Direct,
    /// BiCGSTAB with a ring (line-Jacobi) preconditioner.
    Iterative { rtol: f64, max_iter: usize },
}

impl Default for LinearSolverKind {
    fn default() -> Self {
        LinearSolverKind::Direct
    }
}

pub fn solve(jac: &BlockTridiag, rhs: &[f64], kind: LinearSolverKind) -> Result<Vec<f64>> {
    match kind {
        LinearSolverKind::Direct => solve_direct(jac, rhs),
        LinearSolverKind::Iterative { rtol, max_iter } => solve_bicgstab(jac, rhs, rtol, max_iter),
    }
}

fn band_to_dense(b: &Band3) -> DMatrix<f64> {
    let n = b.diag.len();
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        let jm = (j + n - 1) % n;
        let jp = (j + 1) % n;
        m[(j, jm)] += b.sub[j];
        m[(j, j)] += b.diag[j];
        m[(j, jp)] += b.sup[j];
    }
    m
}

/// Row-sparse product `C · M` where `C` is a periodic tridiagonal band.
fn band_times_dense(c: &Band3, m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = c.diag.len();
    let cols = m.ncols();
    let mut out = DMatrix::zeros(n, cols);
    out.row_iter_mut().enumerate().for_each(|(j, mut row)| {
        let jm = (j + n - 1) % n;
        let jp = (j + 1) % n;
        for k in 0..cols {
            row[k] = c.sub[j] * m[(jm, k)] + c.diag[j] * m[(j, k)] + c.sup[j] * m[(jp, k)];
        }
    });
    out
}

fn band_times_vec(c: &Band3, v: &[f64]) -> Vec<f64> {
    let n = c.diag.len();
    (0..n)
        .map(|j| {
            let jm = (j + n - 1) % n;
            let jp = (j + 1) % n;
            c.sub[j] * v[jm] + c.diag[j] * v[j] + c.sup[j] * v[jp]
        })
        .collect()
}

/// LU solve with the right-hand-side columns distributed over the thread
/// pool; the factorization itself is shared read-only.
fn lu_solve_matrix(
    lu: &nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    rhs: DMatrix<f64>,
) -> Option<DMatrix<f64>> {
    let n = rhs.nrows();
    let cols = rhs.ncols();
    let chunk = 32.max(cols / (4 * rayon::current_num_threads().max(1)).max(1));
    let col_blocks: Vec<Option<DMatrix<f64>>> = (0..cols)
        .collect::<Vec<_>>()
        .par_chunks(chunk)
        .map(|idxs| {
            let mut block = DMatrix::zeros(n, idxs.len());
            for (bi, &c) in idxs.iter().enumerate() {
                block.set_column(bi, &rhs.column(c));
            }
            lu.solve(&block)
        })
        .collect();
    let mut out = DMatrix::zeros(n, cols);
    let mut at = 0usize;
    for b in col_blocks {
        let b = b?;
        for c in 0..b.ncols() {
            out.set_column(at + c, &b.column(c));
        }
        at += b.ncols();
    }
    Some(out)
}

/// Block-Thomas elimination over (pole, ring 1, ..., ring m).
pub fn solve_direct(jac: &BlockTridiag, rhs: &[f64]) -> Result<Vec<f64>> {
    let nb = jac.n_beta;
    let m = jac.m;
    assert_eq!(rhs.len(), jac.unknowns());
    if jac.a00.abs() < 1e-300 {
        return Err(SolverError::LinearSolve("singular pole pivot".into()));
    }
    let w0: Vec<f64> = jac.pole_row.iter().map(|v| v / jac.a00).collect();
    let g0 = rhs[0] / jac.a00;

    // forward elimination
    let mut w_blocks: Vec<Option<DMatrix<f64>>> = Vec::with_capacity(m);
    let mut g_blocks: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut prev_w: Option<DMatrix<f64>> = None;
    for i in 1..=m {
        let mut d = band_to_dense(&jac.diag[i - 1]);
        let mut r: Vec<f64> = rhs[1 + (i - 1) * nb..1 + i * nb].to_vec();
        if i == 1 {
            // rank-one pole border
            for row in 0..nb {
                let c = jac.pole_col[row];
                if c != 0.0 {
                    for col in 0..nb {
                        d[(row, col)] -= c * w0[col];
                    }
                    r[row] -= c * g0;
                }
            }
        } else {
            let ci = &jac.lower[i - 2];
            let pw = prev_w.as_ref().expect("previous block present");
            let correction = band_times_dense(ci, pw);
            d -= &correction;
            let cg = band_times_vec(ci, &g_blocks[i - 2]);
            for (rj, c) in r.iter_mut().zip(cg) {
                *rj -= c;
            }
        }
        let lu = d.lu();
        let g = lu
            .solve(&DMatrix::from_column_slice(nb, 1, &r))
            .ok_or_else(|| SolverError::LinearSolve(format!("singular block at ring {i}")))?;
        g_blocks.push(g.as_slice().to_vec());
        if i < m {
            let upper = band_to_dense(&jac.upper[i - 1]);
            let w = lu_solve_matrix(&lu, upper)
                .ok_or_else(|| SolverError::LinearSolve(format!("singular block at ring {i}")))?;
            w_blocks.push(Some(w.clone()));
            prev_w = Some(w);
        } else {
            w_blocks.push(None);
        }
    }

    // back substitution
    let mut x = vec![0.0; jac.unknowns()];
    let mut next: Vec<f64> = g_blocks[m - 1].clone();
    x[1 + (m - 1) * nb..1 + m * nb].copy_from_slice(&next);
    for i in (1..m).rev() {
        let mut xi = g_blocks[i - 1].clone();
        if let Some(w) = &w_blocks[i - 1] {
            for row in 0..nb {
                let mut acc = 0.0;
                for col in 0..nb {
                    acc += w[(row, col)] * next[col];
                }
                xi[row] -= acc;
            }
        }
        x[1 + (i - 1) * nb..1 + i * nb].copy_from_slice(&xi);
        next = xi;
    }
    let x1 = &x[1..1 + nb];
    x[0] = g0 - w0.iter().zip(x1).map(|(w, v)| w * v).sum::<f64>();
    Ok(x)
}

/// Cyclic tridiagonal solve (Thomas + Sherman-Morrison) for one ring block.
fn cyclic_tridiag_solve(b: &Band3, rhs: &[f64]) -> Option<Vec<f64>> {
    let n = b.diag.len();
    if n < 3 {
        return None;
    }
    let corner_low = b.sub[0]; // row 0, column n-1
    let corner_high = b.sup[n - 1]; // row n-1, column 0
    let gamma = -b.diag[0];
    let mut diag = b.diag.clone();
    diag[0] -= gamma;
    diag[n - 1] -= corner_high * corner_low / gamma;

    let thomas = |d: &[f64], r: &[f64]| -> Option<Vec<f64>> {
        let mut c = vec![0.0; n];
        let mut x = vec![0.0; n];
        let mut beta = d[0];
        if beta.abs() < 1e-300 {
            return None;
        }
        x[0] = r[0] / beta;
        for j in 1..n {
            c[j] = b.sup[j - 1] / beta;
            beta = d[j] - b.sub[j] * c[j];
            if beta.abs() < 1e-300 {
                return None;
            }
            x[j] = (r[j] - b.sub[j] * x[j - 1]) / beta;
        }
        for j in (0..n - 1).rev() {
            let xj1 = x[j + 1];
            x[j] -= c[j + 1] * xj1;
        }
        Some(x)
    };

    let y = thomas(&diag, rhs)?;
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = corner_high;
    let z = thomas(&diag, &u)?;
    let v_dot = |w: &[f64]| w[0] + corner_low / gamma * w[n - 1];
    let factor = v_dot(&y) / (1.0 + v_dot(&z));
    Some(y.iter().zip(&z).map(|(yi, zi)| yi - factor * zi).collect())
}

/// BiCGSTAB with a block-diagonal (per-ring cyclic tridiagonal, scalar pole)
/// preconditioner.
pub fn solve_bicgstab(
    jac: &BlockTridiag,
    rhs: &[f64],
    rtol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let nb = jac.n_beta;
    let n = jac.unknowns();
    let precond = |v: &[f64]| -> Result<Vec<f64>> {
        let mut out = vec![0.0; n];
        out[0] = v[0] / jac.a00;
        for i in 1..=jac.m {
            let seg = &v[1 + (i - 1) * nb..1 + i * nb];
            let sol = cyclic_tridiag_solve(&jac.diag[i - 1], seg).ok_or_else(|| {
                SolverError::LinearSolve(format!("preconditioner breakdown at ring {i}"))
            })?;
            out[1 + (i - 1) * nb..1 + i * nb].copy_from_slice(&sol);
        }
        Ok(out)
    };
    let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(x, y)| x * y).sum() };
    let norm = |a: &[f64]| dot(a, a).sqrt();

    let bnorm = norm(rhs).max(1e-300);
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    for _ in 0..max_iter {
        if norm(&r) / bnorm <= rtol {
            return Ok(x);
        }
        let rho_new = dot(&r0, &r);
        if rho_new.abs() < 1e-300 {
            return Err(SolverError::LinearSolve("bicgstab breakdown (rho)".into()));
        }
        let beta = (rho_new / rho) * (alpha / omega);
        for j in 0..n {
            p[j] = r[j] + beta * (p[j] - omega * v[j]);
        }
        let ph = precond(&p)?;
        v = jac.apply(&ph);
        alpha = rho_new / dot(&r0, &v);
        let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        if norm(&s) / bnorm <= rtol {
            for j in 0..n {
                x[j] += alpha * ph[j];
            }
            return Ok(x);
        }
        let sh = precond(&s)?;
        let t = jac.apply(&sh);
        let tt = dot(&t, &t);
        if tt.abs() < 1e-300 {
            return Err(SolverError::LinearSolve("bicgstab breakdown (t)".into()));
        }
        omega = dot(&t, &s) / tt;
        for j in 0..n {
            x[j] += alpha * ph[j] + omega * sh[j];
            r[j] = s[j] - omega * t[j];
        }
        rho = rho_new;
    }
    if norm(&r) / bnorm <= rtol {
        Ok(x)
    } else {
        Err(SolverError::LinearSolve(format!(
            "bicgstab stalled at relative residual {:.3e}",
            norm(&r) / bnorm
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::KillingMotion;
    use crate::operator::{assemble_jacobian, BallDomain, GraphField};
    use crate::section::{ball_alpha, SectionGrid};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn sample_jacobian() -> (BlockTridiag, usize) {
        let grid = Arc::new(SectionGrid::new(
            KillingMotion::new(0.8),
            14,
            24,
            ball_alpha(2.5),
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let u = GraphField {
            grid: grid.clone(),
            u: (0..grid.node_count())
                .map(|_| rng.gen_range(-0.2..0.2))
                .collect(),
        };
        let dom = BallDomain::full(&grid);
        (assemble_jacobian(&u, 0.3, dom), dom.interior_count(&grid))
    }

    #[test]
    fn direct_solver_inverts_apply() {
        let (jac, n) = sample_jacobian();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x_true: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = jac.apply(&x_true);
        let x = solve_direct(&jac, &b).unwrap();
        let err = x
            .iter()
            .zip(&x_true)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-9, "direct solve error {err}");
    }

    #[test]
    fn bicgstab_matches_direct() {
        let (jac, n) = sample_jacobian();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let xd = solve_direct(&jac, &b).unwrap();
        let xi = solve_bicgstab(&jac, &b, 1e-12, 4000).unwrap();
        let scale = xd.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
        let err = xd
            .iter()
            .zip(&xi)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-8 * scale.max(1.0), "iterative mismatch {err}");
    }

    #[test]
    fn cyclic_tridiag_solves_wrapped_system() {
        let n = 16;
        let band = Band3 {
            sub: vec![-1.0; n],
            diag: vec![4.2; n],
            sup: vec![-1.3; n],
        };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x_true: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut b = vec![0.0; n];
        band.apply_add(&x_true, &mut b);
        let x = cyclic_tridiag_solve(&band, &b).unwrap();
        for (a, c) in x.iter().zip(&x_true) {
            assert!((a - c).abs() < 1e-12);
        }
    }
}
