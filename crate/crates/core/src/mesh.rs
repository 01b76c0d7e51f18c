//! Triangle meshes in half-space coordinates and a discrete mean-curvature
//! estimator independent of the graph-operator assembly.
//!
//! The estimator maps each vertex's 2-ring into hyperbolic normal
//! coordinates via the closed-form inverse exponential, fits a quadratic
//! graph over the tangent plane there, and reads the mean curvature
//! (average convention) off the fitted second fundamental form. The sign is
//! taken with respect to the mesh's winding-induced normal, so the caller's
//! face orientation selects the side.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::model::{frame_coords, log_map, AmbientPoint};

#[derive(Debug, Clone)]
pub struct TriMesh {
    pub vertices: Vec<AmbientPoint>,
    pub faces: Vec<[u32; 3]>,
}

impl TriMesh {
    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    /// Euler characteristic `V - E + F` (edges counted once).
    pub fn euler_characteristic(&self) -> i64 {
        let mut edges = std::collections::HashSet::new();
        for f in &self.faces {
            for k in 0..3 {
                let a = f[k].min(f[(k + 1) % 3]);
                let b = f[k].max(f[(k + 1) % 3]);
                edges.insert((a, b));
            }
        }
        self.vertices.len() as i64 - edges.len() as i64 + self.faces.len() as i64
    }

    /// Vertex adjacency (one-ring) from faces.
    pub fn adjacency(&self) -> Vec<Vec<u32>> {
        let mut adj = vec![Vec::new(); self.vertices.len()];
        for f in &self.faces {
            for k in 0..3 {
                let a = f[k] as usize;
                let b = f[(k + 1) % 3];
                if !adj[a].contains(&b) {
                    adj[a].push(b);
                }
                let b = f[(k + 2) % 3];
                if !adj[a].contains(&b) {
                    adj[a].push(b);
                }
            }
        }
        adj
    }

    /// Vertices on the mesh boundary (incident to an edge with one face).
    pub fn boundary_vertices(&self) -> Vec<bool> {
        let mut count = std::collections::HashMap::new();
        for f in &self.faces {
            for k in 0..3 {
                let a = f[k].min(f[(k + 1) % 3]);
                let b = f[k].max(f[(k + 1) % 3]);
                *count.entry((a, b)).or_insert(0u32) += 1;
            }
        }
        let mut boundary = vec![false; self.vertices.len()];
        for ((a, b), c) in count {
            if c == 1 {
                boundary[a as usize] = true;
                boundary[b as usize] = true;
            }
        }
        boundary
    }

    /// Marks vertices whose graph distance to the boundary is at least
    /// `depth` (the "interior" used for curvature norms).
    pub fn interior_mask(&self, depth: usize) -> Vec<bool> {
        let adj = self.adjacency();
        let mut excluded = self.boundary_vertices();
        for _ in 1..depth {
            let snapshot = excluded.clone();
            for (v, adj_v) in adj.iter().enumerate() {
                if !snapshot[v] && adj_v.iter().any(|&n| snapshot[n as usize]) {
                    excluded[v] = true;
                }
            }
        }
        excluded.iter().map(|&e| !e).collect()
    }
}

/// Per-vertex mean-curvature estimates; `None` marks a degenerate local fit.
#[derive(Debug, Clone)]
pub struct CurvatureEstimate {
    pub h: Vec<Option<f64>>,
}

impl CurvatureEstimate {
    /// Max |H - target| over vertices selected by `mask`, skipping flagged
    /// fits. Returns `None` when no vertex qualified.
    pub fn max_error(&self, target: f64, mask: &[bool]) -> Option<f64> {
        self.h
            .iter()
            .zip(mask)
            .filter_map(|(h, &m)| if m { h.map(|v| (v - target).abs()) } else { None })
            .fold(None, |acc, e| Some(acc.map_or(e, |a: f64| a.max(e))))
    }
}

/// Pointwise mean curvature of the mesh with respect to the hyperbolic
/// metric, via quadratic fitting of the embedding over each vertex's 2-ring
/// in normal coordinates. Average convention; the sign follows the mesh's
/// winding-induced normal.
pub fn mean_curvature_oracle(mesh: &TriMesh) -> CurvatureEstimate {
    let adj = mesh.adjacency();
    // faces incident to each vertex, with the cyclic order starting at it
    let mut vertex_faces: Vec<Vec<(u32, u32)>> = vec![Vec::new(); mesh.vertices.len()];
    for f in &mesh.faces {
        for k in 0..3 {
            vertex_faces[f[k] as usize].push((f[(k + 1) % 3], f[(k + 2) % 3]));
        }
    }

    let h: Vec<Option<f64>> = (0..mesh.vertices.len())
        .into_par_iter()
        .map(|v| fit_vertex(mesh, &adj, &vertex_faces[v], v))
        .collect();
    CurvatureEstimate { h }
}

fn fit_vertex(
    mesh: &TriMesh,
    adj: &[Vec<u32>],
    incident: &[(u32, u32)],
    v: usize,
) -> Option<f64> {
    let p = mesh.vertices[v];
    // 2-ring neighborhood
    let mut ring: Vec<u32> = Vec::new();
    for &n in &adj[v] {
        if !ring.contains(&n) {
            ring.push(n);
        }
        for &nn in &adj[n as usize] {
            if nn as usize != v && !ring.contains(&nn) {
                ring.push(nn);
            }
        }
    }
    if ring.len() < 6 || incident.is_empty() {
        return None;
    }

    // normal-coordinate images of the neighborhood
    let coords: Vec<Vector3<f64>> = ring
        .iter()
        .map(|&n| frame_coords(p, log_map(p, mesh.vertices[n as usize])))
        .collect();
    let coord_of = |id: u32| -> Vector3<f64> { frame_coords(p, log_map(p, mesh.vertices[id as usize])) };

    // winding-induced normal from incident faces, evaluated in log space
    let mut normal = Vector3::zeros();
    for &(a, b) in incident {
        normal += coord_of(a).cross(&coord_of(b));
    }
    let n_norm = normal.norm();
    if n_norm < 1e-14 {
        return None;
    }
    let n_hat = normal / n_norm;

    // orthonormal tangent basis
    let seed = if n_hat.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let e1 = (seed - n_hat * seed.dot(&n_hat)).normalize();
    let e2 = n_hat.cross(&e1);

    // least squares for zeta = d x1 + e x2 + (a x1² + 2b x1x2 + c x2²)/2
    let scale = coords
        .iter()
        .map(|c| c.norm())
        .fold(0.0f64, f64::max);
    if scale < 1e-14 {
        return None;
    }
    let mut ata = nalgebra::Matrix5::<f64>::zeros();
    let mut atb = nalgebra::Vector5::<f64>::zeros();
    for c in &coords {
        let x1 = c.dot(&e1) / scale;
        let x2 = c.dot(&e2) / scale;
        let zeta = c.dot(&n_hat) / scale;
        let row = nalgebra::Vector5::new(x1, x2, 0.5 * x1 * x1, x1 * x2, 0.5 * x2 * x2);
        ata += row * row.transpose();
        atb += row * zeta;
    }
    let sol = ata.lu().solve(&atb)?;
    if !sol.iter().all(|s| s.is_finite()) {
        return None;
    }
    let (d, e) = (sol[0], sol[1]);
    let (a, b, c) = (sol[2] / scale, sol[3] / scale, sol[4] / scale);
    let w2 = 1.0 + d * d + e * e;
    Some(((1.0 + e * e) * a - 2.0 * b * d * e + (1.0 + d * d) * c) / (2.0 * w2.powf(1.5)))
}

/// Structured-grid mesh of a parametric surface patch `(s, t) -> point`,
/// `n_s × n_t` vertices, `t` periodic when `wrap_t` is set. Faces are wound
/// so that `(d/ds) × (d/dt)` is the oriented normal direction in the frame
/// of the first parameter.
pub fn parametric_mesh<F>(
    f: F,
    s_range: (f64, f64),
    n_s: usize,
    t_range: (f64, f64),
    n_t: usize,
    wrap_t: bool,
    flip: bool,
) -> TriMesh
where
    F: Fn(f64, f64) -> AmbientPoint,
{
    let mut vertices = Vec::with_capacity(n_s * n_t);
    for i in 0..n_s {
        let s = s_range.0 + (s_range.1 - s_range.0) * i as f64 / (n_s - 1) as f64;
        for j in 0..n_t {
            let denom = if wrap_t { n_t } else { n_t - 1 };
            let t = t_range.0 + (t_range.1 - t_range.0) * j as f64 / denom as f64;
            vertices.push(f(s, t));
        }
    }
    let mut faces = Vec::new();
    let jmax = if wrap_t { n_t } else { n_t - 1 };
    for i in 0..n_s - 1 {
        for j in 0..jmax {
            let jn = (j + 1) % n_t;
            let v00 = (i * n_t + j) as u32;
            let v01 = (i * n_t + jn) as u32;
            let v10 = ((i + 1) * n_t + j) as u32;
            let v11 = ((i + 1) * n_t + jn) as u32;
            if flip {
                faces.push([v00, v10, v01]);
                faces.push([v01, v10, v11]);
            } else {
                faces.push([v00, v01, v10]);
                faces.push([v01, v11, v10]);
            }
        }
    }
    TriMesh { vertices, faces }
}
