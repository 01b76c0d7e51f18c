//! Error types shared across the solver stack.

use thiserror::Error;

/// Errors produced by solvers and geometric constructors.
#[derive(Debug, Error)]
pub enum SolverError {
    /// The prescribed mean curvature violates the admissible range |H| < 1
    /// of the curvature-(-1) ambient model.
    #[error("mean curvature H = {h} is not admissible: the model requires |H| < 1")]
    ConstraintViolation { h: f64 },

    /// Newton iteration stalled before reaching the residual tolerance.
    #[error(
        "Newton did not converge after {iterations} iterations \
         (last residual {residual:.3e}, H = {h})"
    )]
    NonConvergence {
        iterations: usize,
        residual: f64,
        h: f64,
    },

    /// The elliptic coefficient matrix A lost positive definiteness.
    #[error("ellipticity lost at node {node} (min eigenvalue {min_eig:.3e}, H = {h})")]
    EllipticityLoss { node: usize, min_eig: f64, h: f64 },

    /// An exhaustion iterate left the cap-barrier interval.
    #[error(
        "iterate on ball k = {k} exits the barrier interval \
         [{lower:.6}, {upper:.6}] by {excess:.3e}"
    )]
    BarrierViolation {
        k: usize,
        lower: f64,
        upper: f64,
        excess: f64,
    },

    /// The sparse linear sub-solver failed (singular pivot block or
    /// stagnating iteration).
    #[error("linear solve failed: {0}")]
    LinearSolve(String),

    /// Shooting iteration for the equivariant profile failed to bracket or
    /// converge; carries the last bracket examined.
    #[error("shooting failed: {reason} (bracket [{lo}, {hi}], mismatch [{flo:.3e}, {fhi:.3e}])")]
    Shooting {
        reason: String,
        lo: f64,
        hi: f64,
        flo: f64,
        fhi: f64,
    },

    /// Error raised while solving on a specific exhaustion ball.
    #[error("ball k = {k}: {source}")]
    AtBall {
        k: usize,
        #[source]
        source: Box<SolverError>,
    },
}

impl SolverError {
    pub fn at_ball(self, k: usize) -> Self {
        SolverError::AtBall {
            k,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, SolverError>;
