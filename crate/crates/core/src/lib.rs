//! Numerical solver for complete constant-mean-curvature Killing-graph
//! surfaces in hyperbolic 3-space with prescribed asymptotic boundary.
//!
//! The surface is sought as a graph along the orbits of a screw-motion
//! isometry group over the unit-hemisphere section. The quasilinear graph
//! operator is discretized with second-order finite differences on a polar
//! grid ([`operator`]), solved by damped Newton with continuation in the
//! mean curvature ([`solver`]), and driven to the asymptotic boundary by an
//! exhaustion over growing geodesic balls with cap-barrier height control
//! ([`exhaustion`]). Everything is cross-checked against closed-form umbilic
//! solutions, an independent shooting ODE, and a mesh-based curvature
//! estimator ([`oracles`], [`mesh`]).

pub mod acceptance;
pub mod error;
pub mod exhaustion;
pub mod linsolve;
pub mod mesh;
pub mod model;
pub mod operator;
pub mod oracles;
pub mod section;
pub mod solver;

pub use error::{Result, SolverError};
pub use exhaustion::{
    barrier_bounds, exhaustion_solve, extend_boundary, gradient_monitor, BoundaryTrace,
    ExhaustionConfig, ExhaustionReport, Ramp,
};
pub use model::{
    flow, hyperbolic_distance, killing_vector, metric_inner, AmbientPoint, KillingMotion,
    ModelSpec,
};
pub use operator::{assemble_jacobian, assemble_residual, embed_graph, BallDomain, GraphField};
pub use oracles::{equivariant_ode_solve, reference_surfaces, umbilic_cap, CapSolution};
pub use section::{
    ball_alpha, cylinder_mean_curvature, project, section_point, SectionCoords, SectionGrid,
};
pub use solver::{continuation_solve, dirichlet_solve, ordering_check, DirichletProblem, SolverConfig};
