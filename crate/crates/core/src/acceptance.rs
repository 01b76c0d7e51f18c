//! Programmatic acceptance checks, shared by the `verify` CLI subcommand and
//! the integration test suite. Each criterion returns a pass/fail result
//! with a human-readable detail line; tolerances are pinned here.

/// Outcome of one acceptance criterion.
#[derive(Debug, Clone)]
pub struct CriterionResult {
    pub name: &'static str,
    pub passed: bool,
    pub details: String,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "[{}] {} — {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.details
        )
    }
}

mod criteria;
pub use criteria::*;

/// Runs every acceptance criterion in order.
pub fn run_all() -> Vec<CriterionResult> {
    vec![
        trivial_leaf(),
        cap_oracle(),
        curvature_oracle(),
        height_estimates(),
        gradient_estimate_shadow(),
        killing_cylinder_bound(),
        structural_invariants(),
        equivariant_cross_check(),
        sharpness_behavior(),
    ]
}
