//! Exact verification of the stationary-distribution model-error bounds, and a
//! tabular regularised policy-improvement demo.

mod improve;
mod instance;
mod model;
mod verify;

pub use improve::{
    empirical_policy, tabular_regularized_improvement, ImprovementConfig, ImprovementResult,
    ModelSource, StepDiagnostics,
};
pub use instance::{random_instance, BoundInstance, InstanceConfig};
pub use model::{expected_model_kl, mle_tabular_model, row_divergences, TabularModel};
pub use verify::{
    construct_f_member, verify_bounds, verify_theorem31, verify_theorem32, verify_theorem34,
    BoundReport, HoldFlags, Thm31Report, BOUND_SLACK, IDENTITY_TOLERANCE,
};
