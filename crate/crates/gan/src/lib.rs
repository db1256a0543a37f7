//! Offline RL by stationary distribution matching, implemented with a GAN.
//!
//! The policy is an implicit generator trained against clipped double-Q critics
//! plus a discriminator that separates offline state-action pairs from pairs the
//! policy produces on the data and on one-step model rollouts. Also hosts the
//! point-mass environment used for end-to-end runs and the circle
//! behaviour-cloning experiment.

pub mod batch;
pub mod circle;
pub mod config;
pub mod dynamics;
pub mod env;
mod error;
pub mod nets;
pub mod trainer;

pub use batch::{Batch, ModelBuffer, RewardClamp};
pub use circle::{behavior_clone_toy, CloneConfig, CloneOutcome, Generator, GeneratorKind};
pub use config::TrainerConfig;
pub use dynamics::Dynamics;
pub use env::{evaluate_policy, generate_point_mass_dataset, Policy, PointMass, ReferenceReturns, ReturnStats};
pub use error::{Error, Result};
pub use nets::Actor;
pub use trainer::{
    actor_objective, branch_rollouts, build_fake_batch, critic_loss, critic_target, discriminator_loss, train,
    train_with_model, FakeBatch, MetricsRow, TrainOutcome, Trainer,
};
