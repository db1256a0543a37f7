//! Minimal neural stack: MLPs with LeakyReLU hidden layers and manual backprop,
//! Adam, the losses used by the trainer, finite-difference gradient checks, and a
//! Gaussian dynamics ensemble with a termination head.

pub mod adam;
pub mod ensemble;
mod error;
pub mod gradcheck;
pub mod loss;
pub mod mlp;
pub mod normalize;

pub use adam::Adam;
pub use ensemble::{DynamicsData, DynamicsEnsemble, EnsembleConfig, ModelSample};
pub use error::{Error, Result};
pub use mlp::{Activation, ForwardCache, Mlp};
pub use normalize::Normalizer;
