//! Exact finite-MDP machinery for stationary state-action distribution matching.
//!
//! The crate is organised bottom-up:
//!
//! * [`mdp`] holds finite MDPs, tabular policies and the undiscounted stationary
//!   state-action distribution of the chain a policy induces.
//! * [`avg`] solves average-reward quantities (η and the differential value) for
//!   arbitrary bounded reward tables.
//! * [`divergence`] provides TV/KL/JSD and integral probability metrics over finite
//!   function dictionaries.
//! * [`bounds`] checks the change-of-variable identity and the model-error bound
//!   chain exactly on tabular instances, and hosts the tabular regularised
//!   policy-improvement demo.
//! * [`data`] generates, summarises and persists offline datasets, including the
//!   two-dimensional circle dataset used for behaviour cloning.

pub mod avg;
pub mod bounds;
pub mod data;
pub mod divergence;
pub mod error;
pub mod mdp;
pub mod random;

pub use error::{Error, Result};
