use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::model::{mle_tabular_model, TabularModel};
use crate::data::generate_dataset;
use crate::divergence::FunctionDictionary;
use crate::mdp::{TabularMdp, TabularPolicy};
use crate::random::{random_mdp, random_policy};
use crate::Result;

/// Shape of the seeded random verification instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InstanceConfig {
    pub min_states: usize,
    pub max_states: usize,
    pub min_actions: usize,
    pub max_actions: usize,
    /// Length of the behaviour rollout the model is fitted on.
    pub n_steps: usize,
    pub smoothing: f64,
    /// Uniform random members.
    pub n_random_members: usize,
    /// Also add the `2 |S| |A|` signed coordinate indicators.
    pub coordinate_indicators: bool,
    pub g_max: f64,
}

impl Default for InstanceConfig {
    fn default() -> Self {
        Self {
            min_states: 2,
            max_states: 8,
            min_actions: 2,
            max_actions: 3,
            n_steps: 1000,
            smoothing: 0.01,
            n_random_members: FunctionDictionary::DEFAULT_RANDOM_MEMBERS,
            coordinate_indicators: true,
            g_max: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BoundInstance {
    pub index: u64,
    pub true_mdp: TabularMdp,
    pub model: TabularModel,
    pub model_mdp: TabularMdp,
    pub pi_b: TabularPolicy,
    pub pi: TabularPolicy,
    pub dict: FunctionDictionary,
}

/// Instance `index` of the sweep seeded by `base_seed`; independent of every other index.
pub fn random_instance(base_seed: u64, index: u64, config: &InstanceConfig) -> Result<BoundInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(index);
    let ns = rng.random_range(config.min_states..=config.max_states);
    let na = rng.random_range(config.min_actions..=config.max_actions);
    let true_mdp = random_mdp(&mut rng, ns, na);
    let pi_b = random_policy(&mut rng, ns, na);
    let pi = random_policy(&mut rng, ns, na);
    let data_seed: u64 = rng.random();
    let data = generate_dataset(&true_mdp, &pi_b, config.n_steps, data_seed)?;
    let model = mle_tabular_model(&data, config.smoothing)?;
    let model_mdp = model.dynamics(&true_mdp)?;
    let mut members =
        FunctionDictionary::uniform(&mut rng, ns * na, config.n_random_members, config.g_max)
            .members()
            .to_vec();
    if config.coordinate_indicators {
        members.extend_from_slice(FunctionDictionary::coordinate_indicators(ns * na, config.g_max).members());
    }
    let dict = FunctionDictionary::new(members, config.g_max)?;
    Ok(BoundInstance {
        index,
        true_mdp,
        model,
        model_mdp,
        pi_b,
        pi,
        dict,
    })
}
