use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Dataset, Meta, Transition};
use crate::mdp::{stationary_distribution, StateActionDist, TabularMdp, TabularPolicy};
use crate::{Error, Result};

/// Index drawn from a probability vector by inverse CDF.
pub fn sample_categorical<R: Rng + ?Sized>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // round-off: fall back to the last index with positive mass
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

/// One continuous rollout of `policy` on `mdp` starting from the initial distribution.
pub fn generate_dataset(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    n_steps: usize,
    seed: u64,
) -> Result<Dataset> {
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be at least 1".into()));
    }
    stationary_distribution(mdp, policy)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = sample_categorical(&mut rng, mdp.initial_dist());
    let mut transitions = Vec::with_capacity(n_steps);
    for _ in 0..n_steps {
        let a = sample_categorical(&mut rng, policy.row(s));
        let s_next = sample_categorical(&mut rng, mdp.row(s, a));
        transitions.push(Transition::tabular(s, a, mdp.reward(s, a), s_next, false));
        s = s_next;
    }
    let mut meta = Meta::tabular(mdp.n_states(), mdp.n_actions());
    meta.seed = Some(seed);
    meta.behavior = Some("tabular policy, single rollout from the initial distribution".into());
    Ok(Dataset { meta, transitions })
}

/// Normalised `(s, a)` visit frequencies.
pub fn empirical_distribution(dataset: &Dataset) -> Result<StateActionDist> {
    let (n_states, n_actions) = dataset.tabular_dims()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut counts = vec![0.0; n_states * n_actions];
    for (s, a, _, _) in dataset.tabular_steps()? {
        counts[s * n_actions + a] += 1.0;
    }
    StateActionDist::from_counts(n_states, n_actions, &counts)
}
