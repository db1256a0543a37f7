//! Seeded generators for random tabular instances.

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::mdp::{build_mdp, MdpSpec, TabularMdp, TabularPolicy};

/// A draw from the flat Dirichlet(1, ..., 1) distribution.
pub fn dirichlet_flat<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..n).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|x: f64| x / total).collect()
}

/// Random MDP with Dirichlet transition rows (full support, hence ergodic under
/// any policy), uniform rewards in `[-1, 1]` and a Dirichlet initial distribution.
pub fn random_mdp<R: Rng + ?Sized>(rng: &mut R, n_states: usize, n_actions: usize) -> TabularMdp {
    let transition = (0..n_states)
        .map(|_| (0..n_actions).map(|_| dirichlet_flat(rng, n_states)).collect())
        .collect();
    let reward = (0..n_states)
        .map(|_| (0..n_actions).map(|_| rng.random_range(-1.0..=1.0)).collect())
        .collect();
    let spec = MdpSpec {
        n_states,
        n_actions,
        transition,
        reward,
        initial_dist: dirichlet_flat(rng, n_states),
        discount: 0.99,
    };
    build_mdp(&spec).expect("random MDP is well formed")
}

/// Random policy with Dirichlet rows.
pub fn random_policy<R: Rng + ?Sized>(rng: &mut R, n_states: usize, n_actions: usize) -> TabularPolicy {
    let rows: Vec<Vec<f64>> = (0..n_states).map(|_| dirichlet_flat(rng, n_actions)).collect();
    TabularPolicy::from_rows(&rows).expect("Dirichlet rows are distributions")
}

/// Random probability vector of length `n`.
pub fn random_distribution<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    dirichlet_flat(rng, n)
}
