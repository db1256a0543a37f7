use ndarray::{Array1, Array2, ArrayView2};
use rand_chacha::ChaCha8Rng;
use sdm_nn::{DynamicsEnsemble, ModelSample};

use crate::env::{PointMass, ACTION_DIM, STATE_DIM};
use crate::{Error, Result};

/// One-step simulator used for rollouts and fake batches.
pub trait Dynamics {
    fn state_dim(&self) -> usize;
    fn action_dim(&self) -> usize;
    fn sample_step(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>, rng: &mut ChaCha8Rng) -> Result<ModelSample>;
}

impl Dynamics for DynamicsEnsemble {
    fn state_dim(&self) -> usize {
        self.state_dim
    }

    fn action_dim(&self) -> usize {
        self.action_dim
    }

    fn sample_step(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>, rng: &mut ChaCha8Rng) -> Result<ModelSample> {
        Ok(self.sample(states, actions, rng)?)
    }
}

/// The true point-mass dynamics; goal arrivals are terminal, the time limit is not
/// modelled.
impl Dynamics for PointMass {
    fn state_dim(&self) -> usize {
        STATE_DIM
    }

    fn action_dim(&self) -> usize {
        ACTION_DIM
    }

    fn sample_step(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>, rng: &mut ChaCha8Rng) -> Result<ModelSample> {
        if states.ncols() != STATE_DIM || actions.ncols() != ACTION_DIM || states.nrows() != actions.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "states {:?} and actions {:?} for the point mass",
                states.dim(),
                actions.dim()
            )));
        }
        let n = states.nrows();
        let mut rewards = Array1::zeros(n);
        let mut next_states = Array2::zeros((n, STATE_DIM));
        let mut dones = Vec::with_capacity(n);
        for i in 0..n {
            let s = [states[[i, 0]], states[[i, 1]]];
            let a = [actions[[i, 0]], actions[[i, 1]]];
            let (next, r, done) = self.step(&s, &a, rng);
            rewards[i] = r;
            next_states[[i, 0]] = next[0];
            next_states[[i, 1]] = next[1];
            dones.push(done);
        }
        Ok(ModelSample {
            rewards,
            next_states,
            dones,
        })
    }
}
