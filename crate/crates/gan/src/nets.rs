use std::path::Path;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sdm_nn::{Activation, ForwardCache, Mlp};

use crate::env::Policy;
use crate::{Error, Result};

pub fn hstack(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    concatenate(Axis(1), &[a, b]).map_err(|e| Error::ShapeMismatch(e.to_string()))
}

pub fn vstack(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    concatenate(Axis(0), &[a, b]).map_err(|e| Error::ShapeMismatch(e.to_string()))
}

pub fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

fn layer_sizes(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut sizes = vec![input];
    sizes.extend(hidden);
    sizes.push(output);
    sizes
}

/// `Q(s, a)`: LeakyReLU MLP with a linear scalar output.
pub fn critic_net<R: Rng + ?Sized>(state_dim: usize, action_dim: usize, hidden: &[usize], slope: f64, rng: &mut R) -> Mlp {
    Mlp::new(&layer_sizes(state_dim + action_dim, hidden, 1), slope, Activation::Identity, rng)
}

/// `D(s, a)` as a logit; the sigmoid is folded into the BCE.
pub fn discriminator_net<R: Rng + ?Sized>(
    state_dim: usize,
    action_dim: usize,
    hidden: &[usize],
    slope: f64,
    rng: &mut R,
) -> Mlp {
    critic_net(state_dim, action_dim, hidden, slope, rng)
}

/// Implicit policy `a = max_action * tanh(f([s, z]))` with `z ~ N(0, I)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Actor {
    pub net: Mlp,
    pub state_dim: usize,
    pub noise_dim: usize,
    pub max_action: f64,
}

impl Actor {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        noise_dim: usize,
        hidden: &[usize],
        slope: f64,
        max_action: f64,
        rng: &mut R,
    ) -> Self {
        Self {
            net: Mlp::new(&layer_sizes(state_dim + noise_dim, hidden, action_dim), slope, Activation::Tanh, rng),
            state_dim,
            noise_dim,
            max_action,
        }
    }

    pub fn action_dim(&self) -> usize {
        self.net.output_dim()
    }

    pub fn sample_noise<R: Rng + ?Sized>(&self, rows: usize, rng: &mut R) -> Array2<f64> {
        standard_normal(rows, self.noise_dim, rng)
    }

    fn input(&self, states: ArrayView2<f64>, noise: ArrayView2<f64>) -> Result<Array2<f64>> {
        if states.ncols() != self.state_dim || noise.ncols() != self.noise_dim || states.nrows() != noise.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "actor input: states {:?}, noise {:?}",
                states.dim(),
                noise.dim()
            )));
        }
        hstack(states, noise)
    }

    pub fn forward(&self, states: ArrayView2<f64>, noise: ArrayView2<f64>) -> Result<Array2<f64>> {
        Ok(self.net.forward(self.input(states, noise)?.view())? * self.max_action)
    }

    /// Cache for [`Actor::backward`]; the actions are `max_action * cache.output()`.
    pub fn forward_cached(&self, states: ArrayView2<f64>, noise: ArrayView2<f64>) -> Result<ForwardCache> {
        Ok(self.net.forward_cached(self.input(states, noise)?.view())?)
    }

    pub fn actions(&self, cache: &ForwardCache) -> Array2<f64> {
        cache.output() * self.max_action
    }

    /// Parameter gradient given `dL/d(action)`.
    pub fn backward(&self, cache: &ForwardCache, grad_actions: ArrayView2<f64>) -> Result<Vec<f64>> {
        let grad_out = &grad_actions * self.max_action;
        Ok(self.net.backward(cache, grad_out.view())?.0)
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}

impl Policy for Actor {
    fn act(&self, states: ArrayView2<f64>, rng: &mut ChaCha8Rng) -> Result<Array2<f64>> {
        let z = self.sample_noise(states.nrows(), rng);
        self.forward(states, z.view())
    }
}
