//! Two-dimensional point mass: the smallest continuous task with both distribution
//! shift and termination.

use std::collections::BTreeMap;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sdm_core::data::{Dataset, Meta, Transition};

use crate::{Error, Result};

pub const STATE_DIM: usize = 2;
pub const ACTION_DIM: usize = 2;

/// `s' = clip(s + scale * a + N(0, noise^2), -1, 1)`, reward `-reward_scale ||s - goal||`,
/// terminal within `goal_radius` of the goal, truncated after `max_steps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PointMass {
    pub goal: [f64; 2],
    pub action_scale: f64,
    pub transition_noise: f64,
    pub goal_radius: f64,
    pub max_steps: usize,
    pub reward_scale: f64,
    /// Proportional gain of the behaviour controller.
    pub behavior_gain: f64,
    /// Gaussian action noise of the behaviour controller.
    pub behavior_noise: f64,
}

impl Default for PointMass {
    fn default() -> Self {
        Self {
            goal: [0.5, 0.5],
            action_scale: 0.1,
            transition_noise: 0.01,
            goal_radius: 0.05,
            max_steps: 200,
            reward_scale: 1.0,
            behavior_gain: 2.0,
            behavior_noise: 0.3,
        }
    }
}

fn clip(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

impl PointMass {
    pub fn validate(&self) -> Result<()> {
        if !self.goal.iter().all(|g| (-1.0..=1.0).contains(g)) {
            return Err(Error::InvalidEnv(format!("goal {:?} outside [-1, 1]^2", self.goal)));
        }
        let nonneg = [
            self.action_scale,
            self.transition_noise,
            self.reward_scale,
            self.behavior_gain,
            self.behavior_noise,
        ];
        if !nonneg.iter().all(|x| x.is_finite() && *x >= 0.0) {
            return Err(Error::InvalidEnv("scales, noises and gain must be finite and non-negative".into()));
        }
        if !(self.goal_radius > 0.0 && self.goal_radius < 1.0) || self.max_steps == 0 {
            return Err(Error::InvalidEnv("goal_radius must lie in (0, 1) and max_steps be positive".into()));
        }
        Ok(())
    }

    pub fn distance(&self, s: &[f64]) -> f64 {
        (s[0] - self.goal[0]).hypot(s[1] - self.goal[1])
    }

    pub fn reward(&self, s: &[f64]) -> f64 {
        -self.reward_scale * self.distance(s)
    }

    pub fn at_goal(&self, s: &[f64]) -> bool {
        self.distance(s) <= self.goal_radius
    }

    /// Uniform start in the square, away from the goal.
    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        loop {
            let s = [rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0)];
            if !self.at_goal(&s) {
                return s;
            }
        }
    }

    /// Returns `(s', r, terminal)`. Actions are clipped to `[-1, 1]`.
    pub fn step<R: Rng + ?Sized>(&self, s: &[f64], a: &[f64], rng: &mut R) -> ([f64; 2], f64, bool) {
        let mut next = [0.0; 2];
        for i in 0..2 {
            let eps: f64 = rng.sample(StandardNormal);
            next[i] = clip(s[i] + self.action_scale * clip(a[i]) + self.transition_noise * eps);
        }
        (next, self.reward(s), self.at_goal(&next))
    }

    pub fn behavior(&self) -> Controller {
        Controller {
            goal: self.goal,
            gain: self.behavior_gain,
            noise: self.behavior_noise,
        }
    }

    /// The behaviour controller without action noise.
    pub fn expert(&self) -> Controller {
        Controller {
            noise: 0.0,
            ..self.behavior()
        }
    }
}

/// Batched stochastic policy.
pub trait Policy {
    fn act(&self, states: ArrayView2<f64>, rng: &mut ChaCha8Rng) -> Result<Array2<f64>>;
}

/// `a = clip(gain * (goal - s) + N(0, noise^2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Controller {
    pub goal: [f64; 2],
    pub gain: f64,
    pub noise: f64,
}

impl Policy for Controller {
    fn act(&self, states: ArrayView2<f64>, rng: &mut ChaCha8Rng) -> Result<Array2<f64>> {
        if states.ncols() != STATE_DIM {
            return Err(Error::ShapeMismatch(format!("{} state columns, expected 2", states.ncols())));
        }
        let mut a = Array2::zeros((states.nrows(), ACTION_DIM));
        for ((i, j), v) in a.indexed_iter_mut() {
            let eps: f64 = if self.noise > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
            *v = clip(self.gain * (self.goal[j] - states[[i, j]]) + self.noise * eps);
        }
        Ok(a)
    }
}

/// Uniform actions in `[-1, 1]^dim`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UniformPolicy {
    pub dim: usize,
}

impl Policy for UniformPolicy {
    fn act(&self, states: ArrayView2<f64>, rng: &mut ChaCha8Rng) -> Result<Array2<f64>> {
        Ok(Array2::from_shape_simple_fn((states.nrows(), self.dim), || rng.random_range(-1.0..=1.0)))
    }
}

/// Behaviour-policy dataset of `n_transitions` steps. Goal arrivals are terminal;
/// time-limit truncations are not.
pub fn generate_point_mass_dataset(env: &PointMass, n_transitions: usize, seed: u64) -> Result<Dataset> {
    env.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let policy = env.behavior();
    let mut transitions = Vec::with_capacity(n_transitions);
    'episodes: while transitions.len() < n_transitions {
        let mut s = env.reset(&mut rng);
        for _ in 0..env.max_steps {
            let a = policy.act(ArrayView2::from_shape((1, 2), &s).expect("1x2"), &mut rng)?;
            let a = [a[[0, 0]], a[[0, 1]]];
            let (next, r, done) = env.step(&s, &a, &mut rng);
            transitions.push(Transition::continuous(s.to_vec(), a.to_vec(), r, next.to_vec(), done));
            if transitions.len() == n_transitions {
                break 'episodes;
            }
            if done {
                break;
            }
            s = next;
        }
    }
    let mut notes = BTreeMap::new();
    notes.insert("env".to_string(), serde_json::to_string(env).expect("env serialises"));
    let meta = Meta {
        seed: Some(seed),
        behavior: Some(format!(
            "proportional controller, gain {}, action noise N(0, {}^2)",
            env.behavior_gain, env.behavior_noise
        )),
        notes,
        ..Meta::continuous(STATE_DIM, ACTION_DIM)
    };
    Ok(Dataset::new(meta, transitions)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    pub returns: Vec<f64>,
}

impl ReturnStats {
    pub fn from_returns(returns: Vec<f64>) -> Self {
        let n = returns.len().max(1) as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
            returns,
        }
    }
}

/// Undiscounted returns of `episodes` episodes. Episode `e` draws everything from
/// stream `e` of the generator seeded with `seed`, so two policies evaluated with the
/// same seed see the same start states.
pub fn evaluate_policy(env: &PointMass, policy: &dyn Policy, episodes: usize, seed: u64) -> Result<ReturnStats> {
    env.validate()?;
    let mut returns = Vec::with_capacity(episodes);
    for e in 0..episodes {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(e as u64);
        let mut s = env.reset(&mut rng);
        let mut total = 0.0;
        for _ in 0..env.max_steps {
            let a = policy.act(ArrayView2::from_shape((1, 2), &s).expect("1x2"), &mut rng)?;
            let (next, r, done) = env.step(&s, a.as_slice().expect("contiguous"), &mut rng);
            total += r;
            if done {
                break;
            }
            s = next;
        }
        returns.push(total);
    }
    Ok(ReturnStats::from_returns(returns))
}

/// Returns of the uniform-random and the noiseless-controller policies, used to
/// put scores on a 0 (random) to 1 (expert) scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceReturns {
    pub random: f64,
    pub expert: f64,
}

impl ReferenceReturns {
    pub fn measure(env: &PointMass, episodes: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            random: evaluate_policy(env, &UniformPolicy { dim: ACTION_DIM }, episodes, seed)?.mean,
            expert: evaluate_policy(env, &env.expert(), episodes, seed)?.mean,
        })
    }

    pub fn normalize(&self, ret: f64) -> f64 {
        (ret - self.random) / (self.expert - self.random)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_clips_and_terminates() {
        let env = PointMass {
            transition_noise: 0.0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let (next, r, done) = env.step(&[1.0, -1.0], &[5.0, -5.0], &mut rng);
        assert_eq!(next, [1.0, -1.0]);
        assert!(!done);
        assert_eq!(r, -(0.5f64.hypot(1.5)));
        let (_, _, done) = env.step(&[0.49, 0.5], &[0.1, 0.0], &mut rng);
        assert!(done);
    }

    #[test]
    fn expert_reaches_goal() {
        let env = PointMass::default();
        let stats = evaluate_policy(&env, &env.expert(), 5, 3).unwrap();
        assert!(stats.returns.iter().all(|r| *r > -30.0), "{stats:?}");
    }

    #[test]
    fn dataset_has_terminals_and_the_requested_size() {
        let env = PointMass::default();
        let data = generate_point_mass_dataset(&env, 3000, 1).unwrap();
        assert_eq!(data.len(), 3000);
        let terminals = data.transitions.iter().filter(|t| t.done).count();
        assert!(terminals > 10);
    }
}
