use serde::{Deserialize, Serialize};
use sdm_nn::loss::GeneratorLoss;
use sdm_nn::mlp::DEFAULT_SLOPE;

use crate::{Error, Result};

/// Hyperparameters of the SDM-GAN training loop. `Default` is the shared
/// hyperparameter table used for the benchmark runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainerConfig {
    /// Regularisation strength; the actor uses `lambda = alpha / q_avg`.
    pub alpha: f64,
    /// Fraction of every minibatch drawn from the offline data.
    pub f_real: f64,
    /// Model rollout horizon.
    pub horizon: usize,
    pub gamma: f64,
    /// Soft update rate of targets and `q_avg`.
    pub tau: f64,
    /// Weight of the min in the clipped double-Q target.
    pub c_min_weight: f64,
    /// Actor update period, in iterations.
    pub policy_freq: usize,
    /// Smoothed copies of every next state in the Bellman backup, the original included.
    pub n_b: usize,
    pub sigma_b: f64,
    /// State smoothing noise of the fake batch.
    pub sigma_j: f64,
    /// Target-actor actions per smoothed next state.
    pub n_a: usize,
    pub batch_size: usize,
    pub lr_critic: f64,
    pub lr_actor_disc: f64,
    pub adam_beta1_actor_disc: f64,
    pub adam_beta2: f64,
    pub epochs: usize,
    /// Leading epochs that train only the generator loss.
    pub warm_epochs: usize,
    pub epoch_length: usize,
    /// `None` means `min(10, state_dim / 2)`.
    pub noise_dim: Option<usize>,
    pub label_smoothing: bool,
    pub label_smooth_low: f64,
    pub label_smooth_high: f64,
    pub generator_loss: GeneratorLoss,
    pub rollout_freq: usize,
    /// Start states per rollout generation.
    pub rollout_batch: usize,
    pub rollout_retain_epochs: usize,
    pub q_cutoff: f64,
    pub huber_threshold: f64,
    /// `r_min = r0 - k sigma_r`, `r_max = r1 + k sigma_r`.
    pub reward_clamp_sigmas: f64,
    pub critic_threshold_rate: f64,
    pub critic_threshold_sigmas: f64,
    pub hidden: Vec<usize>,
    pub slope: f64,
    pub max_action: f64,
    pub eval_episodes: usize,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        Self {
            alpha: 10.0,
            f_real: 0.5,
            horizon: 1,
            gamma: 0.99,
            tau: 0.005,
            c_min_weight: 0.75,
            policy_freq: 2,
            n_b: 50,
            sigma_b: 3e-4,
            sigma_j: 3e-4,
            n_a: 1,
            batch_size: 512,
            lr_critic: 3e-4,
            lr_actor_disc: 2e-4,
            adam_beta1_actor_disc: 0.4,
            adam_beta2: 0.999,
            epochs: 1000,
            warm_epochs: 40,
            epoch_length: 1000,
            noise_dim: None,
            label_smoothing: true,
            label_smooth_low: 0.8,
            label_smooth_high: 1.0,
            generator_loss: GeneratorLoss::NonSaturating,
            rollout_freq: 250,
            rollout_batch: 128,
            rollout_retain_epochs: 5,
            q_cutoff: 2000.0,
            huber_threshold: 500.0,
            reward_clamp_sigmas: 3.0,
            critic_threshold_rate: 0.05,
            critic_threshold_sigmas: 3.0,
            hidden: vec![400, 300],
            slope: DEFAULT_SLOPE,
            max_action: 1.0,
            eval_episodes: 10,
        }
    }
}

impl TrainerConfig {
    /// Desk-scale settings for the point-mass environment. Smaller networks, batches
    /// and epochs; every other value keeps its default.
    pub fn toy() -> Self {
        Self {
            batch_size: 128,
            n_b: 10,
            epochs: 50,
            warm_epochs: 10,
            epoch_length: 200,
            rollout_freq: 50,
            hidden: vec![64, 64],
            lr_critic: 1e-3,
            lr_actor_disc: 5e-4,
            ..Self::default()
        }
    }

    pub fn noise_dim_for(&self, state_dim: usize) -> usize {
        self.noise_dim.unwrap_or_else(|| (state_dim / 2).min(10))
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !unit(self.f_real) {
            return bad("f_real must lie in [0, 1]");
        }
        if !unit(self.gamma) || !unit(self.tau) || !unit(self.c_min_weight) {
            return bad("gamma, tau and c_min_weight must lie in [0, 1]");
        }
        if !unit(self.critic_threshold_rate) {
            return bad("critic_threshold_rate must lie in [0, 1]");
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad("alpha must be finite and non-negative");
        }
        if self.horizon == 0 || self.policy_freq == 0 || self.n_b == 0 || self.n_a == 0 {
            return bad("horizon, policy_freq, n_b and n_a must be positive");
        }
        if self.batch_size == 0 || self.epoch_length == 0 || self.rollout_freq == 0 {
            return bad("batch_size, epoch_length and rollout_freq must be positive");
        }
        if self.rollout_batch == 0 || self.rollout_retain_epochs == 0 {
            return bad("rollout_batch and rollout_retain_epochs must be positive");
        }
        if self.warm_epochs > self.epochs {
            return bad("warm_epochs exceeds epochs");
        }
        if !(self.sigma_b >= 0.0 && self.sigma_j >= 0.0) {
            return bad("smoothing noise must be non-negative");
        }
        if !(0.0..=self.label_smooth_high).contains(&self.label_smooth_low) || self.label_smooth_high > 1.0 {
            return bad("label smoothing range must satisfy 0 <= low <= high <= 1");
        }
        for (name, lr) in [("lr_critic", self.lr_critic), ("lr_actor_disc", self.lr_actor_disc)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !(0.0..1.0).contains(&self.adam_beta1_actor_disc) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("Adam betas must lie in [0, 1)");
        }
        if !(self.q_cutoff > 0.0 && self.huber_threshold > 0.0 && self.max_action > 0.0) {
            return bad("q_cutoff, huber_threshold and max_action must be positive");
        }
        if self.reward_clamp_sigmas < 0.0 || self.critic_threshold_sigmas < 0.0 {
            return bad("sigma multipliers must be non-negative");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layer sizes must be positive");
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_shared_table() {
        let c = TrainerConfig::default();
        assert_eq!((c.alpha, c.f_real, c.gamma, c.tau, c.c_min_weight), (10.0, 0.5, 0.99, 0.005, 0.75));
        assert_eq!((c.policy_freq, c.n_b, c.n_a, c.batch_size), (2, 50, 1, 512));
        assert_eq!((c.sigma_b, c.sigma_j), (3e-4, 3e-4));
        assert_eq!((c.lr_critic, c.lr_actor_disc, c.adam_beta1_actor_disc), (3e-4, 2e-4, 0.4));
        assert_eq!((c.warm_epochs, c.epoch_length), (40, 1000));
        assert_eq!((c.rollout_freq, c.rollout_batch, c.rollout_retain_epochs), (250, 128, 5));
        assert_eq!((c.q_cutoff, c.huber_threshold), (2000.0, 500.0));
        assert_eq!((c.label_smooth_low, c.label_smooth_high), (0.8, 1.0));
        c.validate().unwrap();
        TrainerConfig::toy().validate().unwrap();
    }

    #[test]
    fn noise_dim_rule() {
        let c = TrainerConfig::default();
        assert_eq!(c.noise_dim_for(2), 1);
        assert_eq!(c.noise_dim_for(17), 8);
        assert_eq!(c.noise_dim_for(111), 10);
        let fixed = TrainerConfig { noise_dim: Some(50), ..c };
        assert_eq!(fixed.noise_dim_for(2), 50);
    }

    #[test]
    fn rejects_out_of_range_values() {
        for c in [
            TrainerConfig { f_real: 1.5, ..Default::default() },
            TrainerConfig { horizon: 0, ..Default::default() },
            TrainerConfig { warm_epochs: 2000, ..Default::default() },
            TrainerConfig { label_smooth_low: 0.9, label_smooth_high: 0.8, ..Default::default() },
            TrainerConfig { lr_critic: 0.0, ..Default::default() },
        ] {
            assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
        }
    }
}
