//! Probabilistic dynamics ensemble: every member maps a normalised `(s, a)` to a
//! Gaussian over the normalised `(r, s' - s)` plus a termination logit.

use std::path::Path;

use ndarray::{concatenate, s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::adam::Adam;
use crate::loss::{gaussian_nll, weighted_bce_logits};
use crate::mlp::{sigmoid, Activation, Mlp};
use crate::normalize::Normalizer;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnsembleConfig {
    pub n_members: usize,
    pub n_elites: usize,
    pub hidden: Vec<usize>,
    pub slope: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub holdout_fraction: f64,
    /// Soft clamp range of the predicted log standard deviation.
    pub log_std_min: f64,
    pub log_std_max: f64,
    pub bootstrap: bool,
    /// Predicted termination probability at or above which a sample is terminal.
    pub termination_cutoff: f64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        Self {
            n_members: 7,
            n_elites: 5,
            hidden: vec![200, 200, 200, 200],
            slope: crate::mlp::DEFAULT_SLOPE,
            lr: 1e-3,
            batch_size: 256,
            epochs: 50,
            holdout_fraction: 0.1,
            log_std_min: -5.0,
            log_std_max: 2.0,
            bootstrap: true,
            termination_cutoff: 0.5,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_members == 0 || self.n_elites == 0 || self.n_elites > self.n_members {
            return bad("need 1 <= n_elites <= n_members");
        }
        if self.batch_size == 0 || !(self.lr > 0.0) {
            return bad("batch_size and lr must be positive");
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return bad("holdout_fraction must lie in [0, 1)");
        }
        if !(self.log_std_min < self.log_std_max) {
            return bad("log_std_min must be below log_std_max");
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serialises");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}

/// Column-stacked transitions for model fitting.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsData {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    /// 1 for terminal transitions, 0 otherwise.
    pub dones: Array1<f64>,
}

impl DynamicsData {
    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn validate(&self) -> Result<()> {
        let n = self.len();
        if self.actions.nrows() != n
            || self.rewards.len() != n
            || self.next_states.nrows() != n
            || self.dones.len() != n
            || self.next_states.ncols() != self.states.ncols()
        {
            return Err(Error::ShapeMismatch("dynamics data columns disagree".into()));
        }
        Ok(())
    }

    fn inputs(&self) -> Array2<f64> {
        concatenate(Axis(1), &[self.states.view(), self.actions.view()]).expect("same rows")
    }

    fn targets(&self) -> Array2<f64> {
        let delta = &self.next_states - &self.states;
        concatenate(Axis(1), &[self.rewards.view().insert_axis(Axis(1)), delta.view()]).expect("same rows")
    }
}

/// `lo + (hi - lo) sigmoid(x)`, strictly inside `(lo, hi)`, and its derivative.
fn soft_clamp(x: f64, lo: f64, hi: f64) -> (f64, f64) {
    let p = sigmoid(x);
    (lo + (hi - lo) * p, (hi - lo) * p * (1.0 - p))
}

/// Loss of one member on a normalised minibatch and its parameter gradient:
/// Gaussian NLL of the targets plus weighted BCE of the termination head.
pub fn dynamics_loss(
    member: &Mlp,
    inputs: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    dones: ArrayView1<f64>,
    pos_weight: f64,
    log_std_range: (f64, f64),
) -> Result<(f64, Vec<f64>)> {
    let k = targets.ncols();
    if member.output_dim() != 2 * k + 1 {
        return Err(Error::ShapeMismatch(format!(
            "member outputs {}, expected {}",
            member.output_dim(),
            2 * k + 1
        )));
    }
    let cache = member.forward_cached(inputs)?;
    let out = cache.output();
    let mean = out.slice(s![.., ..k]);
    let raw = out.slice(s![.., k..2 * k]);
    let clamped = raw.mapv(|x| soft_clamp(x, log_std_range.0, log_std_range.1));
    let log_std = clamped.mapv(|(v, _)| v);
    let (nll, d_mean, d_log_std) = gaussian_nll(mean, log_std.view(), targets)?;
    let (bce, d_logit) = weighted_bce_logits(out.column(2 * k), dones, pos_weight)?;
    let mut grad_out = Array2::zeros(out.dim());
    grad_out.slice_mut(s![.., ..k]).assign(&d_mean);
    grad_out
        .slice_mut(s![.., k..2 * k])
        .assign(&(&d_log_std * &clamped.mapv(|(_, d)| d)));
    grad_out.column_mut(2 * k).assign(&d_logit);
    let (grads, _) = member.backward(&cache, grad_out.view())?;
    Ok((nll + bce, grads))
}

/// One elite's prediction in raw (denormalised) units.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberPrediction {
    /// Columns `(r, s' - s)`.
    pub mean: Array2<f64>,
    pub std: Array2<f64>,
    pub termination_prob: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSample {
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    pub dones: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DynamicsEnsemble {
    pub config: EnsembleConfig,
    pub config_hash: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub members: Vec<Mlp>,
    pub elites: Vec<usize>,
    pub validation_losses: Vec<f64>,
    pub input_norm: Normalizer,
    pub target_norm: Normalizer,
    pub pos_weight: f64,
}

/// Best `n` indices by loss, ties to the lower index.
pub fn select_elites(losses: &[f64], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..losses.len()).collect();
    order.sort_by(|&a, &b| losses[a].total_cmp(&losses[b]).then(a.cmp(&b)));
    order.truncate(n);
    order
}

fn rows(x: ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    x.select(Axis(0), idx)
}

impl DynamicsEnsemble {
    /// Fits every member on its own bootstrap of the training split and picks the
    /// elites on a shared holdout split.
    pub fn train(data: &DynamicsData, config: &EnsembleConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        data.validate()?;
        let n = data.len();
        let n_holdout = ((n as f64) * config.holdout_fraction).ceil() as usize;
        if n < n_holdout + 2 || (config.holdout_fraction > 0.0 && n_holdout == 0) {
            return Err(Error::TooFewSamples { needed: n_holdout + 2, got: n });
        }
        let (state_dim, action_dim) = (data.states.ncols(), data.actions.ncols());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let (holdout, train) = order.split_at(n_holdout);

        let inputs = data.inputs();
        let targets = data.targets();
        let input_norm = Normalizer::fit(rows(inputs.view(), train).view())?;
        let target_norm = Normalizer::fit(rows(targets.view(), train).view())?;
        let x = input_norm.normalize(inputs.view());
        let y = target_norm.normalize(targets.view());
        let terminal: f64 = train.iter().map(|&i| data.dones[i]).sum();
        let pos_weight = if terminal > 0.0 {
            (train.len() as f64 - terminal) / terminal
        } else {
            1.0
        };
        let range = (config.log_std_min, config.log_std_max);
        let k = 1 + state_dim;
        let mut sizes = vec![state_dim + action_dim];
        sizes.extend(&config.hidden);
        sizes.push(2 * k + 1);

        let mut members = Vec::with_capacity(config.n_members);
        for m in 0..config.n_members {
            let mut member_rng = ChaCha8Rng::seed_from_u64(seed);
            member_rng.set_stream(m as u64 + 1);
            let mut net = Mlp::new(&sizes, config.slope, Activation::Identity, &mut member_rng);
            let mut adam = Adam::new(net.n_params(), config.lr, 0.9, 0.999);
            let mut sample: Vec<usize> = if config.bootstrap {
                (0..train.len())
                    .map(|_| train[member_rng.random_range(0..train.len())])
                    .collect()
            } else {
                train.to_vec()
            };
            for _ in 0..config.epochs {
                sample.shuffle(&mut member_rng);
                for batch in sample.chunks(config.batch_size) {
                    let (_, grads) = dynamics_loss(
                        &net,
                        rows(x.view(), batch).view(),
                        rows(y.view(), batch).view(),
                        data.dones.select(Axis(0), batch).view(),
                        pos_weight,
                        range,
                    )?;
                    adam.step(net.params_mut(), &grads)?;
                }
            }
            members.push(net);
        }

        let eval_idx = if holdout.is_empty() { train } else { holdout };
        let hx = rows(x.view(), eval_idx);
        let hy = rows(y.view(), eval_idx);
        let hd = data.dones.select(Axis(0), eval_idx);
        let validation_losses = members
            .iter()
            .map(|net| -> Result<f64> {
                let out = net.forward(hx.view())?;
                let mse = (&out.slice(s![.., ..k]) - &hy).mapv(|r| r * r).mean().unwrap_or(0.0);
                let (bce, _) = weighted_bce_logits(out.column(2 * k), hd.view(), pos_weight)?;
                Ok(mse + bce)
            })
            .collect::<Result<Vec<_>>>()?;
        let elites = select_elites(&validation_losses, config.n_elites);
        Ok(Self {
            config: config.clone(),
            config_hash: config.hash(),
            state_dim,
            action_dim,
            members,
            elites,
            validation_losses,
            input_norm,
            target_norm,
            pos_weight,
        })
    }

    fn check_trained(&self) -> Result<()> {
        if self.elites.is_empty() || self.members.is_empty() {
            return Err(Error::UntrainedEnsemble);
        }
        Ok(())
    }

    fn normalized_input(&self, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<Array2<f64>> {
        if states.ncols() != self.state_dim || actions.ncols() != self.action_dim || states.nrows() != actions.nrows() {
            return Err(Error::ShapeMismatch(format!(
                "states {:?} and actions {:?} for a {}+{} model",
                states.dim(),
                actions.dim(),
                self.state_dim,
                self.action_dim
            )));
        }
        let x = concatenate(Axis(1), &[states, actions]).expect("same rows");
        Ok(self.input_norm.normalize(x.view()))
    }

    /// Prediction of member `m` in raw units.
    pub fn predict_member(&self, m: usize, states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Result<MemberPrediction> {
        self.check_trained()?;
        let x = self.normalized_input(states, actions)?;
        let out = self.members[m].forward(x.view())?;
        let k = 1 + self.state_dim;
        let mean = self.target_norm.denormalize(out.slice(s![.., ..k]));
        let log_std = out
            .slice(s![.., k..2 * k])
            .mapv(|v| soft_clamp(v, self.config.log_std_min, self.config.log_std_max).0);
        let std = log_std.mapv(f64::exp) * &self.target_norm.std;
        let termination_prob = out.column(2 * k).mapv(sigmoid);
        Ok(MemberPrediction {
            mean,
            std,
            termination_prob,
        })
    }

    /// Per row: a uniformly chosen elite, then a Gaussian draw of `(r, s' - s)`.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
        rng: &mut R,
    ) -> Result<ModelSample> {
        self.check_trained()?;
        let preds = self
            .elites
            .iter()
            .map(|&m| self.predict_member(m, states, actions))
            .collect::<Result<Vec<_>>>()?;
        let n = states.nrows();
        let k = 1 + self.state_dim;
        let mut rewards = Array1::zeros(n);
        let mut next_states = Array2::zeros((n, self.state_dim));
        let mut dones = Vec::with_capacity(n);
        for i in 0..n {
            let p = &preds[rng.random_range(0..preds.len())];
            for j in 0..k {
                let z: f64 = rng.sample(StandardNormal);
                let v = p.mean[[i, j]] + p.std[[i, j]] * z;
                if j == 0 {
                    rewards[i] = v;
                } else {
                    next_states[[i, j - 1]] = states[[i, j - 1]] + v;
                }
            }
            dones.push(p.termination_prob[i] >= self.config.termination_cutoff);
        }
        Ok(ModelSample {
            rewards,
            next_states,
            dones,
        })
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_vec(self)?)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_slice(&std::fs::read(path)?)?)
    }
}
