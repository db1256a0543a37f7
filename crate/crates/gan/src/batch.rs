//! Column-stacked transitions, the offline data they come from, and the model
//! rollout buffer.

use std::collections::VecDeque;

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use sdm_core::data::Dataset;
use sdm_nn::DynamicsData;

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    /// 1 when `next_states` is terminal.
    pub dones: Array1<f64>,
}

impl Batch {
    pub fn empty(state_dim: usize, action_dim: usize) -> Self {
        Self {
            states: Array2::zeros((0, state_dim)),
            actions: Array2::zeros((0, action_dim)),
            rewards: Array1::zeros(0),
            next_states: Array2::zeros((0, state_dim)),
            dones: Array1::zeros(0),
        }
    }

    /// Continuous transitions of a dataset.
    pub fn from_dataset(data: &Dataset) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::EmptyBatch("offline data"));
        }
        let vec = |p: &sdm_core::data::Point| -> Result<Vec<f64>> {
            p.vector()
                .map(<[f64]>::to_vec)
                .ok_or_else(|| Error::ShapeMismatch("expected a continuous dataset".into()))
        };
        let n = data.len();
        let first = &data.transitions[0];
        let (sd, ad) = (vec(&first.s)?.len(), vec(&first.a)?.len());
        let mut states = Vec::with_capacity(n * sd);
        let mut actions = Vec::with_capacity(n * ad);
        let mut next_states = Vec::with_capacity(n * sd);
        let mut rewards = Vec::with_capacity(n);
        let mut dones = Vec::with_capacity(n);
        for t in &data.transitions {
            let (s, a, s2) = (vec(&t.s)?, vec(&t.a)?, vec(&t.s_next)?);
            if s.len() != sd || a.len() != ad || s2.len() != sd {
                return Err(Error::ShapeMismatch("ragged transitions".into()));
            }
            states.extend(s);
            actions.extend(a);
            next_states.extend(s2);
            rewards.push(t.r);
            dones.push(if t.done { 1.0 } else { 0.0 });
        }
        let shape = |v: Vec<f64>, d: usize| Array2::from_shape_vec((n, d), v).expect("row-major");
        Ok(Self {
            states: shape(states, sd),
            actions: shape(actions, ad),
            rewards: Array1::from(rewards),
            next_states: shape(next_states, sd),
            dones: Array1::from(dones),
        })
    }

    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state_dim(&self) -> usize {
        self.states.ncols()
    }

    pub fn action_dim(&self) -> usize {
        self.actions.ncols()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            states: self.states.select(Axis(0), idx),
            actions: self.actions.select(Axis(0), idx),
            rewards: self.rewards.select(Axis(0), idx),
            next_states: self.next_states.select(Axis(0), idx),
            dones: self.dones.select(Axis(0), idx),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Self {
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..self.len())).collect();
        self.select(&idx)
    }

    pub fn concat(parts: &[&Batch]) -> Result<Self> {
        if parts.is_empty() {
            return Err(Error::EmptyBatch("concatenation"));
        }
        let stack2 = |f: fn(&Batch) -> ArrayView2<f64>| {
            concatenate(Axis(0), &parts.iter().map(|b| f(b)).collect::<Vec<_>>())
                .map_err(|e| Error::ShapeMismatch(e.to_string()))
        };
        let stack1 = |f: fn(&Batch) -> &Array1<f64>| {
            concatenate(Axis(0), &parts.iter().map(|b| f(b).view()).collect::<Vec<_>>())
                .map_err(|e| Error::ShapeMismatch(e.to_string()))
        };
        Ok(Self {
            states: stack2(|b| b.states.view())?,
            actions: stack2(|b| b.actions.view())?,
            rewards: stack1(|b| &b.rewards)?,
            next_states: stack2(|b| b.next_states.view())?,
            dones: stack1(|b| &b.dones)?,
        })
    }

    pub fn to_dynamics_data(&self) -> DynamicsData {
        DynamicsData {
            states: self.states.clone(),
            actions: self.actions.clone(),
            rewards: self.rewards.clone(),
            next_states: self.next_states.clone(),
            dones: self.dones.clone(),
        }
    }
}

/// Reward clamp range `[r0 - k sigma_r, r1 + k sigma_r]`, frozen from the offline data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardClamp {
    pub min: f64,
    pub max: f64,
}

impl RewardClamp {
    pub fn from_rewards(rewards: &Array1<f64>, sigmas: f64) -> Result<Self> {
        if rewards.is_empty() {
            return Err(Error::EmptyBatch("reward"));
        }
        let n = rewards.len() as f64;
        let mean = rewards.sum() / n;
        let sd = (rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
        let r0 = rewards.iter().copied().fold(f64::INFINITY, f64::min);
        let r1 = rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            min: r0 - sigmas * sd,
            max: r1 + sigmas * sd,
        })
    }

    pub fn apply(&self, r: f64) -> f64 {
        r.clamp(self.min, self.max)
    }
}

/// Model rollouts, grouped by the epoch that produced them. Groups older than the
/// retain window are evicted on every push.
#[derive(Debug, Clone)]
pub struct ModelBuffer {
    retain_epochs: usize,
    chunks: VecDeque<(usize, Batch)>,
    len: usize,
}

impl ModelBuffer {
    pub fn new(retain_epochs: usize) -> Self {
        Self {
            retain_epochs,
            chunks: VecDeque::new(),
            len: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Oldest epoch still held.
    pub fn oldest_epoch(&self) -> Option<usize> {
        self.chunks.front().map(|(e, _)| *e)
    }

    pub fn evict_before(&mut self, epoch: usize) {
        while let Some((e, b)) = self.chunks.front() {
            if e + self.retain_epochs > epoch {
                break;
            }
            self.len -= b.len();
            self.chunks.pop_front();
        }
    }

    pub fn push(&mut self, epoch: usize, batch: Batch) {
        self.evict_before(epoch);
        if batch.is_empty() {
            return;
        }
        self.len += batch.len();
        match self.chunks.back_mut() {
            Some((e, last)) if *e == epoch => {
                *last = Batch::concat(&[last, &batch]).expect("same dimensions");
            }
            _ => self.chunks.push_back((epoch, batch)),
        }
    }

    /// Uniform rows with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Batch> {
        if self.is_empty() {
            return Err(Error::EmptyBatch("model buffer"));
        }
        let mut picks: Vec<Vec<usize>> = vec![Vec::new(); self.chunks.len()];
        for _ in 0..n {
            let mut i = rng.random_range(0..self.len);
            for (c, (_, b)) in self.chunks.iter().enumerate() {
                if i < b.len() {
                    picks[c].push(i);
                    break;
                }
                i -= b.len();
            }
        }
        let parts: Vec<Batch> = self
            .chunks
            .iter()
            .zip(&picks)
            .filter(|(_, p)| !p.is_empty())
            .map(|((_, b), p)| b.select(p))
            .collect();
        Batch::concat(&parts.iter().collect::<Vec<_>>())
    }
}
