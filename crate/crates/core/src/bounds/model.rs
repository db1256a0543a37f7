use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::divergence::{kl_divergence, total_variation};
use crate::mdp::{StateActionDist, TabularMdp};
use crate::{Error, Result};

/// A fitted transition model `P_hat[s][a][s']` with the counts it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularModel {
    pub n_states: usize,
    pub n_actions: usize,
    pub smoothing: f64,
    /// Flattened `[s][a][s']`.
    pub transition: Vec<f64>,
    /// Visit counts `n(s, a, s')`, same layout.
    pub counts: Vec<f64>,
}

impl TabularModel {
    /// The true dynamics viewed as a model; counts are zero.
    pub fn exact(mdp: &TabularMdp) -> Self {
        Self {
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            smoothing: 0.0,
            transition: mdp.transition().to_vec(),
            counts: vec![0.0; mdp.transition().len()],
        }
    }

    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    /// `base` with its transition tensor replaced by this model.
    pub fn dynamics(&self, base: &TabularMdp) -> Result<TabularMdp> {
        if base.n_states() != self.n_states || base.n_actions() != self.n_actions {
            return Err(Error::DimensionMismatch(format!(
                "model is {}x{}, MDP is {}x{}",
                self.n_states,
                self.n_actions,
                base.n_states(),
                base.n_actions()
            )));
        }
        base.with_transition(&self.transition)
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::from)?;
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Smoothed maximum-likelihood fit:
/// `P_hat(s'|s,a) = (n(s,a,s') + eps) / (n(s,a) + eps * |S|)`.
pub fn mle_tabular_model(dataset: &Dataset, smoothing: f64) -> Result<TabularModel> {
    let (ns, na) = dataset.tabular_dims()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(smoothing > 0.0 && smoothing.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "smoothing must be positive and finite, got {smoothing}"
        )));
    }
    let mut counts = vec![0.0; ns * na * ns];
    for (s, a, _, s_next) in dataset.tabular_steps()? {
        counts[(s * na + a) * ns + s_next] += 1.0;
    }
    let mut transition = Vec::with_capacity(counts.len());
    for row in counts.chunks(ns) {
        let total: f64 = row.iter().sum::<f64>() + smoothing * ns as f64;
        transition.extend(row.iter().map(|c| (c + smoothing) / total));
    }
    Ok(TabularModel {
        n_states: ns,
        n_actions: na,
        smoothing,
        transition,
        counts,
    })
}

/// Per-pair `TV(P*(.|s,a), P_hat(.|s,a))` and `KL(P* || P_hat)`.
pub fn row_divergences(true_mdp: &TabularMdp, model: &TabularMdp) -> Result<(Vec<f64>, Vec<f64>)> {
    if true_mdp.n_states() != model.n_states() || true_mdp.n_actions() != model.n_actions() {
        return Err(Error::DimensionMismatch("true MDP and model differ in shape".into()));
    }
    let mut tv = Vec::with_capacity(true_mdp.n_pairs());
    let mut kl = Vec::with_capacity(true_mdp.n_pairs());
    for s in 0..true_mdp.n_states() {
        for a in 0..true_mdp.n_actions() {
            tv.push(total_variation(true_mdp.row(s, a), model.row(s, a))?);
            kl.push(kl_divergence(true_mdp.row(s, a), model.row(s, a))?);
        }
    }
    Ok((tv, kl))
}

/// `E_{(s,a) ~ weights}[KL(P*(.|s,a) || P_hat(.|s,a))]`.
pub fn expected_model_kl(
    true_mdp: &TabularMdp,
    model: &TabularMdp,
    weights: &StateActionDist,
) -> Result<f64> {
    let (_, kl) = row_divergences(true_mdp, model)?;
    Ok(weights.expectation(&kl))
}
