use std::f64::consts::TAU;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, Meta, Transition};
use crate::{Error, Result};

/// Recorded in the dataset metadata.
pub const CIRCLE_SPLIT_RULE: &str =
    "seeded shuffle of all points, train = first split, test = next split";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CircleConfig {
    pub n_total: usize,
    pub radius: f64,
    pub sigma: f64,
    pub split: usize,
}

impl Default for CircleConfig {
    fn default() -> Self {
        Self {
            n_total: 100_000,
            radius: 4.0,
            sigma: 0.05,
            split: 5000,
        }
    }
}

/// Noisy points on a circle; `x` is the input and `y` the target.
#[derive(Debug, Clone, PartialEq)]
pub struct CircleDataset {
    pub config: CircleConfig,
    pub seed: u64,
    /// Every generated point, in generation order.
    pub points: Vec<[f64; 2]>,
    pub train: Vec<[f64; 2]>,
    pub test: Vec<[f64; 2]>,
}

pub fn make_circle_dataset(
    n_total: usize,
    radius: f64,
    sigma: f64,
    split: usize,
    seed: u64,
) -> Result<CircleDataset> {
    if split.checked_mul(2).map_or(true, |need| need > n_total) {
        return Err(Error::InvalidSplit { n_total, split });
    }
    if !(radius.is_finite() && sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "radius {radius} and sigma {sigma} must be finite, sigma non-negative"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let theta: Vec<f64> = (0..n_total).map(|_| rng.random_range(0.0..TAU)).collect();
    let eps: Vec<f64> = (0..n_total)
        .map(|_| sigma * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let points: Vec<[f64; 2]> = theta
        .iter()
        .zip(&eps)
        .map(|(t, e)| {
            let rho = radius + e;
            [rho * t.cos(), rho * t.sin()]
        })
        .collect();
    let mut order: Vec<usize> = (0..n_total).collect();
    order.shuffle(&mut rng);
    let train = order[..split].iter().map(|&i| points[i]).collect();
    let test = order[split..2 * split].iter().map(|&i| points[i]).collect();
    Ok(CircleDataset {
        config: CircleConfig { n_total, radius, sigma, split },
        seed,
        points,
        train,
        test,
    })
}

impl CircleDataset {
    pub fn from_config(config: &CircleConfig, seed: u64) -> Result<Self> {
        make_circle_dataset(config.n_total, config.radius, config.sigma, config.split, seed)
    }

    /// Train and test halves as continuous datasets with `s = [x]`, `a = [y]`.
    pub fn to_datasets(&self) -> (Dataset, Dataset) {
        let convert = |pts: &[[f64; 2]], part: &str| {
            let mut meta = Meta::continuous(1, 1);
            meta.seed = Some(self.seed);
            meta.behavior = Some(format!("circle {part} split"));
            meta.notes.insert("split_rule".into(), CIRCLE_SPLIT_RULE.into());
            meta.notes.insert("radius".into(), self.config.radius.to_string());
            meta.notes.insert("sigma".into(), self.config.sigma.to_string());
            meta.notes.insert("n_total".into(), self.config.n_total.to_string());
            let transitions = pts
                .iter()
                .map(|[x, y]| Transition::continuous(vec![*x], vec![*y], 0.0, vec![*x], true))
                .collect();
            Dataset { meta, transitions }
        };
        (convert(&self.train, "train"), convert(&self.test, "test"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_sizes() {
        let c = CircleConfig::default();
        let data = CircleDataset::from_config(&c, 0).unwrap();
        assert_eq!(data.points.len(), 100_000);
        assert_eq!(data.train.len(), 5000);
        assert_eq!(data.test.len(), 5000);
    }

    #[test]
    fn zero_noise_is_on_the_circle() {
        let data = make_circle_dataset(1000, 4.0, 0.0, 100, 5).unwrap();
        for [x, y] in &data.points {
            assert!(((x * x + y * y).sqrt() - 4.0).abs() < 1e-12);
        }
    }

    #[test]
    fn split_too_large() {
        assert!(matches!(
            make_circle_dataset(10, 4.0, 0.05, 6, 0),
            Err(Error::InvalidSplit { n_total: 10, split: 6 })
        ));
        assert!(make_circle_dataset(10, 4.0, 0.05, 5, 0).is_ok());
    }

    #[test]
    fn train_and_test_are_disjoint_draws() {
        let data = make_circle_dataset(200, 4.0, 0.05, 100, 9).unwrap();
        for p in &data.train {
            assert!(!data.test.contains(p));
        }
        let again = make_circle_dataset(200, 4.0, 0.05, 100, 9).unwrap();
        assert_eq!(data, again);
    }

    #[test]
    fn datasets_carry_the_split_rule() {
        let data = make_circle_dataset(20, 4.0, 0.05, 5, 1).unwrap();
        let (train, test) = data.to_datasets();
        assert_eq!(train.len(), 5);
        assert_eq!(test.transitions[0].a.vector().unwrap()[0], data.test[0][1]);
        assert_eq!(train.meta.notes["split_rule"], CIRCLE_SPLIT_RULE);
    }
}
