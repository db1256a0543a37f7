use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Smallest standard deviation used when scaling; constant columns pass through shifted.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-column affine standardisation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub mean: Array1<f64>,
    pub std: Array1<f64>,
}

impl Normalizer {
    pub fn fit(x: ArrayView2<f64>) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(Error::TooFewSamples { needed: 1, got: 0 });
        }
        let mean = x.mean_axis(Axis(0)).expect("non-empty");
        let std = x.std_axis(Axis(0), 0.0).mapv(|s| s.max(STD_FLOOR));
        Ok(Self { mean, std })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            mean: Array1::zeros(dim),
            std: Array1::ones(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, x: ArrayView2<f64>) -> Array2<f64> {
        (&x - &self.mean) / &self.std
    }

    pub fn denormalize(&self, z: ArrayView2<f64>) -> Array2<f64> {
        &z * &self.std + &self.mean
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn roundtrip() {
        let x = array![[1.0, 5.0, -3.0], [2.0, 5.0, 10.0], [7.5, 5.0, 0.25]];
        let n = Normalizer::fit(x.view()).unwrap();
        let z = n.normalize(x.view());
        assert!((z.column(0).mean().unwrap()).abs() < 1e-15);
        let back = n.denormalize(z.view());
        assert!(back.iter().zip(x.iter()).all(|(a, b)| (a - b).abs() < 1e-10));
    }
}
