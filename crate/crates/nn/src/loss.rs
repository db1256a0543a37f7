//! Losses as `(value, gradient w.r.t. the inputs)` pairs. Every loss is a mean
//! over batch rows.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::mlp::sigmoid;
use crate::{Error, Result};

const HALF_LN_TAU: f64 = 0.918_938_533_204_672_8;

fn same_dim(a: (usize, usize), b: (usize, usize), what: &str) -> Result<()> {
    if a != b {
        return Err(Error::ShapeMismatch(format!("{what}: {a:?} vs {b:?}")));
    }
    Ok(())
}

fn finite(value: f64, what: &'static str) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::NonFiniteLoss(what))
    }
}

/// `log(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Gaussian negative log-likelihood summed over output dimensions and averaged
/// over rows. Returns `(loss, d/d mean, d/d log_std)`.
pub fn gaussian_nll(
    mean: ArrayView2<f64>,
    log_std: ArrayView2<f64>,
    target: ArrayView2<f64>,
) -> Result<(f64, Array2<f64>, Array2<f64>)> {
    same_dim(mean.dim(), log_std.dim(), "mean vs log-std")?;
    same_dim(mean.dim(), target.dim(), "mean vs target")?;
    let n = mean.nrows().max(1) as f64;
    let mut loss = 0.0;
    let mut d_mean = Array2::zeros(mean.dim());
    let mut d_log_std = Array2::zeros(mean.dim());
    Zip::from(&mut d_mean)
        .and(&mut d_log_std)
        .and(mean)
        .and(log_std)
        .and(target)
        .for_each(|dm, ds, &m, &ls, &t| {
            let inv_var = (-2.0 * ls).exp();
            let r = m - t;
            loss += 0.5 * r * r * inv_var + ls + HALF_LN_TAU;
            *dm = r * inv_var / n;
            *ds = (1.0 - r * r * inv_var) / n;
        });
    Ok((finite(loss / n, "gaussian nll")?, d_mean, d_log_std))
}

/// Binary cross-entropy on logits with a weight on the positive class.
pub fn weighted_bce_logits(
    logits: ArrayView1<f64>,
    labels: ArrayView1<f64>,
    pos_weight: f64,
) -> Result<(f64, Array1<f64>)> {
    if logits.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} logits vs {} labels",
            logits.len(),
            labels.len()
        )));
    }
    let n = logits.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Array1::zeros(logits.len());
    for i in 0..logits.len() {
        let (z, y) = (logits[i], labels[i]);
        // -log sigma(z) = softplus(-z), -log(1 - sigma(z)) = softplus(z)
        loss += pos_weight * y * softplus(-z) + (1.0 - y) * softplus(z);
        let p = sigmoid(z);
        grad[i] = (pos_weight * y * (p - 1.0) + (1.0 - y) * p) / n;
    }
    Ok((finite(loss / n, "weighted bce")?, grad))
}

/// Huber loss averaged over every element.
pub fn huber(pred: ArrayView2<f64>, target: ArrayView2<f64>, delta: f64) -> Result<(f64, Array2<f64>)> {
    same_dim(pred.dim(), target.dim(), "prediction vs target")?;
    let n = pred.len().max(1) as f64;
    let mut loss = 0.0;
    let mut grad = Array2::zeros(pred.dim());
    Zip::from(&mut grad).and(pred).and(target).for_each(|g, &p, &t| {
        let r = p - t;
        if r.abs() <= delta {
            loss += 0.5 * r * r;
            *g = r / n;
        } else {
            loss += delta * (r.abs() - 0.5 * delta);
            *g = delta * r.signum() / n;
        }
    });
    Ok((finite(loss / n, "huber")?, grad))
}

/// Mean squared error averaged over every element.
pub fn mse(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
    same_dim(pred.dim(), target.dim(), "prediction vs target")?;
    let n = pred.len().max(1) as f64;
    let diff = &pred - &target;
    let loss = diff.iter().map(|r| r * r).sum::<f64>() / n;
    Ok((finite(loss, "mse")?, diff * (2.0 / n)))
}

/// Discriminator loss: BCE of real logits against (possibly smoothed) labels plus
/// BCE of fake logits against 0. Returns `(loss, d/d real, d/d fake)`.
pub fn discriminator_bce(
    real_logits: ArrayView1<f64>,
    real_labels: ArrayView1<f64>,
    fake_logits: ArrayView1<f64>,
) -> Result<(f64, Array1<f64>, Array1<f64>)> {
    let (lr, gr) = weighted_bce_logits(real_logits, real_labels, 1.0)?;
    let zeros = Array1::zeros(fake_logits.len());
    let (lf, gf) = weighted_bce_logits(fake_logits, zeros.view(), 1.0)?;
    Ok((lr + lf, gr, gf))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorLoss {
    /// `-mean log D(fake)`.
    NonSaturating,
    /// `mean log(1 - D(fake))`.
    Saturating,
}

/// Generator loss on discriminator logits of generated samples.
pub fn generator_loss(fake_logits: ArrayView1<f64>, kind: GeneratorLoss) -> Result<(f64, Array1<f64>)> {
    let n = fake_logits.len().max(1) as f64;
    let (loss, grad) = match kind {
        GeneratorLoss::NonSaturating => (
            fake_logits.iter().map(|z| softplus(-z)).sum::<f64>() / n,
            fake_logits.mapv(|z| (sigmoid(z) - 1.0) / n),
        ),
        GeneratorLoss::Saturating => (
            -fake_logits.iter().map(|z| softplus(*z)).sum::<f64>() / n,
            fake_logits.mapv(|z| -sigmoid(z) / n),
        ),
    };
    Ok((finite(loss, "generator")?, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn huber_slope_is_capped() {
        let (_, g) = huber(array![[1e6]].view(), array![[0.0]].view(), 500.0).unwrap();
        assert_eq!(g[[0, 0]], 500.0);
        let (l, g) = huber(array![[2.0]].view(), array![[0.0]].view(), 500.0).unwrap();
        assert_eq!((l, g[[0, 0]]), (2.0, 2.0));
    }

    #[test]
    fn bce_is_stable_at_extremes() {
        let (l, g) = weighted_bce_logits(array![800.0, -800.0].view(), array![1.0, 0.0].view(), 1.0).unwrap();
        assert!(l.abs() < 1e-300 && g.iter().all(|x| x.abs() < 1e-300));
        let (l, _) = weighted_bce_logits(array![-800.0].view(), array![1.0].view(), 2.0).unwrap();
        assert_eq!(l, 1600.0);
    }

    #[test]
    fn gaussian_nll_at_standard_normal() {
        let (l, dm, ds) =
            gaussian_nll(array![[0.0]].view(), array![[0.0]].view(), array![[1.0]].view()).unwrap();
        assert!((l - (0.5 + HALF_LN_TAU)).abs() < 1e-15);
        assert_eq!(dm[[0, 0]], -1.0);
        assert_eq!(ds[[0, 0]], 0.0);
    }

    #[test]
    fn generator_forms_agree_in_sign() {
        let z = array![0.3, -1.2];
        let (_, a) = generator_loss(z.view(), GeneratorLoss::NonSaturating).unwrap();
        let (_, b) = generator_loss(z.view(), GeneratorLoss::Saturating).unwrap();
        assert!(a.iter().zip(b.iter()).all(|(x, y)| *x < 0.0 && *y < 0.0));
    }

    #[test]
    fn non_finite_losses_rejected() {
        assert!(matches!(
            mse(array![[f64::NAN]].view(), array![[0.0]].view()),
            Err(Error::NonFiniteLoss(_))
        ));
    }
}
