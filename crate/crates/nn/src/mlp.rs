use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default negative slope of the hidden LeakyReLU units.
pub const DEFAULT_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Fully connected network. Hidden layers use LeakyReLU; the last layer uses `output`.
///
/// Parameters live in one flat vector, layer by layer, each as a row-major
/// `fan_in x fan_out` weight block followed by `fan_out` biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    slope: f64,
    output: Activation,
    params: Vec<f64>,
}

/// Intermediate values of a forward pass, needed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Input to every layer.
    inputs: Vec<Array2<f64>>,
    /// Pre-activations of hidden layers.
    pre: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl ForwardCache {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }
}

fn param_count(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// PyTorch-style initialisation: weights and biases uniform in `+-1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], slope: f64, output: Activation, rng: &mut R) -> Self {
        let mut params = Vec::with_capacity(param_count(sizes));
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..w[0] * w[1] + w[1] {
                params.push(rng.random_range(-bound..bound));
            }
        }
        Self {
            sizes: sizes.to_vec(),
            slope,
            output,
            params,
        }
    }

    pub fn zeros(sizes: &[usize], slope: f64, output: Activation) -> Self {
        Self {
            sizes: sizes.to_vec(),
            slope,
            output,
            params: vec![0.0; param_count(sizes)],
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("at least one layer")
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameters given, network has {}",
                params.len(),
                self.params.len()
            )));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    fn n_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    fn layer(&self, l: usize) -> (ArrayView2<'_, f64>, ArrayView1<'_, f64>) {
        let off = param_count(&self.sizes[..=l]);
        let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
        let w = ArrayView2::from_shape((fan_in, fan_out), &self.params[off..off + fan_in * fan_out])
            .expect("layout");
        let b = ArrayView1::from(&self.params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out]);
        (w, b)
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn leaky(&self, x: f64) -> f64 {
        if x > 0.0 {
            x
        } else {
            self.slope * x
        }
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut h = x.to_owned();
        for l in 0..self.n_layers() {
            let (w, b) = self.layer(l);
            let mut z = h.dot(&w) + &b;
            if l + 1 < self.n_layers() {
                z.mapv_inplace(|v| self.leaky(v));
            } else {
                z.mapv_inplace(|v| self.output.apply(v));
            }
            h = z;
        }
        Ok(h)
    }

    pub fn forward_cached(&self, x: ArrayView2<f64>) -> Result<ForwardCache> {
        self.check_input(&x)?;
        let mut inputs = Vec::with_capacity(self.n_layers());
        let mut pre = Vec::with_capacity(self.n_layers() - 1);
        let mut h = x.to_owned();
        for l in 0..self.n_layers() {
            let (w, b) = self.layer(l);
            let z = h.dot(&w) + &b;
            inputs.push(h);
            if l + 1 < self.n_layers() {
                h = z.mapv(|v| self.leaky(v));
                pre.push(z);
            } else {
                h = z.mapv(|v| self.output.apply(v));
            }
        }
        Ok(ForwardCache {
            inputs,
            pre,
            output: h,
        })
    }

    /// Gradients of a scalar loss with respect to the parameters and the input,
    /// given `grad_out = dL/d(output)`. The LeakyReLU derivative at 0 is the slope.
    pub fn backward(&self, cache: &ForwardCache, grad_out: ArrayView2<f64>) -> Result<(Vec<f64>, Array2<f64>)> {
        if grad_out.dim() != cache.output.dim() {
            return Err(Error::ShapeMismatch(format!(
                "output gradient {:?} vs output {:?}",
                grad_out.dim(),
                cache.output.dim()
            )));
        }
        let mut grads = vec![0.0; self.params.len()];
        let mut delta = &grad_out * &cache.output.mapv(|y| self.output.derivative_from_output(y));
        for l in (0..self.n_layers()).rev() {
            let (w, _) = self.layer(l);
            let off = param_count(&self.sizes[..=l]);
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let dw = cache.inputs[l].t().dot(&delta);
            let db = delta.sum_axis(Axis(0));
            for (dst, src) in grads[off..off + fan_in * fan_out].iter_mut().zip(dw.iter()) {
                *dst = *src;
            }
            for (dst, src) in grads[off + fan_in * fan_out..off + fan_in * fan_out + fan_out]
                .iter_mut()
                .zip(db.iter())
            {
                *dst = *src;
            }
            let upstream = delta.dot(&w.t());
            if l > 0 {
                let slope = self.slope;
                delta = upstream * &cache.pre[l - 1].mapv(|z| if z > 0.0 { 1.0 } else { slope });
            } else {
                delta = upstream;
            }
        }
        Ok((grads, delta))
    }

    /// `self <- tau * source + (1 - tau) * self`.
    pub fn soft_update_from(&mut self, source: &Mlp, tau: f64) -> Result<()> {
        if source.params.len() != self.params.len() {
            return Err(Error::ShapeMismatch("soft update between different networks".into()));
        }
        for (t, s) in self.params.iter_mut().zip(&source.params) {
            *t = tau * s + (1.0 - tau) * *t;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let net = Mlp::zeros(&[3, 4, 2], DEFAULT_SLOPE, Activation::Identity);
        let out = net.forward(array![[1.0, -2.0, 3.0]].view()).unwrap();
        assert_eq!(out, array![[0.0, 0.0]]);
    }

    #[test]
    fn identity_layer_passes_positive_input() {
        let mut net = Mlp::zeros(&[2, 2, 2], DEFAULT_SLOPE, Activation::Identity);
        // both layers identity weights, zero bias
        net.set_params(&[1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0]).unwrap();
        let x = array![[0.3, 2.5]];
        assert_eq!(net.forward(x.view()).unwrap(), x);
        // the hidden LeakyReLU scales negatives
        let out = net.forward(array![[-1.0, 1.0]].view()).unwrap();
        assert_eq!(out, array![[-0.01, 1.0]]);
    }

    #[test]
    fn seeded_networks_are_reproducible() {
        let a = Mlp::new(&[3, 8, 2], DEFAULT_SLOPE, Activation::Tanh, &mut ChaCha8Rng::seed_from_u64(4));
        let b = Mlp::new(&[3, 8, 2], DEFAULT_SLOPE, Activation::Tanh, &mut ChaCha8Rng::seed_from_u64(4));
        let x = array![[0.1, 0.2, 0.3], [-1.0, 0.0, 2.0]];
        let ya = a.forward(x.view()).unwrap();
        assert_eq!(ya, b.forward(x.view()).unwrap());
        assert!(ya.iter().all(|v| v.is_finite() && v.abs() <= 1.0));
        assert_eq!(a.forward_cached(x.view()).unwrap().output(), &ya);
    }

    #[test]
    fn wrong_input_width() {
        let net = Mlp::zeros(&[3, 2], DEFAULT_SLOPE, Activation::Identity);
        assert!(matches!(
            net.forward(array![[1.0, 2.0]].view()),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn one_parameter_quadratic() {
        // y = w x with x = 1, loss (y - t)^2: dL/dw = 2 (w - t)
        let mut net = Mlp::zeros(&[1, 1], DEFAULT_SLOPE, Activation::Identity);
        net.set_params(&[0.7, 0.0]).unwrap();
        let cache = net.forward_cached(array![[1.0]].view()).unwrap();
        let t = 0.2;
        let g = 2.0 * (cache.output()[[0, 0]] - t);
        let (grads, _) = net.backward(&cache, array![[g]].view()).unwrap();
        assert_eq!(grads[0], 2.0 * (0.7 - t));
        assert_eq!(grads[1], 2.0 * (0.7 - t));
    }

    #[test]
    fn soft_update_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let src = Mlp::new(&[2, 3, 1], DEFAULT_SLOPE, Activation::Identity, &mut rng);
        let mut dst = Mlp::new(&[2, 3, 1], DEFAULT_SLOPE, Activation::Identity, &mut rng);
        let old = dst.params().to_vec();
        dst.soft_update_from(&src, 0.005).unwrap();
        for ((n, o), s) in dst.params().iter().zip(&old).zip(src.params()) {
            assert_eq!(*n, 0.005 * s + (1.0 - 0.005) * o);
        }
    }
}
