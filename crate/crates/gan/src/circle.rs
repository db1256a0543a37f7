//! Behaviour cloning on the circle dataset with conditional GANs: `x` is the state,
//! `y` the action, and `p(y | x)` has two modes at almost every `x`.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sdm_core::data::CircleDataset;
use sdm_nn::loss::{discriminator_bce, generator_loss, GeneratorLoss};
use sdm_nn::{Activation, Adam, ForwardCache, Mlp};

use crate::nets::{hstack, standard_normal};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// `y = G(x, z)` with `z ~ N(0, I)`.
    Implicit,
    /// `y ~ N(mean(x), exp(log_std(x))^2)`, reparameterised.
    Gaussian,
    /// `y = G(x)`.
    Deterministic,
}

impl GeneratorKind {
    pub const ALL: [GeneratorKind; 3] = [GeneratorKind::Implicit, GeneratorKind::Gaussian, GeneratorKind::Deterministic];

    pub fn name(self) -> &'static str {
        match self {
            GeneratorKind::Implicit => "implicit",
            GeneratorKind::Gaussian => "gaussian",
            GeneratorKind::Deterministic => "deterministic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CloneConfig {
    /// Width of the three hidden ReLU layers.
    pub dim: usize,
    pub noise_dim: usize,
    pub batch_size: usize,
    /// Discriminator updates per generator update.
    pub critic_iters: usize,
    /// One-sided smoothed label of the true pairs.
    pub label_smoothing: f64,
    /// Generator updates.
    pub iterations: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub log_std_min: f64,
    pub log_std_max: f64,
    pub coverage_draws: usize,
    pub coverage_max_abs_x: f64,
    pub coverage_sigmas: f64,
}

impl Default for CloneConfig {
    fn default() -> Self {
        Self {
            dim: 128,
            noise_dim: 2,
            batch_size: 256,
            critic_iters: 5,
            label_smoothing: 0.9,
            iterations: 3000,
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.9,
            log_std_min: -5.0,
            log_std_max: 5.0,
            coverage_draws: 256,
            coverage_max_abs_x: 3.5,
            coverage_sigmas: 3.0,
        }
    }
}

impl CloneConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.batch_size == 0 || self.critic_iters == 0 || self.coverage_draws == 0 {
            return Err(Error::InvalidConfig("dim, batch_size, critic_iters and coverage_draws must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.label_smoothing) || !(self.lr > 0.0) {
            return Err(Error::InvalidConfig("label_smoothing must lie in [0, 1] and lr be positive".into()));
        }
        if !(self.log_std_min < self.log_std_max) {
            return Err(Error::InvalidConfig("log_std_min must be below log_std_max".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub kind: GeneratorKind,
    pub net: Mlp,
    pub noise_dim: usize,
    pub log_std_min: f64,
    pub log_std_max: f64,
}

/// What a training forward pass needs to keep for the backward pass.
pub struct GeneratorCache {
    cache: ForwardCache,
    /// Gaussian draws of the Gaussian generator.
    eps: Array2<f64>,
}

impl Generator {
    pub fn new<R: Rng + ?Sized>(kind: GeneratorKind, config: &CloneConfig, rng: &mut R) -> Self {
        let d = config.dim;
        let (input, output) = match kind {
            GeneratorKind::Implicit => (1 + config.noise_dim, 1),
            GeneratorKind::Gaussian => (1, 2),
            GeneratorKind::Deterministic => (1, 1),
        };
        Self {
            kind,
            net: Mlp::new(&[input, d, d, d, output], 0.0, Activation::Identity, rng),
            noise_dim: if kind == GeneratorKind::Implicit { config.noise_dim } else { 0 },
            log_std_min: config.log_std_min,
            log_std_max: config.log_std_max,
        }
    }

    /// Samples `y` for every row of `x` (one column) and keeps the backward cache.
    pub fn forward<R: Rng + ?Sized>(&self, x: ArrayView2<f64>, rng: &mut R) -> Result<(Array2<f64>, GeneratorCache)> {
        let n = x.nrows();
        match self.kind {
            GeneratorKind::Implicit => {
                let z = standard_normal(n, self.noise_dim, rng);
                let cache = self.net.forward_cached(hstack(x, z.view())?.view())?;
                Ok((cache.output().clone(), GeneratorCache { cache, eps: Array2::zeros((0, 0)) }))
            }
            GeneratorKind::Deterministic => {
                let cache = self.net.forward_cached(x)?;
                Ok((cache.output().clone(), GeneratorCache { cache, eps: Array2::zeros((0, 0)) }))
            }
            GeneratorKind::Gaussian => {
                let cache = self.net.forward_cached(x)?;
                let eps = standard_normal(n, 1, rng);
                let out = cache.output();
                let y = Array2::from_shape_fn((n, 1), |(i, _)| {
                    let ls = out[[i, 1]].clamp(self.log_std_min, self.log_std_max);
                    out[[i, 0]] + ls.exp() * eps[[i, 0]]
                });
                Ok((y, GeneratorCache { cache, eps }))
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, x: ArrayView2<f64>, rng: &mut R) -> Result<Array2<f64>> {
        Ok(self.forward(x, rng)?.0)
    }

    /// Parameter gradient given `dL/dy`. The clamp of the Gaussian log-std passes no
    /// gradient outside its range.
    pub fn backward(&self, cache: &GeneratorCache, grad_y: ArrayView2<f64>) -> Result<Vec<f64>> {
        let grad_out = match self.kind {
            GeneratorKind::Implicit | GeneratorKind::Deterministic => grad_y.to_owned(),
            GeneratorKind::Gaussian => {
                let out = cache.cache.output();
                Array2::from_shape_fn(out.dim(), |(i, j)| {
                    if j == 0 {
                        grad_y[[i, 0]]
                    } else {
                        let raw = out[[i, 1]];
                        if raw < self.log_std_min || raw > self.log_std_max {
                            0.0
                        } else {
                            grad_y[[i, 0]] * raw.exp() * cache.eps[[i, 0]]
                        }
                    }
                })
            }
        };
        Ok(self.net.backward(&cache.cache, grad_out.view())?.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloneOutcome {
    pub generator: Generator,
    pub coverage: f64,
    /// Mean discriminator and generator losses over the last tenth of training.
    pub final_disc_loss: f64,
    pub final_gen_loss: f64,
}

fn pairs(points: &[[f64; 2]]) -> Array2<f64> {
    Array2::from_shape_fn((points.len(), 2), |(i, j)| points[i][j])
}

/// Trains `kind` against a ReLU discriminator on `(x, y)` pairs of the training
/// split, then measures mode coverage on the test split.
pub fn behavior_clone_toy(circle: &CircleDataset, kind: GeneratorKind, config: &CloneConfig, seed: u64) -> Result<CloneOutcome> {
    behavior_clone_toy_observed(circle, kind, config, seed, &mut |_, _| {})
}

/// [`behavior_clone_toy`] calling `observe(iteration, generator)` after every
/// generator update.
pub fn behavior_clone_toy_observed(
    circle: &CircleDataset,
    kind: GeneratorKind,
    config: &CloneConfig,
    seed: u64,
    observe: &mut dyn FnMut(usize, &Generator),
) -> Result<CloneOutcome> {
    config.validate()?;
    if circle.train.is_empty() || circle.test.is_empty() {
        return Err(Error::EmptyBatch("circle"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut generator = Generator::new(kind, config, &mut rng);
    let d = config.dim;
    let mut disc = Mlp::new(&[2, d, d, d, 1], 0.0, Activation::Identity, &mut rng);
    let mut g_opt = Adam::new(generator.net.n_params(), config.lr, config.beta1, config.beta2);
    let mut d_opt = Adam::new(disc.n_params(), config.lr, config.beta1, config.beta2);
    let train = pairs(&circle.train);
    let n = config.batch_size;
    let labels = Array1::from_elem(n, config.label_smoothing);
    let tail = (config.iterations / 10).max(1);
    let (mut d_tail, mut g_tail) = (0.0, 0.0);

    for it in 0..config.iterations {
        let mut d_loss = 0.0;
        for _ in 0..config.critic_iters {
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..train.nrows())).collect();
            let real = train.select(Axis(0), &idx);
            let x = real.slice(s![.., 0..1]);
            let y_fake = generator.sample(x, &mut rng)?;
            let fake = hstack(x, y_fake.view())?;
            let rc = disc.forward_cached(real.view())?;
            let fc = disc.forward_cached(fake.view())?;
            let (loss, dr, df) = discriminator_bce(rc.output().column(0), labels.view(), fc.output().column(0))?;
            let (mut grads, _) = disc.backward(&rc, dr.insert_axis(Axis(1)).view())?;
            for (g, f) in grads.iter_mut().zip(disc.backward(&fc, df.insert_axis(Axis(1)).view())?.0) {
                *g += f;
            }
            d_opt.step(disc.params_mut(), &grads)?;
            d_loss = loss;
        }
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..train.nrows())).collect();
        let x = train.select(Axis(0), &idx).slice(s![.., 0..1]).to_owned();
        let (y, cache) = generator.forward(x.view(), &mut rng)?;
        let dc = disc.forward_cached(hstack(x.view(), y.view())?.view())?;
        let (g_loss, dlogits) = generator_loss(dc.output().column(0), GeneratorLoss::NonSaturating)?;
        let (_, din) = disc.backward(&dc, dlogits.insert_axis(Axis(1)).view())?;
        let grads = generator.backward(&cache, din.slice(s![.., 1..2]))?;
        g_opt.step(generator.net.params_mut(), &grads)?;
        observe(it, &generator);
        if it + tail >= config.iterations {
            d_tail += d_loss / tail as f64;
            g_tail += g_loss / tail as f64;
        }
    }
    let coverage = mode_coverage(&generator, circle, config, &mut rng)?;
    Ok(CloneOutcome {
        generator,
        coverage,
        final_disc_loss: d_tail,
        final_gen_loss: g_tail,
    })
}

/// Fraction of test inputs with `|x| < coverage_max_abs_x` for which at least one of
/// `coverage_draws` sampled `y` lands within `coverage_sigmas * sigma` of each of
/// `+sqrt(r^2 - x^2)` and `-sqrt(r^2 - x^2)`.
pub fn mode_coverage<R: Rng + ?Sized>(generator: &Generator, circle: &CircleDataset, config: &CloneConfig, rng: &mut R) -> Result<f64> {
    let r = circle.config.radius;
    let window = config.coverage_sigmas * circle.config.sigma;
    let xs: Vec<f64> = circle
        .test
        .iter()
        .map(|p| p[0])
        .filter(|x| x.abs() < config.coverage_max_abs_x)
        .collect();
    if xs.is_empty() {
        return Err(Error::EmptyBatch("coverage"));
    }
    let k = config.coverage_draws;
    let mut covered = 0usize;
    for chunk in xs.chunks(64) {
        let input = Array2::from_shape_fn((chunk.len() * k, 1), |(i, _)| chunk[i / k]);
        let y = generator.sample(input.view(), rng)?;
        for (c, x) in chunk.iter().enumerate() {
            let mode = (r * r - x * x).sqrt();
            let draws = y.slice(s![c * k..(c + 1) * k, 0]);
            let upper = draws.iter().any(|v| (v - mode).abs() <= window);
            let lower = draws.iter().any(|v| (v + mode).abs() <= window);
            covered += usize::from(upper && lower);
        }
    }
    Ok(covered as f64 / xs.len() as f64)
}

/// Fraction of sampled points `(x, y)` whose radius is within `tol` of `radius`.
pub fn near_circle_fraction<R: Rng + ?Sized>(
    generator: &Generator,
    xs: &[f64],
    radius: f64,
    tol: f64,
    draws: usize,
    rng: &mut R,
) -> Result<f64> {
    let input = Array2::from_shape_fn((xs.len() * draws, 1), |(i, _)| xs[i / draws]);
    let y = generator.sample(input.view(), rng)?;
    let near = input
        .column(0)
        .iter()
        .zip(y.column(0))
        .filter(|(x, y)| (x.hypot(**y) - radius).abs() <= tol)
        .count();
    Ok(near as f64 / input.nrows().max(1) as f64)
}
