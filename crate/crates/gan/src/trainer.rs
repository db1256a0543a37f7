//! The SDM-GAN loop: model rollouts, clipped double-Q critics, a GAN regulariser on
//! stationary state-action samples, and actor updates.

use std::io::Write;

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sdm_core::data::Dataset;
use sdm_nn::loss::{discriminator_bce, generator_loss, huber, GeneratorLoss};
use sdm_nn::{Adam, DynamicsEnsemble, EnsembleConfig, Mlp};

use crate::batch::{Batch, ModelBuffer, RewardClamp};
use crate::config::TrainerConfig;
use crate::dynamics::Dynamics;
use crate::env::{evaluate_policy, PointMass};
use crate::nets::{critic_net, discriminator_net, hstack, standard_normal, vstack, Actor};
use crate::{Error, Result};

/// Names of the independent generator streams, in stream-index order. Every draw of
/// a run comes from exactly one of them.
pub const RNG_STREAMS: [&str; 7] = ["init", "batch", "critic", "fake", "discriminator", "actor", "rollout"];

/// Lower bound on `q_avg`, so `lambda = alpha / q_avg` stays finite.
pub const Q_AVG_FLOOR: f64 = 1e-6;

fn stream(seed: u64, name: &str) -> ChaCha8Rng {
    let idx = RNG_STREAMS.iter().position(|n| *n == name).expect("known stream");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(idx as u64);
    rng
}

struct Streams {
    batch: ChaCha8Rng,
    critic: ChaCha8Rng,
    fake: ChaCha8Rng,
    disc: ChaCha8Rng,
    actor: ChaCha8Rng,
    rollout: ChaCha8Rng,
}

impl Streams {
    fn new(seed: u64) -> Self {
        Self {
            batch: stream(seed, "batch"),
            critic: stream(seed, "critic"),
            fake: stream(seed, "fake"),
            disc: stream(seed, "discriminator"),
            actor: stream(seed, "actor"),
            rollout: stream(seed, "rollout"),
        }
    }
}

fn column(x: &Array2<f64>) -> ArrayView1<'_, f64> {
    x.column(0)
}

/// Clipped double-Q target with state smoothing:
/// `clamp(r) + gamma * (1 - done) * q * 1{|q| < q_cutoff}`, where `q` averages
/// `c min_j Q'_j + (1 - c) max_j Q'_j` over `n_b` smoothed copies of `s'` (the
/// original first) and `n_a` target-actor actions per copy.
pub fn critic_target(
    actor_target: &Actor,
    critic_targets: [&Mlp; 2],
    batch: &Batch,
    clamp: &RewardClamp,
    config: &TrainerConfig,
    rng: &mut ChaCha8Rng,
) -> Result<Array1<f64>> {
    let n = batch.len();
    let sd = batch.state_dim();
    if sd != actor_target.state_dim || batch.rewards.len() != n || batch.dones.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "batch of {n} rows with state dim {sd} for an actor on state dim {}",
            actor_target.state_dim
        )));
    }
    let nb = config.n_b;
    let mut smoothed = Array2::zeros((n * nb, sd));
    for i in 0..n {
        for j in 0..nb {
            for d in 0..sd {
                let eps: f64 = if j == 0 { 0.0 } else { config.sigma_b * rng.sample::<f64, _>(rand_distr::StandardNormal) };
                smoothed[[i * nb + j, d]] = batch.next_states[[i, d]] + eps;
            }
        }
    }
    let mut acc = Array1::<f64>::zeros(n * nb);
    for _ in 0..config.n_a {
        let z = actor_target.sample_noise(n * nb, rng);
        let a = actor_target.forward(smoothed.view(), z.view())?;
        let sa = hstack(smoothed.view(), a.view())?;
        let q1 = critic_targets[0].forward(sa.view())?;
        let q2 = critic_targets[1].forward(sa.view())?;
        for ((acc, &x), &y) in acc.iter_mut().zip(column(&q1)).zip(column(&q2)) {
            *acc += config.c_min_weight * x.min(y) + (1.0 - config.c_min_weight) * x.max(y);
        }
    }
    let per = (nb * config.n_a) as f64;
    Ok(Array1::from_shape_fn(n, |i| {
        let q = acc.slice(s![i * nb..(i + 1) * nb]).sum() / per;
        let r = clamp.apply(batch.rewards[i]);
        if batch.dones[i] != 0.0 || q.abs() >= config.q_cutoff {
            r
        } else {
            r + config.gamma * q
        }
    }))
}

/// Huber loss of one critic against fixed targets, its parameter gradient, and the
/// critic's predictions.
pub fn critic_loss(
    critic: &Mlp,
    states: ArrayView2<f64>,
    actions: ArrayView2<f64>,
    targets: ArrayView1<f64>,
    delta: f64,
) -> Result<(f64, Vec<f64>, Array1<f64>)> {
    let sa = hstack(states, actions)?;
    let cache = critic.forward_cached(sa.view())?;
    let target = targets.to_owned().insert_axis(Axis(1));
    let (loss, grad) = huber(cache.output().view(), target.view(), delta)?;
    let (grads, _) = critic.backward(&cache, grad.view())?;
    Ok((loss, grads, cache.output().column(0).to_owned()))
}

/// Discriminator BCE (true labels as given, fake labels 0) and its parameter gradient.
pub fn discriminator_loss(
    disc: &Mlp,
    true_sa: ArrayView2<f64>,
    labels: ArrayView1<f64>,
    fake_sa: ArrayView2<f64>,
) -> Result<(f64, Vec<f64>)> {
    if true_sa.nrows() == 0 {
        return Err(Error::EmptyBatch("true"));
    }
    if fake_sa.nrows() == 0 {
        return Err(Error::EmptyBatch("fake"));
    }
    let real = disc.forward_cached(true_sa)?;
    let fake = disc.forward_cached(fake_sa)?;
    let (loss, d_real, d_fake) = discriminator_bce(real.output().column(0), labels, fake.output().column(0))?;
    let (mut grads, _) = disc.backward(&real, d_real.insert_axis(Axis(1)).view())?;
    let (g_fake, _) = disc.backward(&fake, d_fake.insert_axis(Axis(1)).view())?;
    for (g, f) in grads.iter_mut().zip(g_fake) {
        *g += f;
    }
    Ok((loss, grads))
}

/// Labels of the true samples: uniform in the smoothing range, or exactly 1.
pub fn true_labels<R: Rng + ?Sized>(n: usize, config: &TrainerConfig, rng: &mut R) -> Array1<f64> {
    if config.label_smoothing {
        let (lo, hi) = (config.label_smooth_low, config.label_smooth_high);
        Array1::from_shape_simple_fn(n, || if lo < hi { rng.random_range(lo..=hi) } else { lo })
    } else {
        Array1::ones(n)
    }
}

/// Fake state-action samples: `(s, a)` on the top rows, `(s', a')` below.
#[derive(Debug, Clone, PartialEq)]
pub struct FakeBatch {
    pub states: Array2<f64>,
    /// Actor noise used for each row.
    pub noise: Array2<f64>,
    pub actions: Array2<f64>,
    /// Rows that hold `(s, a)`; the rest hold `(s', a')`.
    pub n_current: usize,
}

impl FakeBatch {
    pub fn len(&self) -> usize {
        self.states.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn state_actions(&self) -> Result<Array2<f64>> {
        hstack(self.states.view(), self.actions.view())
    }
}

/// Drops terminal rows, smooths the states with `sigma_j` noise, acts, steps the
/// model, drops terminal next states and acts again.
pub fn build_fake_batch(
    actor: &Actor,
    model: &dyn Dynamics,
    batch: &Batch,
    sigma_j: f64,
    rng: &mut ChaCha8Rng,
) -> Result<FakeBatch> {
    let keep: Vec<usize> = (0..batch.len()).filter(|&i| batch.dones[i] == 0.0).collect();
    if keep.is_empty() {
        return Err(Error::EmptyAfterTerminalFilter);
    }
    let mut s = batch.states.select(Axis(0), &keep);
    if sigma_j > 0.0 {
        s += &(standard_normal(s.nrows(), s.ncols(), rng) * sigma_j);
    }
    let z = actor.sample_noise(s.nrows(), rng);
    let a = actor.forward(s.view(), z.view())?;
    let step = model.sample_step(s.view(), a.view(), rng)?;
    let alive: Vec<usize> = (0..step.dones.len()).filter(|&i| !step.dones[i]).collect();
    let s2 = step.next_states.select(Axis(0), &alive);
    let z2 = actor.sample_noise(s2.nrows(), rng);
    let a2 = actor.forward(s2.view(), z2.view())?;
    Ok(FakeBatch {
        n_current: s.nrows(),
        states: vstack(s.view(), s2.view())?,
        noise: vstack(z.view(), z2.view())?,
        actions: vstack(a.view(), a2.view())?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorLoss {
    pub total: f64,
    /// `-lambda * mean_s min_j Q_j(s, pi(s))`; zero when `lambda = 0`.
    pub q_term: f64,
    pub gen_loss: f64,
    pub grads: Vec<f64>,
}

/// `-lambda * mean min_j Q_j(s, pi(s, z)) + L_g` with `L_g` the generator loss of the
/// discriminator on the fake rows re-generated from their states and noise. The model
/// next states are held fixed.
#[allow(clippy::too_many_arguments)]
pub fn actor_objective(
    actor: &Actor,
    critics: [&Mlp; 2],
    disc: &Mlp,
    q_states: ArrayView2<f64>,
    q_noise: ArrayView2<f64>,
    fake: &FakeBatch,
    lambda: f64,
    kind: GeneratorLoss,
) -> Result<ActorLoss> {
    let sd = actor.state_dim;
    let mut grads = vec![0.0; actor.net.n_params()];
    let mut q_term = 0.0;
    if lambda != 0.0 {
        let cache = actor.forward_cached(q_states, q_noise)?;
        let a = actor.actions(&cache);
        let sa = hstack(q_states, a.view())?;
        let c1 = critics[0].forward_cached(sa.view())?;
        let c2 = critics[1].forward_cached(sa.view())?;
        let n = sa.nrows();
        if n == 0 {
            return Err(Error::EmptyBatch("actor"));
        }
        let mut g1 = Array2::zeros((n, 1));
        let mut g2 = Array2::zeros((n, 1));
        let mut total = 0.0;
        for i in 0..n {
            let (x, y) = (c1.output()[[i, 0]], c2.output()[[i, 0]]);
            total += x.min(y);
            if x <= y {
                g1[[i, 0]] = -lambda / n as f64;
            } else {
                g2[[i, 0]] = -lambda / n as f64;
            }
        }
        q_term = -lambda * total / n as f64;
        let (_, in1) = critics[0].backward(&c1, g1.view())?;
        let (_, in2) = critics[1].backward(&c2, g2.view())?;
        let da = (&in1 + &in2).slice(s![.., sd..]).to_owned();
        for (g, d) in grads.iter_mut().zip(actor.backward(&cache, da.view())?) {
            *g += d;
        }
    }
    if fake.is_empty() {
        return Err(Error::EmptyBatch("fake"));
    }
    let cache = actor.forward_cached(fake.states.view(), fake.noise.view())?;
    let a = actor.actions(&cache);
    let sa = hstack(fake.states.view(), a.view())?;
    let dc = disc.forward_cached(sa.view())?;
    let (gen, dlogits) = generator_loss(dc.output().column(0), kind)?;
    let (_, din) = disc.backward(&dc, dlogits.insert_axis(Axis(1)).view())?;
    let da = din.slice(s![.., sd..]).to_owned();
    for (g, d) in grads.iter_mut().zip(actor.backward(&cache, da.view())?) {
        *g += d;
    }
    let total = q_term + gen;
    if !total.is_finite() {
        return Err(Error::NonFiniteLoss("actor"));
    }
    Ok(ActorLoss {
        total,
        q_term,
        gen_loss: gen,
        grads,
    })
}

/// Starts `rollout_batch` branches at offline states and runs the actor for `horizon`
/// model steps, dropping branches that terminate. Returns the number of transitions
/// appended to the buffer.
pub fn branch_rollouts(
    actor: &Actor,
    model: &dyn Dynamics,
    env_data: &Batch,
    buffer: &mut ModelBuffer,
    config: &TrainerConfig,
    epoch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<usize> {
    let mut states = env_data.sample(config.rollout_batch, rng).states;
    let mut parts = Vec::with_capacity(config.horizon);
    for _ in 0..config.horizon {
        if states.nrows() == 0 {
            break;
        }
        let z = actor.sample_noise(states.nrows(), rng);
        let actions = actor.forward(states.view(), z.view())?;
        let step = model.sample_step(states.view(), actions.view(), rng)?;
        let alive: Vec<usize> = (0..step.dones.len()).filter(|&i| !step.dones[i]).collect();
        let next = step.next_states.select(Axis(0), &alive);
        parts.push(Batch {
            dones: step.dones.iter().map(|&d| if d { 1.0 } else { 0.0 }).collect(),
            states,
            actions,
            rewards: step.rewards,
            next_states: step.next_states,
        });
        states = next;
    }
    let added: usize = parts.iter().map(Batch::len).sum();
    if !parts.is_empty() {
        buffer.push(epoch, Batch::concat(&parts.iter().collect::<Vec<_>>())?);
    }
    Ok(added)
}

/// One row of the per-epoch metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub epoch: usize,
    pub mean_return: f64,
    pub std_return: f64,
    /// Mean critic loss over the epoch; empty during warm start.
    pub critic_loss: Option<f64>,
    pub disc_loss: f64,
    pub gen_loss: f64,
    /// Last `lambda` of the epoch; empty during warm start.
    pub lambda: Option<f64>,
    pub q_avg: Option<f64>,
    pub skip_count: usize,
}

pub fn write_metrics_csv<W: Write>(out: W, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

/// `lambda` and `q_avg` at one actor step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActorStep {
    pub iteration: usize,
    pub lambda: f64,
    pub q_avg: f64,
}

#[derive(Debug, Default, Clone)]
struct EpochAccumulator {
    critic_losses: Vec<f64>,
    disc_losses: Vec<f64>,
    gen_losses: Vec<f64>,
    lambda: Option<f64>,
    skips: usize,
    env_rows: usize,
    total_rows: usize,
}

fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        f64::NAN
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

/// Training state of one SDM-GAN run.
pub struct Trainer<'a> {
    pub config: TrainerConfig,
    model: &'a dyn Dynamics,
    env_data: Batch,
    pub clamp: RewardClamp,
    pub actor: Actor,
    pub actor_target: Actor,
    pub critics: [Mlp; 2],
    pub critic_targets: [Mlp; 2],
    pub disc: Mlp,
    actor_opt: Adam,
    critic_opts: [Adam; 2],
    disc_opt: Adam,
    /// Soft-updated batch mean of `|min_j Q_j(s, a)|`.
    pub q_avg: Option<f64>,
    /// Critic updates are skipped above this loss; unset until the first full epoch.
    pub critic_threshold: Option<f64>,
    pub buffer: ModelBuffer,
    pub epoch: usize,
    pub iteration: usize,
    post_warm_iterations: usize,
    pub skip_count: usize,
    pub actor_log: Vec<ActorStep>,
    /// `(rows from the offline data, all rows)` of the mixed batches, per finished epoch.
    pub mixing: Vec<(usize, usize)>,
    acc: EpochAccumulator,
    rngs: Streams,
    seed: u64,
}

impl<'a> Trainer<'a> {
    pub fn new(data: &Dataset, model: &'a dyn Dynamics, config: TrainerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let env_data = Batch::from_dataset(data)?;
        let (sd, ad) = (env_data.state_dim(), env_data.action_dim());
        if model.state_dim() != sd || model.action_dim() != ad {
            return Err(Error::ShapeMismatch(format!(
                "data is {sd}+{ad} dimensional, model {}+{}",
                model.state_dim(),
                model.action_dim()
            )));
        }
        let clamp = RewardClamp::from_rewards(&env_data.rewards, config.reward_clamp_sigmas)?;
        let mut init = stream(seed, "init");
        let noise_dim = config.noise_dim_for(sd);
        let actor = Actor::new(sd, ad, noise_dim, &config.hidden, config.slope, config.max_action, &mut init);
        let critics = [
            critic_net(sd, ad, &config.hidden, config.slope, &mut init),
            critic_net(sd, ad, &config.hidden, config.slope, &mut init),
        ];
        let disc = discriminator_net(sd, ad, &config.hidden, config.slope, &mut init);
        let (b1, b2) = (config.adam_beta1_actor_disc, config.adam_beta2);
        Ok(Self {
            actor_opt: Adam::new(actor.net.n_params(), config.lr_actor_disc, b1, b2),
            critic_opts: [
                Adam::new(critics[0].n_params(), config.lr_critic, 0.9, b2),
                Adam::new(critics[1].n_params(), config.lr_critic, 0.9, b2),
            ],
            disc_opt: Adam::new(disc.n_params(), config.lr_actor_disc, b1, b2),
            actor_target: actor.clone(),
            critic_targets: critics.clone(),
            actor,
            critics,
            disc,
            buffer: ModelBuffer::new(config.rollout_retain_epochs),
            model,
            env_data,
            clamp,
            q_avg: None,
            critic_threshold: None,
            epoch: 0,
            iteration: 0,
            post_warm_iterations: 0,
            skip_count: 0,
            actor_log: Vec::new(),
            mixing: Vec::new(),
            acc: EpochAccumulator::default(),
            rngs: Streams::new(seed),
            seed,
            config,
        })
    }

    pub fn in_warm_start(&self) -> bool {
        self.epoch < self.config.warm_epochs
    }

    pub fn lambda(&self) -> Option<f64> {
        self.q_avg.map(|q| self.config.alpha / q)
    }

    /// Seed of the evaluation episodes after `epoch`.
    pub fn eval_seed(&self, epoch: usize) -> u64 {
        self.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(epoch as u64 + 1)
    }

    /// Batch from `f D_env + (1 - f) D_model`, mixed row by row.
    fn mixed_batch(&mut self) -> Result<Batch> {
        let n = self.config.batch_size;
        let n_env = if self.buffer.is_empty() {
            n
        } else {
            (0..n).filter(|_| self.rngs.batch.random::<f64>() < self.config.f_real).count()
        };
        self.acc.env_rows += n_env;
        self.acc.total_rows += n;
        let env = self.env_data.sample(n_env, &mut self.rngs.batch);
        if n_env == n {
            return Ok(env);
        }
        let model = self.buffer.sample(n - n_env, &mut self.rngs.batch)?;
        Batch::concat(&[&env, &model])
    }

    fn critic_step(&mut self, batch: &Batch) -> Result<()> {
        let targets = critic_target(
            &self.actor_target,
            [&self.critic_targets[0], &self.critic_targets[1]],
            batch,
            &self.clamp,
            &self.config,
            &mut self.rngs.critic,
        )?;
        let delta = self.config.huber_threshold;
        let (l1, g1, q1) = critic_loss(&self.critics[0], batch.states.view(), batch.actions.view(), targets.view(), delta)?;
        let (l2, g2, q2) = critic_loss(&self.critics[1], batch.states.view(), batch.actions.view(), targets.view(), delta)?;
        let loss = 0.5 * (l1 + l2);
        self.acc.critic_losses.push(loss);
        if self.critic_threshold.is_some_and(|t| loss > t) {
            self.skip_count += 1;
            self.acc.skips += 1;
        } else {
            self.critic_opts[0].step(self.critics[0].params_mut(), &g1)?;
            self.critic_opts[1].step(self.critics[1].params_mut(), &g2)?;
        }
        let q_abs = q1.iter().zip(&q2).map(|(a, b)| a.min(*b).abs()).sum::<f64>() / q1.len().max(1) as f64;
        let tau = self.config.tau;
        let q = match self.q_avg {
            None => q_abs,
            Some(prev) => tau * q_abs + (1.0 - tau) * prev,
        };
        self.q_avg = Some(q.max(Q_AVG_FLOOR));
        Ok(())
    }

    fn discriminator_step(&mut self, fake: &FakeBatch) -> Result<()> {
        let truth = self.env_data.sample(fake.len(), &mut self.rngs.disc);
        let true_sa = hstack(truth.states.view(), truth.actions.view())?;
        let labels = true_labels(fake.len(), &self.config, &mut self.rngs.disc);
        let (loss, grads) = discriminator_loss(&self.disc, true_sa.view(), labels.view(), fake.state_actions()?.view())?;
        self.disc_opt.step(self.disc.params_mut(), &grads)?;
        self.acc.disc_losses.push(loss);
        Ok(())
    }

    fn actor_step(&mut self, q_states: ArrayView2<f64>, fake: &FakeBatch, warm: bool) -> Result<()> {
        let lambda = if warm {
            0.0
        } else {
            let q_avg = self.q_avg.expect("critic step precedes the actor step");
            let lambda = self.config.alpha / q_avg;
            self.actor_log.push(ActorStep {
                iteration: self.iteration,
                lambda,
                q_avg,
            });
            self.acc.lambda = Some(lambda);
            lambda
        };
        let z = self.actor.sample_noise(q_states.nrows(), &mut self.rngs.actor);
        let loss = actor_objective(
            &self.actor,
            [&self.critics[0], &self.critics[1]],
            &self.disc,
            q_states,
            z.view(),
            fake,
            lambda,
            self.config.generator_loss,
        )?;
        self.actor_opt.step(self.actor.net.params_mut(), &loss.grads)?;
        self.acc.gen_losses.push(loss.gen_loss);
        Ok(())
    }

    /// One training iteration.
    pub fn step(&mut self) -> Result<()> {
        let warm = self.in_warm_start();
        let batch = if warm {
            let n = self.config.batch_size;
            self.acc.env_rows += n;
            self.acc.total_rows += n;
            self.env_data.sample(n, &mut self.rngs.batch)
        } else {
            if self.post_warm_iterations % self.config.rollout_freq == 0 {
                branch_rollouts(
                    &self.actor,
                    self.model,
                    &self.env_data,
                    &mut self.buffer,
                    &self.config,
                    self.epoch,
                    &mut self.rngs.rollout,
                )?;
            }
            let batch = self.mixed_batch()?;
            self.critic_step(&batch)?;
            batch
        };
        let fake = build_fake_batch(&self.actor, self.model, &batch, self.config.sigma_j, &mut self.rngs.fake)?;
        self.discriminator_step(&fake)?;
        if self.iteration % self.config.policy_freq == 0 {
            self.actor_step(batch.states.view(), &fake, warm)?;
        }
        let tau = self.config.tau;
        self.actor_target.net.soft_update_from(&self.actor.net, tau)?;
        if !warm {
            for j in 0..2 {
                self.critic_targets[j].soft_update_from(&self.critics[j], tau)?;
            }
            self.post_warm_iterations += 1;
        }
        self.iteration += 1;
        Ok(())
    }

    /// Closes the epoch: soft-updates the critic threshold from this epoch's losses,
    /// evaluates the actor and returns the metrics row.
    pub fn finish_epoch(&mut self, env: &PointMass) -> Result<MetricsRow> {
        let acc = std::mem::take(&mut self.acc);
        if !acc.critic_losses.is_empty() {
            let m = mean(&acc.critic_losses);
            let sd = (acc.critic_losses.iter().map(|l| (l - m).powi(2)).sum::<f64>() / acc.critic_losses.len() as f64).sqrt();
            let fresh = m + self.config.critic_threshold_sigmas * sd;
            let rate = self.config.critic_threshold_rate;
            self.critic_threshold = Some(match self.critic_threshold {
                None => fresh,
                Some(t) => rate * fresh + (1.0 - rate) * t,
            });
        }
        let stats = evaluate_policy(env, &self.actor, self.config.eval_episodes, self.eval_seed(self.epoch))?;
        let warm = self.in_warm_start();
        let row = MetricsRow {
            epoch: self.epoch,
            mean_return: stats.mean,
            std_return: stats.std,
            critic_loss: (!warm).then(|| mean(&acc.critic_losses)),
            disc_loss: mean(&acc.disc_losses),
            gen_loss: mean(&acc.gen_losses),
            lambda: acc.lambda,
            q_avg: if warm { None } else { self.q_avg },
            skip_count: acc.skips,
        };
        self.mixing.push((acc.env_rows, acc.total_rows));
        self.epoch += 1;
        self.buffer.evict_before(self.epoch);
        Ok(row)
    }

    pub fn run_epoch(&mut self, env: &PointMass) -> Result<MetricsRow> {
        for _ in 0..self.config.epoch_length {
            self.step()?;
        }
        self.finish_epoch(env)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub actor: Actor,
    pub metrics: Vec<MetricsRow>,
    pub actor_log: Vec<ActorStep>,
    pub mixing: Vec<(usize, usize)>,
    pub skip_count: usize,
    /// Seed of the final evaluation, for measuring baselines on the same episodes.
    pub final_eval_seed: u64,
}

/// Runs every epoch against a given one-step model.
pub fn train_with_model(
    data: &Dataset,
    model: &dyn Dynamics,
    env: &PointMass,
    config: &TrainerConfig,
    seed: u64,
) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(data, model, config.clone(), seed)?;
    let mut metrics = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        metrics.push(trainer.run_epoch(env)?);
    }
    let final_eval_seed = trainer.eval_seed(config.epochs.saturating_sub(1));
    Ok(TrainOutcome {
        actor: trainer.actor,
        metrics,
        actor_log: trainer.actor_log,
        mixing: trainer.mixing,
        skip_count: trainer.skip_count,
        final_eval_seed,
    })
}

/// Fits the dynamics ensemble on the offline data by maximum likelihood, then trains.
pub fn train(
    data: &Dataset,
    env: &PointMass,
    config: &TrainerConfig,
    ensemble: &EnsembleConfig,
    seed: u64,
) -> Result<(TrainOutcome, DynamicsEnsemble)> {
    let model = DynamicsEnsemble::train(&Batch::from_dataset(data)?.to_dynamics_data(), ensemble, seed)?;
    let outcome = train_with_model(data, &model, env, config, seed)?;
    Ok((outcome, model))
}
