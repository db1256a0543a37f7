use std::sync::OnceLock;

use ndarray::{array, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdm_nn::{DynamicsData, DynamicsEnsemble, EnsembleConfig, Error};

/// Noiseless `s' = s + 0.1 a`, `r = s . (1, -2) + 0.5 a_0`.
fn linear_data(n: usize, seed: u64, terminal_every: Option<usize>) -> DynamicsData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
    let actions = Array2::from_shape_fn((n, 2), |_| rng.random_range(-1.0..1.0));
    let next_states = &states + &(&actions * 0.1);
    let rewards = Array1::from_shape_fn(n, |i| states[[i, 0]] - 2.0 * states[[i, 1]] + 0.5 * actions[[i, 0]]);
    let dones = Array1::from_shape_fn(n, |i| match terminal_every {
        Some(k) if i % k == 0 => 1.0,
        _ => 0.0,
    });
    DynamicsData {
        states,
        actions,
        rewards,
        next_states,
        dones,
    }
}

fn small_config() -> EnsembleConfig {
    EnsembleConfig {
        hidden: vec![32, 32],
        epochs: 150,
        batch_size: 64,
        ..Default::default()
    }
}

fn trained() -> (DynamicsEnsemble, DynamicsData) {
    static CACHE: OnceLock<(DynamicsEnsemble, DynamicsData)> = OnceLock::new();
    CACHE
        .get_or_init(|| {
            let data = linear_data(2000, 1, None);
            (DynamicsEnsemble::train(&data, &small_config(), 2).unwrap(), data)
        })
        .clone()
}

#[test]
fn learns_noiseless_linear_dynamics() {
    let (ens, _) = trained();
    assert_eq!(ens.members.len(), 7);
    assert_eq!(ens.elites.len(), 5);
    let test = linear_data(500, 99, None);
    let best = ens.elites[0];
    let pred = ens.predict_member(best, test.states.view(), test.actions.view()).unwrap();
    let mut sq = 0.0;
    for i in 0..500 {
        let target = [
            test.rewards[i],
            test.next_states[[i, 0]] - test.states[[i, 0]],
            test.next_states[[i, 1]] - test.states[[i, 1]],
        ];
        for (j, t) in target.iter().enumerate() {
            let r = (pred.mean[[i, j]] - t) / ens.target_norm.std[j];
            sq += r * r;
        }
    }
    let rmse = (sq / 1500.0).sqrt();
    assert!(rmse < 0.05, "normalised rmse {rmse}");
    let mean_log_std =
        (&pred.std / &ens.target_norm.std).mapv(f64::ln).mean().unwrap();
    println!("rmse {rmse}, mean normalised log-std {mean_log_std}");
    assert!(mean_log_std < -4.5, "log-std {mean_log_std}");
    // all-zero termination labels
    assert!(pred.termination_prob.iter().all(|p| *p < 0.5));
}

#[test]
fn sampling_is_reproducible_and_unbiased() {
    let (ens, _) = trained();
    let s = Array2::from_shape_fn((10_000, 2), |(_, j)| [0.3, -0.2][j]);
    let a = Array2::from_shape_fn((10_000, 2), |(_, j)| [0.5, 0.1][j]);
    let draw = |seed| ens.sample(s.view(), a.view(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
    let x = draw(5);
    assert_eq!(x, draw(5));
    assert!(x.dones.iter().all(|d| !d));
    // mixture over elites: mean of means, variance of the mixture
    let preds: Vec<_> = ens
        .elites
        .iter()
        .map(|&m| ens.predict_member(m, s.slice(ndarray::s![..1, ..]), a.slice(ndarray::s![..1, ..])).unwrap())
        .collect();
    let k = preds.len() as f64;
    let mix_mean = preds.iter().map(|p| p.mean[[0, 0]]).sum::<f64>() / k;
    let mix_var = preds
        .iter()
        .map(|p| p.std[[0, 0]].powi(2) + p.mean[[0, 0]].powi(2))
        .sum::<f64>()
        / k
        - mix_mean * mix_mean;
    let se = (mix_var / 10_000.0).sqrt();
    let empirical = x.rewards.mean().unwrap();
    assert!((empirical - mix_mean).abs() < 4.0 * se, "{empirical} vs {mix_mean} (se {se})");
}

#[test]
fn floor_std_samples_sit_on_the_mean() {
    let (mut ens, _) = trained();
    ens.config.n_elites = 1;
    ens.elites.truncate(1);
    // force the log-std head to the floor by making its bias hugely negative
    let m = ens.elites[0];
    let n = ens.members[m].n_params();
    let params = ens.members[m].params_mut();
    for j in 3..6 {
        params[n - 7 + j] = -1e3;
    }
    let s = array![[0.1, 0.2]];
    let a = array![[-0.3, 0.4]];
    let pred = ens.predict_member(m, s.view(), a.view()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let x = ens.sample(s.view(), a.view(), &mut rng).unwrap();
        let z = (x.rewards[0] - pred.mean[[0, 0]]) / ens.target_norm.std[0];
        assert!(z.abs() <= 6.0 * (-5.0f64).exp());
    }
}

#[test]
fn termination_head_learns_terminal_states() {
    let mut data = linear_data(1500, 4, None);
    for i in 0..1500 {
        data.dones[i] = if data.states[[i, 0]] > 0.5 { 1.0 } else { 0.0 };
    }
    let ens = DynamicsEnsemble::train(&data, &small_config(), 5).unwrap();
    let s = array![[0.9, 0.0], [-0.9, 0.0]];
    let a = array![[0.0, 0.0], [0.0, 0.0]];
    let out = ens.sample(s.view(), a.view(), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
    assert_eq!(out.dones, vec![true, false]);
}

#[test]
fn checkpoint_roundtrip_and_untrained() {
    let (ens, _) = trained();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ens.json");
    ens.save_json(&path).unwrap();
    let back = DynamicsEnsemble::load_json(&path).unwrap();
    assert_eq!(back, ens);
    let mut empty = ens.clone();
    empty.elites.clear();
    let s = array![[0.0, 0.0]];
    assert!(matches!(
        empty.sample(s.view(), s.view(), &mut ChaCha8Rng::seed_from_u64(0)),
        Err(Error::UntrainedEnsemble)
    ));
}

#[test]
fn too_few_samples() {
    let data = linear_data(2, 0, None);
    assert!(matches!(
        DynamicsEnsemble::train(&data, &small_config(), 0),
        Err(Error::TooFewSamples { .. })
    ));
}
