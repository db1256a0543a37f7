use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sdm_core::bounds::{
    mle_tabular_model, tabular_regularized_improvement, ImprovementConfig, ModelSource,
};
use sdm_core::data::{generate_dataset, Dataset};
use sdm_core::divergence::total_variation;
use sdm_core::mdp::{stationary_distribution, TabularMdp, TabularPolicy};
use sdm_core::random::{random_mdp, random_policy};

fn suite() -> Vec<(TabularMdp, TabularPolicy, Dataset)> {
    [(4, 2), (5, 2), (6, 3), (3, 3), (8, 2)]
        .iter()
        .enumerate()
        .map(|(i, &(ns, na))| {
            let mut rng = ChaCha8Rng::seed_from_u64(300 + i as u64);
            let mdp = random_mdp(&mut rng, ns, na);
            let pi_b = random_policy(&mut rng, ns, na);
            let data = generate_dataset(&mdp, &pi_b, 5000, 400 + i as u64).unwrap();
            (mdp, pi_b, data)
        })
        .collect()
}

fn exact_reward(mdp: &TabularMdp, pi: &TabularPolicy) -> f64 {
    stationary_distribution(mdp, pi).unwrap().expectation(mdp.reward_table())
}

#[test]
fn zero_alpha_stays_on_the_data() {
    for (mdp, _, data) in suite() {
        let config = ImprovementConfig {
            alpha: 0.0,
            steps: 100,
            ..Default::default()
        };
        let out = tabular_regularized_improvement(&mdp, &data, &config).unwrap();
        let model = mle_tabular_model(&data, 0.01).unwrap().dynamics(&mdp).unwrap();
        let d = stationary_distribution(&model, out.final_policy()).unwrap();
        let tv = total_variation(d.probs(), out.data_distribution.probs()).unwrap();
        assert!(tv < 0.05, "tv {tv}");
    }
}

#[test]
fn large_alpha_with_exact_model_improves_on_behavior() {
    for (mdp, pi_b, data) in suite() {
        let config = ImprovementConfig {
            alpha: 1000.0,
            steps: 100,
            model: ModelSource::Exact,
            ..Default::default()
        };
        let out = tabular_regularized_improvement(&mdp, &data, &config).unwrap();
        let last = out.diagnostics.last().unwrap();
        assert!(last.exact_reward >= exact_reward(&mdp, &pi_b));
        assert!(last.exact_reward >= exact_reward(&mdp, &out.behavior));
    }
}

#[test]
fn final_reward_is_monotone_in_alpha() {
    for (i, (mdp, _, data)) in suite().into_iter().enumerate() {
        let rewards: Vec<f64> = [0.0, 1.0, 10.0, 1000.0]
            .iter()
            .map(|&alpha| {
                let config = ImprovementConfig {
                    alpha,
                    steps: 100,
                    model: ModelSource::Exact,
                    ..Default::default()
                };
                let out = tabular_regularized_improvement(&mdp, &data, &config).unwrap();
                exact_reward(&mdp, out.final_policy())
            })
            .collect();
        for w in rewards.windows(2) {
            assert!(w[1] >= w[0] - 1e-9, "instance {i}: {rewards:?}");
        }
    }
}

#[test]
fn diagnostics_track_every_accepted_step() {
    let (mdp, _, data) = suite().remove(0);
    let out = tabular_regularized_improvement(&mdp, &data, &ImprovementConfig::default()).unwrap();
    assert_eq!(out.policies.len(), out.diagnostics.len());
    assert_eq!(out.diagnostics[0].step, 0);
    assert!(out.diagnostics.iter().all(|d| d.tv_true >= 0.0 && d.regularizer >= 0.0));
}
