use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sdm_core::avg::{average_reward_and_bias, bellman_residual};
use sdm_core::bounds::{mle_tabular_model, random_instance, verify_bounds, InstanceConfig};
use sdm_core::data::{
    generate_dataset, make_circle_dataset, read_dataset, write_dataset, Dataset, Meta, Transition,
};
use sdm_core::divergence::{
    ipm_dictionary, ipm_supnorm, js_divergence, kl_divergence, total_variation, FunctionDictionary,
};
use sdm_core::mdp::{balance_residual, chain_matrix, stationary_distribution};
use sdm_core::random::{random_mdp, random_policy};

fn distribution(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-6f64..1.0, n).prop_map(|w| {
        let total: f64 = w.iter().sum();
        w.into_iter().map(|x| x / total).collect()
    })
}

fn pair() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..12).prop_flat_map(|n| (distribution(n), distribution(n)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn stationary_is_a_balanced_distribution(seed: u64, ns in 1usize..8, na in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = random_mdp(&mut rng, ns, na);
        let pi = random_policy(&mut rng, ns, na);
        let d = stationary_distribution(&mdp, &pi).unwrap();
        prop_assert!(d.probs().iter().all(|p| *p >= 0.0));
        prop_assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-10);
        prop_assert!(balance_residual(&chain_matrix(&mdp, &pi).unwrap(), d.probs()) < 1e-10);
    }

    #[test]
    fn differential_value_solves_bellman(seed: u64, ns in 1usize..8, na in 1usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = random_mdp(&mut rng, ns, na);
        let pi = random_policy(&mut rng, ns, na);
        let g = mdp.reward_table().to_vec();
        let dv = average_reward_and_bias(&mdp, &pi, &g).unwrap();
        prop_assert!(bellman_residual(&mdp, &pi, &dv, &g).unwrap() < 1e-10);
        let d = stationary_distribution(&mdp, &pi).unwrap();
        prop_assert!(d.expectation(&dv.q).abs() < 1e-10);
        prop_assert!((d.expectation(&g) - dv.eta).abs() < 1e-12);
    }

    #[test]
    fn divergence_inequalities((p, q) in pair()) {
        let tv = total_variation(&p, &q).unwrap();
        let kl = kl_divergence(&p, &q).unwrap();
        let js = js_divergence(&p, &q).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&tv));
        prop_assert_eq!(tv, total_variation(&q, &p).unwrap());
        prop_assert!(kl >= 0.0);
        prop_assert!(tv <= (kl / 2.0).sqrt() + 1e-12);
        prop_assert!(js >= 0.0 && js <= std::f64::consts::LN_2 + 1e-12);
        prop_assert_eq!(kl_divergence(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn dictionary_ipm_is_below_the_ball((p, q) in pair(), seed: u64, g_max in 0.0f64..3.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dict = FunctionDictionary::default_random(&mut rng, p.len(), g_max);
        let (value, index) = ipm_dictionary(&p, &q, &dict).unwrap();
        prop_assert!(index < dict.len());
        prop_assert!(value <= ipm_supnorm(&p, &q, g_max).unwrap() + 1e-12);
        prop_assert_eq!(ipm_dictionary(&q, &p, &dict).unwrap().0, value);
    }

    #[test]
    fn change_of_variable_identity(seed: u64, index in 0u64..1000) {
        let config = InstanceConfig { n_steps: 300, ..Default::default() };
        let inst = random_instance(seed, index, &config).unwrap();
        let r = verify_bounds(&inst.true_mdp, &inst.model_mdp, &inst.pi_b, &inst.pi, &inst.dict).unwrap();
        prop_assert!(r.per_g_gap < 1e-8);
        prop_assert!(r.is_consistent());
        prop_assert!(r.holds.split && r.holds.circ1_l1 && r.holds.tv_pinsker && r.holds.circ2_r_psi);
        prop_assert!(r.holds.thm31_identity);
    }

    #[test]
    fn mle_rows_are_stochastic(seed: u64, n in 1usize..300, eps in 1e-6f64..2.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = random_mdp(&mut rng, 4, 2);
        let pi = random_policy(&mut rng, 4, 2);
        let data = generate_dataset(&mdp, &pi, n, seed).unwrap();
        let model = mle_tabular_model(&data, eps).unwrap();
        prop_assert_eq!(model.counts.iter().sum::<f64>(), n as f64);
        for row in model.transition.chunks(4) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|p| *p > 0.0));
        }
    }

    #[test]
    fn generation_is_reproducible(seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = random_mdp(&mut rng, 3, 2);
        let pi = random_policy(&mut rng, 3, 2);
        prop_assert_eq!(
            generate_dataset(&mdp, &pi, 50, seed).unwrap(),
            generate_dataset(&mdp, &pi, 50, seed).unwrap()
        );
        prop_assert_eq!(
            make_circle_dataset(40, 4.0, 0.05, 10, seed).unwrap(),
            make_circle_dataset(40, 4.0, 0.05, 10, seed).unwrap()
        );
    }
}

fn finite() -> impl Strategy<Value = f64> {
    prop::num::f64::NORMAL | prop::num::f64::ZERO | prop::num::f64::SUBNORMAL
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn continuous_roundtrip_is_exact(
        rows in prop::collection::vec(
            (prop::collection::vec(finite(), 2), prop::collection::vec(finite(), 1), finite(),
             prop::collection::vec(finite(), 2), any::<bool>()),
            0..20,
        ),
        gz: bool,
    ) {
        let transitions = rows
            .into_iter()
            .map(|(s, a, r, s2, d)| Transition::continuous(s, a, r, s2, d))
            .collect();
        let data = Dataset::new(Meta::continuous(2, 1), transitions).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(if gz { "d.jsonl.gz" } else { "d.jsonl" });
        write_dataset(&path, &data).unwrap();
        prop_assert_eq!(read_dataset(&path).unwrap(), data);
    }
}
