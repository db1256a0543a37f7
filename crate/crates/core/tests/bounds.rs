use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sdm_core::bounds::{
    expected_model_kl, mle_tabular_model, random_instance, verify_bounds, verify_theorem31,
    BoundInstance, InstanceConfig, TabularModel,
};
use sdm_core::data::generate_dataset;
use sdm_core::divergence::{kl_divergence, FunctionDictionary};
use sdm_core::mdp::{stationary_distribution, TabularMdp};
use sdm_core::random::{random_mdp, random_policy};

const BASE_SEED: u64 = 7;
const N_INSTANCES: u64 = 100;

fn instances() -> Vec<BoundInstance> {
    let config = InstanceConfig::default();
    (0..N_INSTANCES)
        .map(|i| random_instance(BASE_SEED, i, &config).unwrap())
        .collect()
}

#[test]
fn instances_are_reproducible_and_within_shape() {
    let config = InstanceConfig::default();
    let a = random_instance(BASE_SEED, 3, &config).unwrap();
    let b = random_instance(BASE_SEED, 3, &config).unwrap();
    assert_eq!(a.true_mdp, b.true_mdp);
    assert_eq!(a.model, b.model);
    assert_eq!(a.dict, b.dict);
    for inst in instances() {
        let (ns, na) = (inst.true_mdp.n_states(), inst.true_mdp.n_actions());
        assert!((2..=8).contains(&ns) && (2..=3).contains(&na));
        assert_eq!(inst.dict.len(), 64 + 2 * ns * na);
        for row in inst.model.transition.chunks(ns) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn change_of_variable_identity_on_every_member() {
    for inst in instances() {
        let r = verify_theorem31(&inst.true_mdp, &inst.model_mdp, &inst.pi_b, &inst.pi, &inst.dict)
            .unwrap();
        assert!(r.per_g_gap < 1e-8, "instance {}: gap {}", inst.index, r.per_g_gap);
        assert!(r.holds);
    }
}

#[test]
fn rigorous_chain_steps_hold_everywhere() {
    for inst in instances() {
        let r = verify_bounds(&inst.true_mdp, &inst.model_mdp, &inst.pi_b, &inst.pi, &inst.dict)
            .unwrap();
        let h = r.holds;
        assert!(r.is_consistent(), "instance {}", inst.index);
        assert!(h.split, "instance {}: split", inst.index);
        assert!(h.circ1_exchange, "instance {}: exchange", inst.index);
        assert!(h.circ1_l1, "instance {}: l1", inst.index);
        assert!(h.tv_pinsker, "instance {}: pinsker", inst.index);
        assert!(h.circ2_r_psi, "instance {}: r_psi", inst.index);
        assert!(r.f_max.is_finite() && r.psi_max.is_finite());
    }
}

#[test]
fn end_to_end_bounds_hold_on_the_sweep() {
    for inst in instances() {
        let r = verify_bounds(&inst.true_mdp, &inst.model_mdp, &inst.pi_b, &inst.pi, &inst.dict)
            .unwrap();
        assert!(r.holds.thm32, "instance {}: {} > {}", inst.index, r.lhs_thm32, r.rhs_thm32);
        assert!(r.holds.thm34, "instance {}", inst.index);
    }
}

#[test]
fn stated_constant_step_can_fail_by_at_most_a_factor_two() {
    // term_circ1 <= 2 F_max E[TV] always; the F_max E[TV] form is not guaranteed.
    for inst in instances() {
        let r = verify_bounds(&inst.true_mdp, &inst.model_mdp, &inst.pi_b, &inst.pi, &inst.dict)
            .unwrap();
        assert!(r.term_circ1 <= 2.0 * r.term_circ1_tv + 1e-9);
    }
}

#[test]
fn model_error_shrinks_with_data() {
    let inst = random_instance(BASE_SEED, 0, &InstanceConfig::default()).unwrap();
    let d_b = stationary_distribution(&inst.true_mdp, &inst.pi_b).unwrap();
    let mut means = Vec::new();
    for n in [100, 1000, 10_000] {
        let mut total = 0.0;
        for seed in 0..20 {
            let data = generate_dataset(&inst.true_mdp, &inst.pi_b, n, 1000 + seed).unwrap();
            let model = mle_tabular_model(&data, 0.01).unwrap().dynamics(&inst.true_mdp).unwrap();
            let r = verify_bounds(&inst.true_mdp, &model, &inst.pi_b, &inst.pi, &inst.dict).unwrap();
            total += r.e_model;
            assert!((r.mean_kl - expected_model_kl(&inst.true_mdp, &model, &d_b).unwrap()).abs() < 1e-15);
        }
        means.push(total / 20.0);
    }
    assert!(means[0] >= means[1] && means[1] >= means[2], "{means:?}");
}

fn perturbed(model: &TabularModel, rng: &mut ChaCha8Rng) -> TabularModel {
    let mut out = model.clone();
    for row in out.transition.chunks_mut(model.n_states) {
        for p in row.iter_mut() {
            *p *= (0.1 * rng.sample::<f64, _>(rand_distr::StandardNormal)).exp();
        }
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|p| *p /= total);
    }
    out
}

fn log_likelihood(model: &TabularModel) -> f64 {
    model
        .counts
        .iter()
        .zip(&model.transition)
        .filter(|(c, _)| **c > 0.0)
        .map(|(c, p)| c * p.ln())
        .sum()
}

#[test]
fn mle_beats_random_perturbations() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mdp: TabularMdp = random_mdp(&mut rng, 4, 2);
    let pi_b = random_policy(&mut rng, 4, 2);
    let d_b = stationary_distribution(&mdp, &pi_b).unwrap();
    let data = generate_dataset(&mdp, &pi_b, 10_000, 22).unwrap();
    let fit = mle_tabular_model(&data, 0.01).unwrap();
    let fit_kl = expected_model_kl(&mdp, &fit.dynamics(&mdp).unwrap(), &d_b).unwrap();
    let unsmoothed = mle_tabular_model(&data, 1e-12).unwrap();
    for _ in 0..50 {
        let other = perturbed(&fit, &mut rng);
        let other_kl = expected_model_kl(&mdp, &other.dynamics(&mdp).unwrap(), &d_b).unwrap();
        assert!(fit_kl < other_kl, "{fit_kl} vs {other_kl}");
        assert!(log_likelihood(&unsmoothed) > log_likelihood(&perturbed(&unsmoothed, &mut rng)));
    }
}

#[test]
fn pinsker_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let n = rng.random_range(2..=10);
        let p = sdm_core::random::random_distribution(&mut rng, n);
        let q = sdm_core::random::random_distribution(&mut rng, n);
        let tv = sdm_core::divergence::total_variation(&p, &q).unwrap();
        assert!(tv <= (kl_divergence(&p, &q).unwrap() / 2.0).sqrt() + 1e-12);
    }
}

#[test]
fn sign_pattern_dictionary_gives_the_sup_norm_ipm() {
    let inst = instances()
        .into_iter()
        .find(|i| i.true_mdp.n_pairs() <= 12)
        .expect("sweep has a small instance");
    let n = inst.true_mdp.n_pairs();
    let dict = FunctionDictionary::sign_patterns(n, 1.0).unwrap();
    let r = verify_bounds(&inst.true_mdp, &inst.model_mdp, &inst.pi_b, &inst.pi, &dict).unwrap();
    let d_b = stationary_distribution(&inst.true_mdp, &inst.pi_b).unwrap();
    let d_star = stationary_distribution(&inst.true_mdp, &inst.pi).unwrap();
    let l1 = sdm_core::divergence::l1_distance(d_b.probs(), d_star.probs()).unwrap();
    assert!((r.lhs_thm34 - l1).abs() < 1e-12);
}
