//! Pilot run for the point-mass environment with the toy preset.
//!
//! cargo run --release -p sdm-gan --example point_mass_pilot -- [seed] [exact]

use std::time::Instant;

use sdm_gan::env::{evaluate_policy, generate_point_mass_dataset, PointMass, ReferenceReturns};
use sdm_gan::{train_with_model, Batch, TrainerConfig};
use sdm_nn::{DynamicsEnsemble, EnsembleConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let seed: u64 = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(0);
    let exact = args.get(2).is_some_and(|a| a == "exact");
    let env = PointMass::default();
    let config = TrainerConfig::toy();
    let t = Instant::now();
    let data = generate_point_mass_dataset(&env, 20_000, seed).expect("data");
    let ens_cfg = EnsembleConfig {
        n_members: 3,
        n_elites: 2,
        hidden: vec![64, 64],
        epochs: 20,
        ..Default::default()
    };
    let ensemble =
        DynamicsEnsemble::train(&Batch::from_dataset(&data).unwrap().to_dynamics_data(), &ens_cfg, seed).expect("model");
    println!("model fitted in {:.1}s", t.elapsed().as_secs_f64());
    let out = if exact {
        train_with_model(&data, &env, &env, &config, seed)
    } else {
        train_with_model(&data, &ensemble, &env, &config, seed)
    }
    .expect("training");
    for row in &out.metrics {
        println!("{row:?}");
    }
    let refs = ReferenceReturns::measure(&env, 100, 12345).unwrap();
    let behavior = evaluate_policy(&env, &env.behavior(), config.eval_episodes, out.final_eval_seed).unwrap();
    let last = out.metrics.last().unwrap();
    println!(
        "refs {refs:?}\nbehavior {:.3} ({:.3})  final {:.3} ({:.3})  skips {}  {:.1}s",
        behavior.mean,
        refs.normalize(behavior.mean),
        last.mean_return,
        refs.normalize(last.mean_return),
        out.skip_count,
        t.elapsed().as_secs_f64()
    );
}
