//! Pilot run for the circle experiment: trains each generator kind on a few seeds
//! and prints coverage and wall time.
//!
//! cargo run --release -p sdm-gan --example circle_pilot -- [iterations] [seeds]

use std::time::Instant;

use sdm_core::data::make_circle_dataset;
use rand::SeedableRng;
use sdm_gan::circle::near_circle_fraction;
use sdm_gan::circle::behavior_clone_toy_observed;
use sdm_gan::{CloneConfig, Generator, GeneratorKind};

fn env<T: std::str::FromStr>(name: &str) -> Option<T> {
    std::env::var(name).ok().and_then(|v| v.parse().ok())
}

/// Coverage on a 100-point grid of x with 64 draws each, and the fraction of draws above zero.
fn probe(generator: &Generator, rng: &mut rand_chacha::ChaCha8Rng) -> (f64, f64) {
    let xs: Vec<f64> = (0..100).map(|i| -3.5 + 7.0 * (i as f64 + 0.5) / 100.0).collect();
    let input = ndarray::Array2::from_shape_fn((xs.len() * 64, 1), |(i, _)| xs[i / 64]);
    let y = generator.sample(input.view(), rng).expect("sampling");
    let mut covered = 0;
    for (c, x) in xs.iter().enumerate() {
        let m = (16.0 - x * x).sqrt();
        let d = y.slice(ndarray::s![c * 64..(c + 1) * 64, 0]);
        covered += usize::from(d.iter().any(|v| (v - m).abs() <= 0.15) && d.iter().any(|v| (v + m).abs() <= 0.15));
    }
    let upper = y.iter().filter(|v| **v > 0.0).count() as f64 / y.len() as f64;
    (covered as f64 / xs.len() as f64, upper)
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let iterations = args.get(1).and_then(|a| a.parse().ok()).unwrap_or(CloneConfig::default().iterations);
    let seeds: u64 = args.get(2).and_then(|a| a.parse().ok()).unwrap_or(3);
    let mut config = CloneConfig { iterations, ..Default::default() };
    config.lr = env("PILOT_LR").unwrap_or(config.lr);
    config.dim = env("PILOT_DIM").unwrap_or(config.dim);
    config.beta1 = env("PILOT_BETA1").unwrap_or(config.beta1);
    config.beta2 = env("PILOT_BETA2").unwrap_or(config.beta2);
    let every: usize = env("PILOT_EVERY").unwrap_or(0);
    let first: u64 = env("PILOT_FIRST_SEED").unwrap_or(0);
    let sigma: f64 = std::env::var("PILOT_SIGMA").ok().and_then(|v| v.parse().ok()).unwrap_or(0.05);
    let kinds: Vec<GeneratorKind> = match std::env::var("PILOT_KINDS") {
        Ok(list) => GeneratorKind::ALL.into_iter().filter(|k| list.split(',').any(|n| n == k.name())).collect(),
        Err(_) => GeneratorKind::ALL.to_vec(),
    };
    println!("kind,seed,iterations,coverage,near_circle,disc_loss,gen_loss,seconds");
    for seed in first..first + seeds {
        let circle = make_circle_dataset(100_000, 4.0, sigma, 5000, seed).expect("circle");
        for &kind in &kinds {
            let t = Instant::now();
            let mut prng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
            let mut observe = |it: usize, g: &Generator| {
                if every > 0 && (it + 1) % every == 0 {
                    let (cov, upper) = probe(g, &mut prng);
                    eprintln!("# {} seed {seed} it {}: grid coverage {cov:.2}, upper {upper:.2}", kind.name(), it + 1);
                }
            };
            let out = behavior_clone_toy_observed(&circle, kind, &config, seed, &mut observe).expect("training");
            let xs: Vec<f64> = circle.test.iter().map(|p| p[0]).collect();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let near = near_circle_fraction(&out.generator, &xs, 4.0, 0.2, 16, &mut rng).expect("sampling");
            println!(
                "{},{seed},{iterations},{:.4},{near:.4},{:.4},{:.4},{:.1}",
                kind.name(),
                out.coverage,
                out.final_disc_loss,
                out.final_gen_loss,
                t.elapsed().as_secs_f64()
            );
        }
    }
}
