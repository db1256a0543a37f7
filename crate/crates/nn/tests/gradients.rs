//! Finite-difference checks of every loss and of backprop through the networks.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sdm_nn::ensemble::dynamics_loss;
use sdm_nn::gradcheck::check_gradient;
use sdm_nn::loss::{
    discriminator_bce, gaussian_nll, generator_loss, huber, mse, weighted_bce_logits, GeneratorLoss,
};
use sdm_nn::{Activation, Mlp};

const H: f64 = 1e-5;
const TOL: f64 = 1e-4;

fn normal(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| scale * rng.sample::<f64, _>(StandardNormal))
}

fn from_flat(x: &[f64], rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_vec((rows, cols), x.to_vec()).unwrap()
}

#[test]
fn gaussian_nll_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (m, ls, t) = (normal(&mut rng, 6, 3, 1.0), normal(&mut rng, 6, 3, 0.5), normal(&mut rng, 6, 3, 1.0));
    let (_, dm, ds) = gaussian_nll(m.view(), ls.view(), t.view()).unwrap();
    let x: Vec<f64> = m.iter().chain(ls.iter()).copied().collect();
    let analytic: Vec<f64> = dm.iter().chain(ds.iter()).copied().collect();
    let f = |x: &[f64]| {
        let (a, b) = x.split_at(18);
        gaussian_nll(from_flat(a, 6, 3).view(), from_flat(b, 6, 3).view(), t.view()).unwrap().0
    };
    let r = check_gradient(f, &x, &analytic, H);
    assert!(r.passes(TOL), "{r:?}");
}

#[test]
fn weighted_bce_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let z: Vec<f64> = (0..10).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
    let y = Array1::from_shape_fn(10, |i| (i % 3 == 0) as u8 as f64);
    let (_, g) = weighted_bce_logits(Array1::from(z.clone()).view(), y.view(), 2.5).unwrap();
    let f = |x: &[f64]| weighted_bce_logits(Array1::from(x.to_vec()).view(), y.view(), 2.5).unwrap().0;
    let r = check_gradient(f, &z, g.as_slice().unwrap(), H);
    assert!(r.passes(TOL), "{r:?}");
}

#[test]
fn huber_gradients_in_both_regions() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pred = normal(&mut rng, 5, 2, 3.0);
    let target = normal(&mut rng, 5, 2, 3.0);
    let (_, g) = huber(pred.view(), target.view(), 1.5).unwrap();
    let f = |x: &[f64]| huber(from_flat(x, 5, 2).view(), target.view(), 1.5).unwrap().0;
    let r = check_gradient(f, pred.as_slice().unwrap(), g.as_slice().unwrap(), H);
    assert!(r.passes(TOL), "{r:?}");
    let diffs = &pred - &target;
    assert!(diffs.iter().any(|d| d.abs() > 1.5) && diffs.iter().any(|d| d.abs() < 1.5));
}

#[test]
fn mse_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pred = normal(&mut rng, 4, 3, 1.0);
    let target = normal(&mut rng, 4, 3, 1.0);
    let (_, g) = mse(pred.view(), target.view()).unwrap();
    let f = |x: &[f64]| mse(from_flat(x, 4, 3).view(), target.view()).unwrap().0;
    assert!(check_gradient(f, pred.as_slice().unwrap(), g.as_slice().unwrap(), H).passes(TOL));
}

#[test]
fn discriminator_and_generator_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let real: Vec<f64> = (0..8).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let fake: Vec<f64> = (0..6).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let labels = Array1::from_shape_fn(8, |_| rng.random_range(0.8..1.0));
    let (_, gr, gf) =
        discriminator_bce(Array1::from(real.clone()).view(), labels.view(), Array1::from(fake.clone()).view())
            .unwrap();
    let x: Vec<f64> = real.iter().chain(&fake).copied().collect();
    let analytic: Vec<f64> = gr.iter().chain(gf.iter()).copied().collect();
    let f = |x: &[f64]| {
        let (a, b) = x.split_at(8);
        discriminator_bce(Array1::from(a.to_vec()).view(), labels.view(), Array1::from(b.to_vec()).view())
            .unwrap()
            .0
    };
    assert!(check_gradient(f, &x, &analytic, H).passes(TOL));
    for kind in [GeneratorLoss::NonSaturating, GeneratorLoss::Saturating] {
        let (_, g) = generator_loss(Array1::from(fake.clone()).view(), kind).unwrap();
        let f = |x: &[f64]| generator_loss(Array1::from(x.to_vec()).view(), kind).unwrap().0;
        let r = check_gradient(f, &fake, g.as_slice().unwrap(), H);
        assert!(r.passes(TOL), "{kind:?}: {r:?}");
    }
}

#[test]
fn backprop_matches_finite_differences() {
    for (seed, output) in [(6, Activation::Identity), (7, Activation::Tanh), (8, Activation::Sigmoid)] {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Mlp::new(&[3, 7, 5, 2], 0.01, output, &mut rng);
        let x = normal(&mut rng, 9, 3, 1.0);
        let t = normal(&mut rng, 9, 2, 0.5);
        let cache = net.forward_cached(x.view()).unwrap();
        let (_, d_out) = mse(cache.output().view(), t.view()).unwrap();
        let (grads, d_in) = net.backward(&cache, d_out.view()).unwrap();
        let loss_at = |params: &[f64]| {
            let mut n = net.clone();
            n.set_params(params).unwrap();
            mse(n.forward(x.view()).unwrap().view(), t.view()).unwrap().0
        };
        let r = check_gradient(loss_at, net.params(), &grads, H);
        assert!(r.passes(TOL), "{output:?} params: {r:?}");
        let input_at = |flat: &[f64]| {
            mse(net.forward(from_flat(flat, 9, 3).view()).unwrap().view(), t.view()).unwrap().0
        };
        let r = check_gradient(input_at, x.as_slice().unwrap(), d_in.as_slice().unwrap(), H);
        assert!(r.passes(TOL), "{output:?} inputs: {r:?}");
    }
}

#[test]
fn dynamics_loss_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    // 2-d state, 1-d action: targets (r, ds) of width 3, outputs 7
    let net = Mlp::new(&[3, 8, 7], 0.01, Activation::Identity, &mut rng);
    let x = normal(&mut rng, 10, 3, 1.0);
    let y = normal(&mut rng, 10, 3, 1.0);
    let d = Array1::from_shape_fn(10, |i| (i % 4 == 0) as u8 as f64);
    let (_, grads) = dynamics_loss(&net, x.view(), y.view(), d.view(), 3.0, (-5.0, 2.0)).unwrap();
    let f = |p: &[f64]| {
        let mut n = net.clone();
        n.set_params(p).unwrap();
        dynamics_loss(&n, x.view(), y.view(), d.view(), 3.0, (-5.0, 2.0)).unwrap().0
    };
    let r = check_gradient(f, net.params(), &grads, H);
    assert!(r.passes(TOL), "{r:?}");
}
