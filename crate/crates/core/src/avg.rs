//! Average reward and differential (relative) value functions on tabular MDPs.
//!
//! For a reward table `g` and the state-action chain `M` of `(mdp, policy)` with
//! stationary distribution `d`, the average reward is `eta = d . g` and the
//! differential value `Q` solves `(I - M) Q = g - eta 1`. That system only fixes
//! `Q` up to an additive constant; we pin `d . Q = 0`, which is the value the
//! series `sum_t M^t (g - eta 1)` converges to.

use nalgebra::{DMatrix, DVector, LU, Dyn};
use serde::{Deserialize, Serialize};

use crate::mdp::{chain_matrix, stationary_of_matrix, StateActionDist, TabularMdp, TabularPolicy};
use crate::{Error, Result};

/// Normalisation used to make the differential value unique.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pin {
    /// `E_{d_pi}[Q] = 0`.
    StationaryMeanZero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifferentialValue {
    pub n_states: usize,
    pub n_actions: usize,
    /// Flattened `[s][a]`.
    pub q: Vec<f64>,
    pub eta: f64,
    pub pin: Pin,
}

impl DifferentialValue {
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.q[s * self.n_actions + a]
    }

    pub fn sup_norm(&self) -> f64 {
        self.q.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Differential-value solver for one `(dynamics, policy)` chain.
///
/// Factorises the fundamental matrix `Z^{-1} = I - M + 1 d^T` once, so many reward
/// tables can be evaluated against the same chain. `Q = Z (g - eta 1)` satisfies the
/// Bellman system and `d^T Q = 0` because `d^T Z = d^T`.
pub struct BiasSolver {
    n_states: usize,
    n_actions: usize,
    chain: DMatrix<f64>,
    stationary: Vec<f64>,
    lu: LU<f64, Dyn, Dyn>,
}

impl BiasSolver {
    pub fn new(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<Self> {
        let chain = chain_matrix(mdp, policy)?;
        let stationary = stationary_of_matrix(&chain)?;
        let n = chain.nrows();
        let mut fundamental = -chain.clone();
        for i in 0..n {
            fundamental[(i, i)] += 1.0;
            for j in 0..n {
                fundamental[(i, j)] += stationary[j];
            }
        }
        Ok(Self {
            n_states: mdp.n_states(),
            n_actions: mdp.n_actions(),
            chain,
            stationary,
            lu: fundamental.lu(),
        })
    }

    pub fn chain(&self) -> &DMatrix<f64> {
        &self.chain
    }

    pub fn stationary(&self) -> StateActionDist {
        StateActionDist::new(self.n_states, self.n_actions, self.stationary.clone())
            .expect("stationary solve yields a distribution")
    }

    pub fn stationary_probs(&self) -> &[f64] {
        &self.stationary
    }

    pub fn solve(&self, g: &[f64]) -> Result<DifferentialValue> {
        let n = self.chain.nrows();
        if g.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "reward table has {} entries, expected {n}",
                g.len()
            )));
        }
        if g.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("reward table".into()));
        }
        let eta: f64 = self.stationary.iter().zip(g).map(|(d, x)| d * x).sum();
        let rhs = DVector::from_iterator(n, g.iter().map(|x| x - eta));
        let q = self
            .lu
            .solve(&rhs)
            .ok_or_else(|| Error::SolveFailed("singular fundamental matrix".into()))?;
        Ok(DifferentialValue {
            n_states: self.n_states,
            n_actions: self.n_actions,
            q: q.iter().copied().collect(),
            eta,
            pin: Pin::StationaryMeanZero,
        })
    }
}

/// Average reward `eta` and pinned differential value of reward table `g`.
pub fn average_reward_and_bias(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    g: &[f64],
) -> Result<DifferentialValue> {
    BiasSolver::new(mdp, policy)?.solve(g)
}

/// `max_{s,a} |Q(s,a) - g(s,a) - E_{s',a'}[Q(s',a')] + eta|`.
pub fn bellman_residual(
    mdp: &TabularMdp,
    policy: &TabularPolicy,
    dv: &DifferentialValue,
    g: &[f64],
) -> Result<f64> {
    let n = mdp.n_pairs();
    if dv.q.len() != n || g.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "expected tables of {n} entries, got Q: {}, g: {}",
            dv.q.len(),
            g.len()
        )));
    }
    mdp.check_policy(policy)?;
    let v = policy.state_average(&dv.q);
    let next = mdp.expect_next(&v);
    Ok((0..n)
        .map(|i| (dv.q[i] - g[i] - next[i] + dv.eta).abs())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{build_mdp, MdpSpec};
    use crate::random::{random_mdp, random_policy};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn instance(seed: u64) -> (TabularMdp, TabularPolicy, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mdp = random_mdp(&mut rng, 4, 2);
        let pi = random_policy(&mut rng, 4, 2);
        let g = mdp.reward_table().to_vec();
        (mdp, pi, g)
    }

    #[test]
    fn constant_reward_has_zero_bias() {
        let (mdp, pi, _) = instance(1);
        let dv = average_reward_and_bias(&mdp, &pi, &vec![1.0; 8]).unwrap();
        assert_abs_diff_eq!(dv.eta, 1.0, epsilon = 1e-12);
        assert!(dv.sup_norm() < 1e-12);
    }

    #[test]
    fn scales_linearly() {
        let (mdp, pi, g) = instance(2);
        let base = average_reward_and_bias(&mdp, &pi, &g).unwrap();
        let scaled_g: Vec<f64> = g.iter().map(|x| -2.0 * x).collect();
        let scaled = average_reward_and_bias(&mdp, &pi, &scaled_g).unwrap();
        assert_abs_diff_eq!(scaled.eta, -2.0 * base.eta, epsilon = 1e-12);
        for (a, b) in scaled.q.iter().zip(&base.q) {
            assert_abs_diff_eq!(*a, -2.0 * b, epsilon = 1e-11);
        }
    }

    #[test]
    fn solution_satisfies_bellman_and_pin() {
        let (mdp, pi, g) = instance(3);
        let solver = BiasSolver::new(&mdp, &pi).unwrap();
        let dv = solver.solve(&g).unwrap();
        assert!(bellman_residual(&mdp, &pi, &dv, &g).unwrap() < 1e-10);
        let mean: f64 = solver.stationary_probs().iter().zip(&dv.q).map(|(d, q)| d * q).sum();
        assert!(mean.abs() < 1e-10);
    }

    #[test]
    fn perturbed_q_has_positive_residual() {
        let (mdp, pi, g) = instance(4);
        let mut dv = average_reward_and_bias(&mdp, &pi, &g).unwrap();
        let m = chain_matrix(&mdp, &pi).unwrap();
        let j = 3;
        dv.q[j] += 1.0;
        let max_into_j = (0..8).map(|i| m[(i, j)]).fold(0.0, f64::max);
        let residual = bellman_residual(&mdp, &pi, &dv, &g).unwrap();
        // residual at j itself is exactly 1 - M[j][j]
        assert!(residual >= 1.0 - max_into_j - 1e-12);
        assert!(residual > 0.0);
    }

    #[test]
    fn zero_everything_has_zero_residual() {
        let (mdp, pi, _) = instance(5);
        let dv = DifferentialValue {
            n_states: 4,
            n_actions: 2,
            q: vec![0.0; 8],
            eta: 0.0,
            pin: Pin::StationaryMeanZero,
        };
        assert_eq!(bellman_residual(&mdp, &pi, &dv, &[0.0; 8]).unwrap(), 0.0);
    }

    #[test]
    fn residual_shape_mismatch() {
        let (mdp, pi, g) = instance(6);
        let mut dv = average_reward_and_bias(&mdp, &pi, &g).unwrap();
        dv.q.pop();
        assert!(matches!(
            bellman_residual(&mdp, &pi, &dv, &g),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn ergodicity_errors_propagate() {
        let spec = MdpSpec {
            n_states: 2,
            n_actions: 1,
            transition: vec![vec![vec![0.0, 1.0]], vec![vec![1.0, 0.0]]],
            reward: vec![vec![1.0], vec![0.0]],
            initial_dist: vec![1.0, 0.0],
            discount: 1.0,
        };
        let mdp = build_mdp(&spec).unwrap();
        let err = average_reward_and_bias(&mdp, &TabularPolicy::uniform(2, 1), &[1.0, 0.0]);
        assert!(matches!(err, Err(Error::Periodic { .. })));
    }
}
