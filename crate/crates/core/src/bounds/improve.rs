use serde::{Deserialize, Serialize};

use super::model::mle_tabular_model;
use crate::data::{empirical_distribution, Dataset};
use crate::divergence::{ipm_supnorm, total_variation};
use crate::mdp::{stationary_distribution, StateActionDist, TabularMdp, TabularPolicy};
use crate::{Error, Result};

/// Floor on empirical action probabilities before taking logits.
const LOGIT_FLOOR: f64 = 1e-3;
const ARMIJO: f64 = 1e-4;
const MIN_STEP: f64 = 1e-10;

/// Which dynamics the distribution terms are computed under.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSource {
    /// True transitions and rewards.
    Exact,
    /// Smoothed MLE transitions and per-pair mean rewards from the dataset.
    Mle { smoothing: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImprovementConfig {
    pub alpha: f64,
    pub steps: usize,
    pub model: ModelSource,
    /// Central finite-difference step on the logits.
    pub fd_step: f64,
    pub initial_step_size: f64,
    /// Largest change of any logit in one step.
    pub max_step: f64,
    pub g_max: f64,
}

impl Default for ImprovementConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            steps: 200,
            model: ModelSource::Mle { smoothing: 0.01 },
            fd_step: 1e-5,
            initial_step_size: 1.0,
            max_step: 1.0,
            g_max: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub step: usize,
    pub objective: f64,
    /// Average reward under the model.
    pub eta_model: f64,
    /// `ipm_supnorm(d_data, d_pi^model)`.
    pub regularizer: f64,
    /// `TV(d_pi^{P*}, d_{pi_b}^{P*})` with `pi_b` the empirical behaviour policy.
    pub tv_true: f64,
    /// `E_{d_pi^{P*}}[r]`.
    pub exact_reward: f64,
    pub step_size: f64,
}

#[derive(Debug, Clone)]
pub struct ImprovementResult {
    /// Initial policy followed by the policy after each accepted step.
    pub policies: Vec<TabularPolicy>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub behavior: TabularPolicy,
    pub data_distribution: StateActionDist,
}

impl ImprovementResult {
    pub fn final_policy(&self) -> &TabularPolicy {
        self.policies.last().expect("trajectory holds the initial policy")
    }
}

/// Empirical `pi_b(a|s)`; errors if a state is never visited.
pub fn empirical_policy(dataset: &Dataset) -> Result<TabularPolicy> {
    let (ns, na) = dataset.tabular_dims()?;
    let d = empirical_distribution(dataset)?;
    let mut rows = Vec::with_capacity(ns);
    for s in 0..ns {
        let row: Vec<f64> = (0..na).map(|a| d.get(s, a)).collect();
        let total: f64 = row.iter().sum();
        if total == 0.0 {
            return Err(Error::CoverageError(s));
        }
        rows.push(row.into_iter().map(|p| p / total).collect());
    }
    TabularPolicy::from_rows(&rows)
}

struct Problem<'a> {
    ns: usize,
    na: usize,
    model: TabularMdp,
    reward: Vec<f64>,
    data: &'a StateActionDist,
    alpha: f64,
    g_max: f64,
}

impl Problem<'_> {
    /// `(objective, eta, regularizer)` at `logits`.
    fn evaluate(&self, logits: &[f64]) -> Result<(f64, f64, f64)> {
        let pi = TabularPolicy::softmax(self.ns, self.na, logits);
        let d = stationary_distribution(&self.model, &pi)?;
        let eta = d.expectation(&self.reward);
        let reg = ipm_supnorm(self.data, &d, self.g_max)?;
        Ok((self.alpha * eta - reg, eta, reg))
    }

    fn gradient(&self, logits: &[f64], h: f64) -> Result<Vec<f64>> {
        let mut x = logits.to_vec();
        let mut grad = vec![0.0; x.len()];
        for i in 0..x.len() {
            let orig = x[i];
            x[i] = orig + h;
            let up = self.evaluate(&x)?.0;
            x[i] = orig - h;
            let down = self.evaluate(&x)?.0;
            x[i] = orig;
            grad[i] = (up - down) / (2.0 * h);
        }
        Ok(grad)
    }
}

/// Mean observed reward per pair; unvisited pairs get the smallest observed reward.
fn empirical_reward(dataset: &Dataset, ns: usize, na: usize) -> Result<Vec<f64>> {
    let mut sum = vec![0.0; ns * na];
    let mut count = vec![0.0; ns * na];
    let mut lowest = f64::INFINITY;
    for (s, a, r, _) in dataset.tabular_steps()? {
        sum[s * na + a] += r;
        count[s * na + a] += 1.0;
        lowest = lowest.min(r);
    }
    Ok(sum
        .iter()
        .zip(&count)
        .map(|(s, c)| if *c > 0.0 { s / c } else { lowest })
        .collect())
}

/// Gradient ascent on `alpha * eta_model(pi) - ipm_supnorm(d_data, d_pi^model)` over
/// softmax logits, starting from the empirical behaviour policy. Gradients are
/// central finite differences; steps follow the max-norm-normalised gradient with
/// a backtracking line search.
pub fn tabular_regularized_improvement(
    true_mdp: &TabularMdp,
    dataset: &Dataset,
    config: &ImprovementConfig,
) -> Result<ImprovementResult> {
    let (ns, na) = dataset.tabular_dims()?;
    if ns != true_mdp.n_states() || na != true_mdp.n_actions() {
        return Err(Error::DimensionMismatch("dataset and MDP differ in shape".into()));
    }
    if !(config.alpha >= 0.0 && config.alpha.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be non-negative, got {}",
            config.alpha
        )));
    }
    let behavior = empirical_policy(dataset)?;
    let data_distribution = empirical_distribution(dataset)?;
    let (model, reward) = match config.model {
        ModelSource::Exact => (true_mdp.clone(), true_mdp.reward_table().to_vec()),
        ModelSource::Mle { smoothing } => (
            mle_tabular_model(dataset, smoothing)?.dynamics(true_mdp)?,
            empirical_reward(dataset, ns, na)?,
        ),
    };
    let problem = Problem {
        ns,
        na,
        model,
        reward,
        data: &data_distribution,
        alpha: config.alpha,
        g_max: config.g_max,
    };
    let d_behavior = stationary_distribution(true_mdp, &behavior)?;
    let diagnose = |step: usize, logits: &[f64], step_size: f64| -> Result<StepDiagnostics> {
        let (objective, eta_model, regularizer) = problem.evaluate(logits)?;
        let pi = TabularPolicy::softmax(ns, na, logits);
        let d_true = stationary_distribution(true_mdp, &pi)?;
        Ok(StepDiagnostics {
            step,
            objective,
            eta_model,
            regularizer,
            tv_true: total_variation(d_true.probs(), d_behavior.probs())?,
            exact_reward: d_true.expectation(true_mdp.reward_table()),
            step_size,
        })
    };

    let mut logits: Vec<f64> = behavior.probs().iter().map(|p| p.max(LOGIT_FLOOR).ln()).collect();
    let mut policies = vec![TabularPolicy::softmax(ns, na, &logits)];
    let mut diagnostics = vec![diagnose(0, &logits, 0.0)?];
    let mut step_size = config.initial_step_size;
    let mut current = diagnostics[0].objective;
    for step in 1..=config.steps {
        let grad = problem.gradient(&logits, config.fd_step)?;
        let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if scale == 0.0 {
            break;
        }
        // Steps along g / |g|_inf move every logit by at most the step size, which
        // keeps progress going where the softmax saturates.
        let direction: Vec<f64> = grad.iter().map(|g| g / scale).collect();
        let slope: f64 = grad.iter().zip(&direction).map(|(g, d)| g * d).sum();
        let mut accepted = None;
        while step_size >= MIN_STEP {
            let trial: Vec<f64> = logits
                .iter()
                .zip(&direction)
                .map(|(x, d)| x + step_size * d)
                .collect();
            let value = problem.evaluate(&trial)?.0;
            if value >= current + ARMIJO * step_size * slope {
                accepted = Some((trial, value));
                break;
            }
            step_size *= 0.5;
        }
        let Some((trial, value)) = accepted else {
            break;
        };
        logits = trial;
        current = value;
        policies.push(TabularPolicy::softmax(ns, na, &logits));
        diagnostics.push(diagnose(step, &logits, step_size)?);
        step_size = (2.0 * step_size).min(config.max_step);
    }
    Ok(ImprovementResult {
        policies,
        diagnostics,
        behavior,
        data_distribution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_dataset, Meta, Transition};
    use crate::random::{random_mdp, random_policy};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_steps_returns_initial_policy() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mdp = random_mdp(&mut rng, 3, 2);
        let pi_b = random_policy(&mut rng, 3, 2);
        let data = generate_dataset(&mdp, &pi_b, 2000, 1).unwrap();
        let config = ImprovementConfig {
            steps: 0,
            ..Default::default()
        };
        let out = tabular_regularized_improvement(&mdp, &data, &config).unwrap();
        assert_eq!(out.policies.len(), 1);
        assert_eq!(out.diagnostics.len(), 1);
        let expected = TabularPolicy::softmax(
            3,
            2,
            &out.behavior.probs().iter().map(|p| p.max(LOGIT_FLOOR).ln()).collect::<Vec<_>>(),
        );
        assert_eq!(out.final_policy(), &expected);
    }

    #[test]
    fn unvisited_state_is_a_coverage_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mdp = random_mdp(&mut rng, 3, 2);
        let data = Dataset::new(
            Meta::tabular(3, 2),
            vec![
                Transition::tabular(0, 0, 0.0, 1, false),
                Transition::tabular(1, 1, 0.0, 0, false),
            ],
        )
        .unwrap();
        let err = tabular_regularized_improvement(&mdp, &data, &ImprovementConfig::default());
        assert!(matches!(err, Err(Error::CoverageError(2))));
    }

    #[test]
    fn objective_never_decreases() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mdp = random_mdp(&mut rng, 4, 2);
        let pi_b = random_policy(&mut rng, 4, 2);
        let data = generate_dataset(&mdp, &pi_b, 3000, 2).unwrap();
        let config = ImprovementConfig {
            alpha: 10.0,
            steps: 30,
            ..Default::default()
        };
        let out = tabular_regularized_improvement(&mdp, &data, &config).unwrap();
        for w in out.diagnostics.windows(2) {
            assert!(w[1].objective >= w[0].objective);
        }
    }
}
