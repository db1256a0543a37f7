use serde::{Deserialize, Serialize};

use super::model::row_divergences;
use crate::avg::{average_reward_and_bias, BiasSolver, DifferentialValue};
use crate::divergence::{exchange_sup_expectation, FunctionDictionary};
use crate::mdp::{stationary_distribution, TabularMdp, TabularPolicy};
use crate::{Error, Result};

/// Tolerance on the per-member change-of-variable identity.
pub const IDENTITY_TOLERANCE: f64 = 1e-8;
/// Slack allowed on every inequality to absorb linear-solve round-off.
pub const BOUND_SLACK: f64 = 1e-9;

/// The `F` member matching reward table `g`: its differential value under
/// `(policy, dynamics)`, carrying the model average reward `eta_hat`.
pub fn construct_f_member(
    dynamics: &TabularMdp,
    policy: &TabularPolicy,
    g: &[f64],
) -> Result<DifferentialValue> {
    average_reward_and_bias(dynamics, policy, g)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Thm31Report {
    /// `max_g |E_{d_b}[g] - eta_hat_g|`.
    pub lhs_thm31_def: f64,
    /// `max_g |E_{d_b}[f_g] - E_{d_b, P_hat, pi}[f_g(s', a')]|`.
    pub lhs_thm31_cov: f64,
    pub per_g_gap: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HoldFlags {
    /// Change-of-variable identity within `IDENTITY_TOLERANCE`.
    pub thm31_identity: bool,
    /// `lhs_thm32 <= circ1 + circ2`.
    pub split: bool,
    /// `circ1 <= E_{d_b}[max_g |E_g|]`.
    pub circ1_exchange: bool,
    /// `circ1 <= F_max E[TV]`, the constant used by the bound.
    pub circ1_tv: bool,
    /// `circ1 <= F_max E[||.||_1]`, i.e. with the Hoelder constant `2 F_max`.
    pub circ1_l1: bool,
    /// `F_max E[TV] <= F_max E[sqrt(KL/2)]`.
    pub tv_pinsker: bool,
    /// `circ2 == R_Psi`.
    pub circ2_r_psi: bool,
    pub thm32: bool,
    pub thm34: bool,
}

impl HoldFlags {
    pub fn all(&self) -> bool {
        self.thm31_identity
            && self.split
            && self.circ1_exchange
            && self.circ1_tv
            && self.circ1_l1
            && self.tv_pinsker
            && self.circ2_r_psi
            && self.thm32
            && self.thm34
    }

    /// The chain steps as stated for the bound (the Hoelder variant excluded).
    pub fn chain(&self) -> bool {
        self.split && self.circ1_tv && self.tv_pinsker && self.circ2_r_psi
    }
}

/// Every term of the model-error chain for one instance.
///
/// `d_b` is the behaviour stationary distribution under the true dynamics, `d_hat`
/// and `d_star` those of the target policy under the model and the true dynamics.
/// For each dictionary member `g`, `f_g` is its differential value under the model,
/// `E_g(s,a) = sum_s' (P_hat - P*)(s'|s,a) v_g(s')` with `v_g = pi f_g`, and `psi_g`
/// the differential value of `E_g` under the true dynamics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub lhs_thm31_def: f64,
    pub lhs_thm31_cov: f64,
    pub per_g_gap: f64,
    /// `D_G(d_hat, d_star)`.
    pub lhs_thm32: f64,
    /// `max_g |E_{d_b}[E_g]|`.
    pub term_circ1: f64,
    /// `max_g |E_{d_star}[E_g] - E_{d_b}[E_g]|`.
    pub term_circ2: f64,
    pub term_circ1_exchange: f64,
    pub term_circ1_tv: f64,
    pub term_circ1_kl: f64,
    pub term_circ1_l1: f64,
    pub r_psi: f64,
    /// `R_F`, the change-of-variable sup.
    pub r_f: f64,
    /// The constant `C`.
    pub f_max: f64,
    pub psi_max: f64,
    pub g_max: f64,
    /// `E_{d_b}[sqrt(KL/2)]`.
    pub e_model: f64,
    pub mean_kl: f64,
    pub rhs_thm32: f64,
    /// `D_G(d_b, d_star)`.
    pub lhs_thm34: f64,
    pub combined_rhs_thm34: f64,
    pub holds: HoldFlags,
}

impl BoundReport {
    fn values(&self) -> [f64; 20] {
        [
            self.lhs_thm31_def,
            self.lhs_thm31_cov,
            self.per_g_gap,
            self.lhs_thm32,
            self.term_circ1,
            self.term_circ2,
            self.term_circ1_exchange,
            self.term_circ1_tv,
            self.term_circ1_kl,
            self.term_circ1_l1,
            self.r_psi,
            self.r_f,
            self.f_max,
            self.psi_max,
            self.g_max,
            self.e_model,
            self.mean_kl,
            self.rhs_thm32,
            self.lhs_thm34,
            self.combined_rhs_thm34,
        ]
    }

    pub const CSV_HEADER: [&'static str; 29] = [
        "lhs_thm31_def",
        "lhs_thm31_cov",
        "per_g_gap",
        "lhs_thm32",
        "term_circ1",
        "term_circ2",
        "term_circ1_exchange",
        "term_circ1_tv",
        "term_circ1_kl",
        "term_circ1_l1",
        "r_psi",
        "r_f",
        "f_max",
        "psi_max",
        "g_max",
        "e_model",
        "mean_kl",
        "rhs_thm32",
        "lhs_thm34",
        "combined_rhs_thm34",
        "holds_thm31_identity",
        "holds_split",
        "holds_circ1_exchange",
        "holds_circ1_tv",
        "holds_circ1_l1",
        "holds_tv_pinsker",
        "holds_circ2_r_psi",
        "holds_thm32",
        "holds_thm34",
    ];

    /// One CSV row matching `CSV_HEADER`.
    pub fn csv_record(&self) -> Vec<String> {
        let h = &self.holds;
        let mut row: Vec<String> = self.values().iter().map(|v| v.to_string()).collect();
        row.extend(
            [
                h.thm31_identity,
                h.split,
                h.circ1_exchange,
                h.circ1_tv,
                h.circ1_l1,
                h.tv_pinsker,
                h.circ2_r_psi,
                h.thm32,
                h.thm34,
            ]
            .iter()
            .map(|b| b.to_string()),
        );
        row
    }

    /// Flags derived from the stored values.
    pub fn recompute_holds(&self) -> HoldFlags {
        let le = |a: f64, b: f64| a <= b + BOUND_SLACK;
        HoldFlags {
            thm31_identity: self.per_g_gap < IDENTITY_TOLERANCE,
            split: le(self.lhs_thm32, self.term_circ1 + self.term_circ2),
            circ1_exchange: le(self.term_circ1, self.term_circ1_exchange),
            circ1_tv: le(self.term_circ1, self.term_circ1_tv),
            circ1_l1: le(self.term_circ1, self.term_circ1_l1),
            tv_pinsker: le(self.term_circ1_tv, self.term_circ1_kl),
            circ2_r_psi: (self.term_circ2 - self.r_psi).abs() <= IDENTITY_TOLERANCE,
            thm32: le(self.lhs_thm32, self.rhs_thm32),
            thm34: le(self.lhs_thm34, self.combined_rhs_thm34),
        }
    }

    /// All fields finite and the flags agree with the stored values.
    pub fn is_consistent(&self) -> bool {
        self.values().iter().all(|v| v.is_finite()) && self.recompute_holds() == self.holds
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_dictionary(dict: &FunctionDictionary, n: usize) -> Result<()> {
    match dict.domain() {
        Some(d) if d == n => Ok(()),
        Some(d) => Err(Error::DimensionMismatch(format!(
            "dictionary domain {d}, expected {n} state-action pairs"
        ))),
        None => Err(Error::EmptyDictionary),
    }
}

/// Per-member gap between the definitional and change-of-variable forms.
pub fn verify_theorem31(
    true_mdp: &TabularMdp,
    model: &TabularMdp,
    pi_b: &TabularPolicy,
    pi: &TabularPolicy,
    dict: &FunctionDictionary,
) -> Result<Thm31Report> {
    check_dictionary(dict, true_mdp.n_pairs())?;
    let d_b = stationary_distribution(true_mdp, pi_b)?;
    let solver = BiasSolver::new(model, pi)?;
    let (mut def, mut cov, mut gap) = (0.0f64, 0.0f64, 0.0f64);
    for g in dict.members() {
        let f = solver.solve(g)?;
        let next = model.expect_next(&pi.state_average(&f.q));
        let lhs = d_b.expectation(g) - f.eta;
        let rhs = d_b.expectation(&f.q) - d_b.expectation(&next);
        def = def.max(lhs.abs());
        cov = cov.max(rhs.abs());
        gap = gap.max((lhs - rhs).abs());
    }
    Ok(Thm31Report {
        lhs_thm31_def: def,
        lhs_thm31_cov: cov,
        per_g_gap: gap,
        holds: gap < IDENTITY_TOLERANCE,
    })
}

/// Computes the full chain for both bounds.
pub fn verify_bounds(
    true_mdp: &TabularMdp,
    model: &TabularMdp,
    pi_b: &TabularPolicy,
    pi: &TabularPolicy,
    dict: &FunctionDictionary,
) -> Result<BoundReport> {
    let n = true_mdp.n_pairs();
    check_dictionary(dict, n)?;
    let d_b = stationary_distribution(true_mdp, pi_b)?;
    let d_b_state = d_b.state_marginal();
    let model_solver = BiasSolver::new(model, pi)?;
    let true_solver = BiasSolver::new(true_mdp, pi)?;
    let d_star = true_solver.stationary_probs();
    let (tv, kl) = row_divergences(true_mdp, model)?;
    let sqrt_half_kl: Vec<f64> = kl.iter().map(|k| (k / 2.0).sqrt()).collect();

    let mut r = Accum::default();
    let mut abs_errors = Vec::with_capacity(dict.len());
    for g in dict.members() {
        let f = model_solver.solve(g)?;
        r.f_max = r.f_max.max(f.sup_norm());
        let v = pi.state_average(&f.q);
        let model_next = model.expect_next(&v);
        let true_next = true_mdp.expect_next(&v);

        let e_b_g = d_b.expectation(g);
        let def = e_b_g - f.eta;
        let cov = d_b.expectation(&f.q) - d_b.expectation(&model_next);
        r.def = r.def.max(def.abs());
        r.cov = r.cov.max(cov.abs());
        r.gap = r.gap.max((def - cov).abs());

        let err: Vec<f64> = model_next.iter().zip(&true_next).map(|(m, t)| m - t).collect();
        let circ1 = d_b.expectation(&err);
        let circ2 = dot(d_star, &err) - circ1;
        let e_star_g = dot(d_star, g);
        r.lhs32 = r.lhs32.max((f.eta - e_star_g).abs());
        r.circ1 = r.circ1.max(circ1.abs());
        r.circ2 = r.circ2.max(circ2.abs());
        r.lhs34 = r.lhs34.max((e_b_g - e_star_g).abs());

        let psi = true_solver.solve(&err)?;
        r.psi_max = r.psi_max.max(psi.sup_norm());
        let psi_v = pi.state_average(&psi.q);
        r.r_psi = r.r_psi.max((d_b.expectation(&psi.q) - dot(&d_b_state, &psi_v)).abs());

        abs_errors.push(err.iter().map(|e| e.abs()).collect::<Vec<f64>>());
    }
    let (_, exchange) = exchange_sup_expectation(d_b.probs(), &abs_errors);
    let e_tv = d_b.expectation(&tv);
    let e_model = d_b.expectation(&sqrt_half_kl);
    let term_circ1_kl = r.f_max * e_model;
    let mut report = BoundReport {
        lhs_thm31_def: r.def,
        lhs_thm31_cov: r.cov,
        per_g_gap: r.gap,
        lhs_thm32: r.lhs32,
        term_circ1: r.circ1,
        term_circ2: r.circ2,
        term_circ1_exchange: exchange,
        term_circ1_tv: r.f_max * e_tv,
        term_circ1_kl,
        term_circ1_l1: r.f_max * 2.0 * e_tv,
        r_psi: r.r_psi,
        r_f: r.cov,
        f_max: r.f_max,
        psi_max: r.psi_max,
        g_max: dict.g_max(),
        e_model,
        mean_kl: d_b.expectation(&kl),
        rhs_thm32: term_circ1_kl + r.r_psi,
        lhs_thm34: r.lhs34,
        combined_rhs_thm34: r.cov + r.r_psi + term_circ1_kl,
        holds: HoldFlags {
            thm31_identity: false,
            split: false,
            circ1_exchange: false,
            circ1_tv: false,
            circ1_l1: false,
            tv_pinsker: false,
            circ2_r_psi: false,
            thm32: false,
            thm34: false,
        },
    };
    if !report.values().iter().all(|v| v.is_finite()) {
        return Err(Error::NonFinite("bound report".into()));
    }
    report.holds = report.recompute_holds();
    Ok(report)
}

#[derive(Default)]
struct Accum {
    def: f64,
    cov: f64,
    gap: f64,
    lhs32: f64,
    circ1: f64,
    circ2: f64,
    lhs34: f64,
    f_max: f64,
    psi_max: f64,
    r_psi: f64,
}

/// The model-error chain; see [`BoundReport`].
pub fn verify_theorem32(
    true_mdp: &TabularMdp,
    model: &TabularMdp,
    pi_b: &TabularPolicy,
    pi: &TabularPolicy,
    dict: &FunctionDictionary,
) -> Result<BoundReport> {
    verify_bounds(true_mdp, model, pi_b, pi, dict)
}

/// The combined bound on `D_G(d_b, d_star)`; see [`BoundReport`].
pub fn verify_theorem34(
    true_mdp: &TabularMdp,
    model: &TabularMdp,
    pi_b: &TabularPolicy,
    pi: &TabularPolicy,
    dict: &FunctionDictionary,
) -> Result<BoundReport> {
    verify_bounds(true_mdp, model, pi_b, pi, dict)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::{random_mdp, random_policy};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn setup(seed: u64) -> (TabularMdp, TabularMdp, TabularPolicy, TabularPolicy, FunctionDictionary) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let true_mdp = random_mdp(&mut rng, 4, 2);
        let other = random_mdp(&mut rng, 4, 2);
        let model = true_mdp.with_transition(other.transition()).unwrap();
        let pi_b = random_policy(&mut rng, 4, 2);
        let pi = random_policy(&mut rng, 4, 2);
        let dict = FunctionDictionary::default_random(&mut rng, 8, 1.0);
        (true_mdp, model, pi_b, pi, dict)
    }

    #[test]
    fn zero_reward_gives_zero_member() {
        let (mdp, _, _, pi, _) = setup(1);
        let f = construct_f_member(&mdp, &pi, &[0.0; 8]).unwrap();
        assert_eq!(f.eta, 0.0);
        assert!(f.sup_norm() == 0.0);
    }

    #[test]
    fn exact_model_same_policy_is_all_zero() {
        let (mdp, _, pi_b, _, dict) = setup(2);
        let t31 = verify_theorem31(&mdp, &mdp, &pi_b, &pi_b, &dict).unwrap();
        assert!(t31.lhs_thm31_def < 1e-12 && t31.lhs_thm31_cov < 1e-12);
        let r = verify_bounds(&mdp, &mdp, &pi_b, &pi_b, &dict).unwrap();
        for v in [r.lhs_thm32, r.term_circ1_kl, r.r_psi, r.lhs_thm34, r.combined_rhs_thm34] {
            assert!(v < 1e-12, "{v}");
        }
        assert!(r.holds.all());
    }

    #[test]
    fn exact_model_has_no_model_terms() {
        let (mdp, _, pi_b, pi, dict) = setup(3);
        let r = verify_bounds(&mdp, &mdp, &pi_b, &pi, &dict).unwrap();
        assert!(r.lhs_thm32 < 1e-12);
        assert_eq!(r.term_circ1_kl, 0.0);
        assert!(r.r_psi < 1e-12);
        assert!(r.holds.thm34);
    }

    #[test]
    fn behaviour_target_kills_second_term() {
        let (mdp, model, pi_b, _, dict) = setup(4);
        let r = verify_bounds(&mdp, &model, &pi_b, &pi_b, &dict).unwrap();
        assert!(r.term_circ2 < 1e-12);
        assert!(r.r_psi < 1e-12);
        assert!(r.is_consistent());
    }

    #[test]
    fn constant_members_cancel() {
        let (mdp, model, pi_b, pi, _) = setup(5);
        let dict = FunctionDictionary::new(vec![vec![0.7; 8]], 1.0).unwrap();
        let t = verify_theorem31(&mdp, &model, &pi_b, &pi, &dict).unwrap();
        assert!(t.lhs_thm31_def < 1e-12 && t.lhs_thm31_cov < 1e-12);
    }

    #[test]
    fn identity_and_split_on_a_perturbed_model() {
        let (mdp, model, pi_b, pi, dict) = setup(6);
        let r = verify_bounds(&mdp, &model, &pi_b, &pi, &dict).unwrap();
        assert!(r.holds.thm31_identity && r.holds.split && r.holds.circ2_r_psi);
        assert!(r.holds.circ1_exchange && r.holds.circ1_l1 && r.holds.tv_pinsker);
        assert!(r.is_consistent());
        assert_eq!(r.csv_record().len(), BoundReport::CSV_HEADER.len());
    }

    #[test]
    fn dictionary_domain_checked() {
        let (mdp, model, pi_b, pi, _) = setup(7);
        let dict = FunctionDictionary::coordinate_indicators(5, 1.0);
        assert!(matches!(
            verify_bounds(&mdp, &model, &pi_b, &pi, &dict),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
