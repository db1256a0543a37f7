//! Distances between finite distributions: TV, KL, JSD, and integral probability
//! metrics over finite function dictionaries or the sup-norm ball.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::mdp::StateActionDist;
use crate::{Error, Result};

/// Anything that can be viewed as a probability vector.
pub trait AsProbs {
    fn as_probs(&self) -> &[f64];
}

impl AsProbs for StateActionDist {
    fn as_probs(&self) -> &[f64] {
        self.probs()
    }
}

impl AsProbs for [f64] {
    fn as_probs(&self) -> &[f64] {
        self
    }
}

impl AsProbs for Vec<f64> {
    fn as_probs(&self) -> &[f64] {
        self
    }
}

impl<const N: usize> AsProbs for [f64; N] {
    fn as_probs(&self) -> &[f64] {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DivergenceKind {
    Tv,
    Kl,
    Jsd,
}

fn same_len(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch(format!(
            "distributions have {} and {} entries",
            p.len(),
            q.len()
        )));
    }
    Ok(())
}

/// `||p - q||_1`.
pub fn l1_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    same_len(p, q)?;
    Ok(p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum())
}

/// `TV(p, q) = ||p - q||_1 / 2`.
pub fn total_variation(p: &[f64], q: &[f64]) -> Result<f64> {
    Ok(0.5 * l1_distance(p, q)?)
}

/// `KL(p || q)` with `0 ln 0 = 0`. Errors if `q` vanishes where `p` does not.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    same_len(p, q)?;
    let mut total = 0.0;
    for (index, (&pi, &qi)) in p.iter().zip(q).enumerate() {
        if pi == 0.0 {
            continue;
        }
        if qi <= 0.0 {
            return Err(Error::SupportViolation { index, p: pi });
        }
        total += pi * (pi / qi).ln();
    }
    // round-off can leave a tiny negative for p ~= q
    Ok(total.max(0.0))
}

/// Jensen-Shannon divergence `KL(p||m)/2 + KL(q||m)/2`, `m = (p+q)/2`, in nats.
pub fn js_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    same_len(p, q)?;
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    Ok(0.5 * kl_divergence(p, &m)? + 0.5 * kl_divergence(q, &m)?)
}

pub fn divergence<P: AsProbs + ?Sized>(p: &P, q: &P, kind: DivergenceKind) -> Result<f64> {
    let (p, q) = (p.as_probs(), q.as_probs());
    match kind {
        DivergenceKind::Tv => total_variation(p, q),
        DivergenceKind::Kl => kl_divergence(p, q),
        DivergenceKind::Jsd => js_divergence(p, q),
    }
}

/// A finite set of bounded test functions over a flattened domain.
///
/// Stands in for the class `{g : ||g||_inf <= g_max}`: an IPM over a dictionary
/// lower-bounds the IPM over the whole ball, which [`ipm_supnorm`] gives in closed
/// form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionDictionary {
    members: Vec<Vec<f64>>,
    g_max: f64,
}

impl FunctionDictionary {
    pub const DEFAULT_RANDOM_MEMBERS: usize = 64;

    pub fn new(members: Vec<Vec<f64>>, g_max: f64) -> Result<Self> {
        if g_max < 0.0 || !g_max.is_finite() {
            return Err(Error::NegativeBound(g_max));
        }
        if let Some(first) = members.first() {
            let n = first.len();
            for (index, g) in members.iter().enumerate() {
                if g.len() != n {
                    return Err(Error::DimensionMismatch(format!(
                        "dictionary member {index} has {} entries, expected {n}",
                        g.len()
                    )));
                }
                let norm = g.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
                if !(norm <= g_max) {
                    return Err(Error::DictionaryBound { index, norm, g_max });
                }
            }
        }
        Ok(Self { members, g_max })
    }

    /// `count` independent tables with entries uniform in `[-g_max, g_max]`.
    pub fn uniform<R: Rng + ?Sized>(rng: &mut R, domain: usize, count: usize, g_max: f64) -> Self {
        let members = (0..count)
            .map(|_| {
                (0..domain)
                    .map(|_| if g_max > 0.0 { rng.random_range(-g_max..=g_max) } else { 0.0 })
                    .collect()
            })
            .collect();
        Self { members, g_max }
    }

    /// `+g_max e_i` and `-g_max e_i` for every coordinate.
    pub fn coordinate_indicators(domain: usize, g_max: f64) -> Self {
        let members = (0..domain)
            .flat_map(|i| {
                [1.0, -1.0].map(|sign| {
                    let mut g = vec![0.0; domain];
                    g[i] = sign * g_max;
                    g
                })
            })
            .collect();
        Self { members, g_max }
    }

    /// The default surrogate: 64 uniform tables followed by the scaled indicators.
    pub fn default_random<R: Rng + ?Sized>(rng: &mut R, domain: usize, g_max: f64) -> Self {
        let mut dict = Self::uniform(rng, domain, Self::DEFAULT_RANDOM_MEMBERS, g_max);
        dict.members
            .extend(Self::coordinate_indicators(domain, g_max).members);
        dict
    }

    /// Every `{-g_max, +g_max}` sign pattern; the IPM over these equals the
    /// sup-norm-ball IPM. Only sensible for small domains.
    pub fn sign_patterns(domain: usize, g_max: f64) -> Result<Self> {
        if domain > 20 {
            return Err(Error::InvalidArgument(format!(
                "{domain} coordinates give too many sign patterns"
            )));
        }
        let members = (0..1u64 << domain)
            .map(|mask| {
                (0..domain)
                    .map(|i| if mask >> i & 1 == 1 { g_max } else { -g_max })
                    .collect()
            })
            .collect();
        Ok(Self { members, g_max })
    }

    pub fn members(&self) -> &[Vec<f64>] {
        &self.members
    }

    pub fn g_max(&self) -> f64 {
        self.g_max
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn domain(&self) -> Option<usize> {
        self.members.first().map(Vec::len)
    }
}

/// `max_g |E_p[g] - E_q[g]|` over the dictionary and the (lowest) maximising index.
pub fn ipm_dictionary<P: AsProbs + ?Sized>(
    p: &P,
    q: &P,
    dict: &FunctionDictionary,
) -> Result<(f64, usize)> {
    let (p, q) = (p.as_probs(), q.as_probs());
    same_len(p, q)?;
    if dict.is_empty() {
        return Err(Error::EmptyDictionary);
    }
    if dict.domain() != Some(p.len()) {
        return Err(Error::DimensionMismatch(format!(
            "dictionary domain {:?} vs distribution length {}",
            dict.domain(),
            p.len()
        )));
    }
    let mut best = (f64::NEG_INFINITY, 0);
    for (i, g) in dict.members.iter().enumerate() {
        let gap: f64 = g.iter().zip(p.iter().zip(q)).map(|(x, (a, b))| x * (a - b)).sum();
        if gap.abs() > best.0 {
            best = (gap.abs(), i);
        }
    }
    Ok(best)
}

/// IPM over the whole ball `{||g||_inf <= g_max}`: exactly `g_max ||p - q||_1`.
pub fn ipm_supnorm<P: AsProbs + ?Sized>(p: &P, q: &P, g_max: f64) -> Result<f64> {
    if g_max < 0.0 {
        return Err(Error::NegativeBound(g_max));
    }
    Ok(g_max * l1_distance(p.as_probs(), q.as_probs())?)
}

/// Both sides of exchanging a supremum with an expectation:
/// `(sup_y E_x[f(x, y)], E_x[sup_y f(x, y)])` for `values[y][x] = f(x, y)` and
/// weights `w(x)`. The first never exceeds the second.
pub fn exchange_sup_expectation(weights: &[f64], values: &[Vec<f64>]) -> (f64, f64) {
    let sup_of_mean = values
        .iter()
        .map(|f| f.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>())
        .fold(f64::NEG_INFINITY, f64::max);
    let mean_of_sup = weights
        .iter()
        .enumerate()
        .map(|(x, w)| {
            w * values
                .iter()
                .map(|f| f[x])
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum();
    (sup_of_mean, mean_of_sup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random::random_distribution;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_distributions_have_zero_divergence() {
        let p = vec![0.2, 0.3, 0.5];
        for kind in [DivergenceKind::Tv, DivergenceKind::Kl, DivergenceKind::Jsd] {
            assert_eq!(divergence(&p, &p, kind).unwrap(), 0.0);
        }
    }

    #[test]
    fn kl_of_known_pair() {
        let kl = kl_divergence(&[0.5, 0.5], &[0.25, 0.75]).unwrap();
        let expected = 0.5 * 2.0_f64.ln() + 0.5 * (2.0_f64 / 3.0).ln();
        assert_abs_diff_eq!(kl, expected, epsilon = 1e-15);
        assert_abs_diff_eq!(kl, 0.143_841, epsilon = 1e-6);
    }

    #[test]
    fn kl_support_violation() {
        let err = kl_divergence(&[0.5, 0.5], &[1.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::SupportViolation { index: 1, .. }));
        // the reverse direction is fine: 0 ln 0 = 0
        assert!(kl_divergence(&[1.0, 0.0], &[0.5, 0.5]).is_ok());
    }

    #[test]
    fn jsd_is_bounded_by_ln2() {
        let jsd = js_divergence(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(jsd, 2.0_f64.ln(), epsilon = 1e-15);
    }

    #[test]
    fn mismatched_lengths() {
        assert!(matches!(
            total_variation(&[1.0], &[0.5, 0.5]),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn ipm_of_equal_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let dict = FunctionDictionary::default_random(&mut rng, 3, 1.0);
        let p = vec![0.2, 0.3, 0.5];
        assert_eq!(ipm_dictionary(&p, &p, &dict).unwrap(), (0.0, 0));
    }

    #[test]
    fn sign_patterns_on_two_points_reach_closed_form() {
        let (p, q) = (vec![0.7, 0.3], vec![0.4, 0.6]);
        let dict = FunctionDictionary::sign_patterns(2, 1.5).unwrap();
        let (value, _) = ipm_dictionary(&p, &q, &dict).unwrap();
        assert_abs_diff_eq!(value, 1.5 * 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(value, ipm_supnorm(&p, &q, 1.5).unwrap(), epsilon = 1e-15);
    }

    #[test]
    fn singleton_dictionary_is_expectation_gap() {
        let g = vec![1.0, -0.5, 0.25];
        let dict = FunctionDictionary::new(vec![g.clone()], 1.0).unwrap();
        let (p, q) = (vec![0.2, 0.3, 0.5], vec![0.6, 0.1, 0.3]);
        let expected: f64 = g.iter().zip(p.iter().zip(&q)).map(|(x, (a, b))| x * (a - b)).sum();
        assert_eq!(ipm_dictionary(&p, &q, &dict).unwrap(), (expected.abs(), 0));
    }

    #[test]
    fn supnorm_edge_cases() {
        assert_eq!(ipm_supnorm(&[1.0, 0.0], &[0.0, 1.0], 1.0).unwrap(), 2.0);
        assert_eq!(ipm_supnorm(&[1.0, 0.0], &[0.0, 1.0], 0.0).unwrap(), 0.0);
        assert!(matches!(
            ipm_supnorm(&[1.0, 0.0], &[0.0, 1.0], -1.0),
            Err(Error::NegativeBound(_))
        ));
    }

    #[test]
    fn supnorm_matches_exhaustive_sign_patterns() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for n in 1..=12 {
            let p = random_distribution(&mut rng, n);
            let q = random_distribution(&mut rng, n);
            let dict = FunctionDictionary::sign_patterns(n, 3.0).unwrap();
            let (value, _) = ipm_dictionary(&p, &q, &dict).unwrap();
            let closed = ipm_supnorm(&p, &q, 3.0).unwrap();
            assert_abs_diff_eq!(value, closed, epsilon = 1e-12);
        }
    }

    #[test]
    fn empty_dictionary() {
        let dict = FunctionDictionary::new(vec![], 1.0).unwrap();
        assert!(matches!(
            ipm_dictionary(&[1.0], &[1.0], &dict),
            Err(Error::EmptyDictionary)
        ));
    }

    #[test]
    fn dictionary_bound_is_enforced() {
        let err = FunctionDictionary::new(vec![vec![0.5, 2.0]], 1.0).unwrap_err();
        assert!(matches!(err, Error::DictionaryBound { index: 0, .. }));
    }

    #[test]
    fn pinsker_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let n = rng.random_range(2..=12);
            let p = random_distribution(&mut rng, n);
            let q = random_distribution(&mut rng, n);
            let tv = total_variation(&p, &q).unwrap();
            let kl = kl_divergence(&p, &q).unwrap();
            assert!(tv <= (kl / 2.0).sqrt() + 1e-12);
        }
    }
}
