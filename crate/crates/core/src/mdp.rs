//! Finite MDPs, tabular policies and exact undiscounted stationary distributions.
//!
//! State-action pairs are flattened as `i = s * n_actions + a` everywhere in the
//! crate; transition rows are stored contiguously as `[s][a][s']`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Row sums may deviate from one by this much on input; rows are renormalised.
pub const ROW_SUM_TOLERANCE: f64 = 1e-9;
/// Maximum balance-equation residual accepted from the stationary solve.
pub const STATIONARY_RESIDUAL_TOLERANCE: f64 = 1e-10;

/// On-disk MDP description. Field names are part of the file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpSpec {
    pub n_states: usize,
    pub n_actions: usize,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub reward: Vec<Vec<f64>>,
    pub initial_dist: Vec<f64>,
    pub discount: f64,
}

impl MdpSpec {
    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self).expect("MDP spec serialises");
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// A validated finite MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    n_states: usize,
    n_actions: usize,
    transition: Vec<f64>,
    reward: Vec<f64>,
    initial_dist: Vec<f64>,
    discount: f64,
    r_max: f64,
}

/// Validates raw tables and builds a [`TabularMdp`].
pub fn build_mdp(spec: &MdpSpec) -> Result<TabularMdp> {
    let (ns, na) = (spec.n_states, spec.n_actions);
    if ns == 0 || na == 0 {
        return Err(Error::DimensionMismatch(format!(
            "need at least one state and one action, got {ns}x{na}"
        )));
    }
    if spec.transition.len() != ns || spec.reward.len() != ns || spec.initial_dist.len() != ns {
        return Err(Error::DimensionMismatch(format!(
            "expected {ns} state rows in transition/reward/initial_dist, got {}/{}/{}",
            spec.transition.len(),
            spec.reward.len(),
            spec.initial_dist.len()
        )));
    }
    let mut transition = Vec::with_capacity(ns * na * ns);
    for (s, per_action) in spec.transition.iter().enumerate() {
        if per_action.len() != na {
            return Err(Error::DimensionMismatch(format!(
                "transition[{s}] has {} actions, expected {na}",
                per_action.len()
            )));
        }
        for (a, row) in per_action.iter().enumerate() {
            if row.len() != ns {
                return Err(Error::DimensionMismatch(format!(
                    "transition[{s}][{a}] has length {}, expected {ns}",
                    row.len()
                )));
            }
            let row = normalized_row(row, s, a)?;
            transition.extend(row);
        }
    }
    let mut reward = Vec::with_capacity(ns * na);
    for (s, row) in spec.reward.iter().enumerate() {
        if row.len() != na {
            return Err(Error::DimensionMismatch(format!(
                "reward[{s}] has length {}, expected {na}",
                row.len()
            )));
        }
        if let Some(a) = row.iter().position(|r| !r.is_finite()) {
            return Err(Error::NonFinite(format!("reward[{s}][{a}]")));
        }
        reward.extend_from_slice(row);
    }
    let initial_dist = normalized_distribution(&spec.initial_dist, "initial_dist")?;
    if !(spec.discount > 0.0 && spec.discount <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "discount must lie in (0, 1], got {}",
            spec.discount
        )));
    }
    let r_max = reward.iter().fold(0.0_f64, |m, r| m.max(r.abs()));
    Ok(TabularMdp {
        n_states: ns,
        n_actions: na,
        transition,
        reward,
        initial_dist,
        discount: spec.discount,
        r_max,
    })
}

fn normalized_row(row: &[f64], s: usize, a: usize) -> Result<Vec<f64>> {
    for (t, &p) in row.iter().enumerate() {
        if !p.is_finite() {
            return Err(Error::NonFinite(format!("transition[{s}][{a}][{t}]")));
        }
        if p < 0.0 {
            return Err(Error::NegativeProbability {
                location: format!("transition[{s}][{a}][{t}]"),
                value: p,
            });
        }
    }
    let sum: f64 = row.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(Error::NonStochasticRow { state: s, action: a, sum });
    }
    Ok(row.iter().map(|p| p / sum).collect())
}

fn normalized_distribution(v: &[f64], name: &str) -> Result<Vec<f64>> {
    for (i, &p) in v.iter().enumerate() {
        if !p.is_finite() {
            return Err(Error::NonFinite(format!("{name}[{i}]")));
        }
        if p < 0.0 {
            return Err(Error::NegativeProbability {
                location: format!("{name}[{i}]"),
                value: p,
            });
        }
    }
    let sum: f64 = v.iter().sum();
    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(Error::InvalidArgument(format!("{name} sums to {sum}, expected 1")));
    }
    Ok(v.iter().map(|p| p / sum).collect())
}

impl TabularMdp {
    pub fn from_spec(spec: &MdpSpec) -> Result<Self> {
        build_mdp(spec)
    }

    pub fn to_spec(&self) -> MdpSpec {
        let (ns, na) = (self.n_states, self.n_actions);
        MdpSpec {
            n_states: ns,
            n_actions: na,
            transition: (0..ns)
                .map(|s| (0..na).map(|a| self.row(s, a).to_vec()).collect())
                .collect(),
            reward: (0..ns)
                .map(|s| self.reward[s * na..(s + 1) * na].to_vec())
                .collect(),
            initial_dist: self.initial_dist.clone(),
            discount: self.discount,
        }
    }

    /// Same rewards, initial distribution and discount with different dynamics.
    ///
    /// `transition` is flattened `[s][a][s']`.
    pub fn with_transition(&self, transition: &[f64]) -> Result<Self> {
        let (ns, na) = (self.n_states, self.n_actions);
        if transition.len() != ns * na * ns {
            return Err(Error::DimensionMismatch(format!(
                "transition tensor has {} entries, expected {}",
                transition.len(),
                ns * na * ns
            )));
        }
        let mut rows = Vec::with_capacity(transition.len());
        for (i, row) in transition.chunks(ns).enumerate() {
            rows.extend(normalized_row(row, i / na, i % na)?);
        }
        Ok(Self {
            transition: rows,
            ..self.clone()
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_pairs(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn p(&self, s: usize, a: usize, s_next: usize) -> f64 {
        self.transition[(s * self.n_actions + a) * self.n_states + s_next]
    }

    /// Next-state distribution `P(.|s, a)`.
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        let start = (s * self.n_actions + a) * self.n_states;
        &self.transition[start..start + self.n_states]
    }

    pub fn transition(&self) -> &[f64] {
        &self.transition
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.n_actions + a]
    }

    pub fn reward_table(&self) -> &[f64] {
        &self.reward
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub(crate) fn check_policy(&self, policy: &TabularPolicy) -> Result<()> {
        if policy.n_states != self.n_states || policy.n_actions != self.n_actions {
            return Err(Error::DimensionMismatch(format!(
                "policy is {}x{}, MDP is {}x{}",
                policy.n_states, policy.n_actions, self.n_states, self.n_actions
            )));
        }
        Ok(())
    }

    /// Expected value of `v(s')` under `P(.|s, a)` for every pair, i.e. `P v`.
    pub fn expect_next(&self, v: &[f64]) -> Vec<f64> {
        self.transition
            .chunks(self.n_states)
            .map(|row| row.iter().zip(v).map(|(p, x)| p * x).sum())
            .collect()
    }
}

/// A stationary Markov policy `pi(a|s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularPolicy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl TabularPolicy {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_states = rows.len();
        let n_actions = rows.first().map_or(0, Vec::len);
        if n_states == 0 || n_actions == 0 {
            return Err(Error::DimensionMismatch("empty policy table".into()));
        }
        let mut probs = Vec::with_capacity(n_states * n_actions);
        for (s, row) in rows.iter().enumerate() {
            if row.len() != n_actions {
                return Err(Error::DimensionMismatch(format!(
                    "policy row {s} has {} actions, expected {n_actions}",
                    row.len()
                )));
            }
            probs.extend(normalized_distribution(row, &format!("policy[{s}]"))?);
        }
        Ok(Self { n_states, n_actions, probs })
    }

    /// Flattened `[s][a]` table.
    pub fn from_flat(n_states: usize, n_actions: usize, probs: &[f64]) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::DimensionMismatch(format!(
                "policy table has {} entries, expected {}",
                probs.len(),
                n_states * n_actions
            )));
        }
        let rows: Vec<Vec<f64>> = probs.chunks(n_actions).map(<[f64]>::to_vec).collect();
        Self::from_rows(&rows)
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    pub fn deterministic(actions: &[usize], n_actions: usize) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::DimensionMismatch(format!(
                    "action {a} for state {s} out of range {n_actions}"
                )));
            }
            probs[s * n_actions + a] = 1.0;
        }
        Ok(Self {
            n_states: actions.len(),
            n_actions,
            probs,
        })
    }

    /// Row-wise softmax of a flattened `[s][a]` logit table.
    pub fn softmax(n_states: usize, n_actions: usize, logits: &[f64]) -> Self {
        assert_eq!(logits.len(), n_states * n_actions, "logit table shape");
        let mut probs = Vec::with_capacity(logits.len());
        for row in logits.chunks(n_actions) {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = row.iter().map(|l| (l - max).exp()).collect();
            let z: f64 = exps.iter().sum();
            probs.extend(exps.into_iter().map(|e| e / z));
        }
        Self { n_states, n_actions, probs }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// `v(s) = sum_a pi(a|s) f(s, a)`.
    pub fn state_average(&self, f: &[f64]) -> Vec<f64> {
        f.chunks(self.n_actions)
            .zip(self.probs.chunks(self.n_actions))
            .map(|(fs, ps)| fs.iter().zip(ps).map(|(x, p)| x * p).sum())
            .collect()
    }
}

/// A probability table over state-action pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateActionDist {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl StateActionDist {
    pub const SUM_TOLERANCE: f64 = 1e-10;

    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != n_states * n_actions {
            return Err(Error::DimensionMismatch(format!(
                "distribution has {} entries, expected {}",
                probs.len(),
                n_states * n_actions
            )));
        }
        for (i, &p) in probs.iter().enumerate() {
            if !p.is_finite() {
                return Err(Error::NonFinite(format!("d[{i}]")));
            }
            if p < 0.0 {
                return Err(Error::NegativeProbability {
                    location: format!("d[{i}]"),
                    value: p,
                });
            }
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
            return Err(Error::InvalidArgument(format!(
                "distribution sums to {sum}, expected 1"
            )));
        }
        Ok(Self { n_states, n_actions, probs })
    }

    /// Normalised visit counts. Fails when every count is zero.
    pub fn from_counts(n_states: usize, n_actions: usize, counts: &[f64]) -> Result<Self> {
        let total: f64 = counts.iter().sum();
        if total <= 0.0 {
            return Err(Error::EmptyDataset);
        }
        Self::new(n_states, n_actions, counts.iter().map(|c| c / total).collect())
    }

    pub fn point_mass(n_states: usize, n_actions: usize, s: usize, a: usize) -> Self {
        let mut probs = vec![0.0; n_states * n_actions];
        probs[s * n_actions + a] = 1.0;
        Self { n_states, n_actions, probs }
    }

    /// `d(s, a) = mu(s) pi(a|s)`.
    pub fn product(state_dist: &[f64], policy: &TabularPolicy) -> Self {
        let na = policy.n_actions();
        let probs = state_dist
            .iter()
            .enumerate()
            .flat_map(|(s, &mu)| (0..na).map(move |a| (s, a, mu)))
            .map(|(s, a, mu)| mu * policy.prob(s, a))
            .collect();
        Self {
            n_states: state_dist.len(),
            n_actions: na,
            probs,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn state_marginal(&self) -> Vec<f64> {
        self.probs
            .chunks(self.n_actions)
            .map(|row| row.iter().sum())
            .collect()
    }

    pub fn expectation(&self, g: &[f64]) -> f64 {
        self.probs.iter().zip(g).map(|(p, x)| p * x).sum()
    }
}

/// The state-action Markov chain `M[(s,a) -> (s',a')] = P(s'|s,a) pi(a'|s')`.
pub fn chain_matrix(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<DMatrix<f64>> {
    mdp.check_policy(policy)?;
    let (ns, na) = (mdp.n_states, mdp.n_actions);
    let n = ns * na;
    let mut m = DMatrix::zeros(n, n);
    for i in 0..n {
        let row = &mdp.transition[i * ns..(i + 1) * ns];
        for (t, &p) in row.iter().enumerate() {
            if p == 0.0 {
                continue;
            }
            for b in 0..na {
                m[(i, t * na + b)] = p * policy.prob(t, b);
            }
        }
    }
    Ok(m)
}

/// Checks that a row-stochastic matrix has exactly one closed communicating class
/// and that this class is aperiodic. Transient states are allowed.
///
/// Returns the members of the closed class.
pub fn check_ergodic(m: &DMatrix<f64>) -> Result<Vec<usize>> {
    let n = m.nrows();
    let adjacency: Vec<Vec<usize>> = (0..n)
        .map(|i| (0..n).filter(|&j| m[(i, j)] > 0.0).collect())
        .collect();
    let components = strongly_connected_components(&adjacency);
    let mut component_of = vec![0; n];
    for (c, members) in components.iter().enumerate() {
        for &v in members {
            component_of[v] = c;
        }
    }
    let closed: Vec<usize> = (0..components.len())
        .filter(|&c| {
            components[c]
                .iter()
                .all(|&v| adjacency[v].iter().all(|&w| component_of[w] == c))
        })
        .collect();
    if closed.len() != 1 {
        return Err(Error::NotIrreducible {
            closed_classes: closed.len(),
        });
    }
    let class = components[closed[0]].clone();
    let period = class_period(&adjacency, &class);
    if period > 1 {
        return Err(Error::Periodic { period });
    }
    Ok(class)
}

/// Tarjan's algorithm, iterative so deep chains cannot overflow the stack.
fn strongly_connected_components(adjacency: &[Vec<usize>]) -> Vec<Vec<usize>> {
    const UNVISITED: usize = usize::MAX;
    let n = adjacency.len();
    let mut index = vec![UNVISITED; n];
    let mut lowlink = vec![0; n];
    let mut on_stack = vec![false; n];
    let mut stack = Vec::new();
    let mut components = Vec::new();
    let mut next_index = 0;

    for root in 0..n {
        if index[root] != UNVISITED {
            continue;
        }
        // (vertex, position of the next edge to explore)
        let mut call_stack = vec![(root, 0usize)];
        index[root] = next_index;
        lowlink[root] = next_index;
        next_index += 1;
        stack.push(root);
        on_stack[root] = true;

        while let Some(&mut (v, ref mut edge)) = call_stack.last_mut() {
            if let Some(&w) = adjacency[v].get(*edge) {
                *edge += 1;
                if index[w] == UNVISITED {
                    index[w] = next_index;
                    lowlink[w] = next_index;
                    next_index += 1;
                    stack.push(w);
                    on_stack[w] = true;
                    call_stack.push((w, 0));
                } else if on_stack[w] {
                    lowlink[v] = lowlink[v].min(index[w]);
                }
            } else {
                call_stack.pop();
                if let Some(&(parent, _)) = call_stack.last() {
                    lowlink[parent] = lowlink[parent].min(lowlink[v]);
                }
                if lowlink[v] == index[v] {
                    let mut component = Vec::new();
                    while let Some(w) = stack.pop() {
                        on_stack[w] = false;
                        component.push(w);
                        if w == v {
                            break;
                        }
                    }
                    component.sort_unstable();
                    components.push(component);
                }
            }
        }
    }
    components
}

/// Period of a strongly connected class: gcd over class edges `u -> v` of
/// `level(u) + 1 - level(v)` for BFS levels from any class member.
fn class_period(adjacency: &[Vec<usize>], class: &[usize]) -> usize {
    let n = adjacency.len();
    let mut in_class = vec![false; n];
    for &v in class {
        in_class[v] = true;
    }
    let mut level = vec![usize::MAX; n];
    let mut queue = std::collections::VecDeque::new();
    level[class[0]] = 0;
    queue.push_back(class[0]);
    let mut period = 0usize;
    while let Some(u) = queue.pop_front() {
        for &v in adjacency[u].iter().filter(|&&v| in_class[v]) {
            if level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            } else {
                let diff = (level[u] + 1).abs_diff(level[v]);
                period = gcd(period, diff);
            }
        }
    }
    period
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Stationary distribution of a row-stochastic matrix with a unique aperiodic
/// closed class: solves `(M^T - I) d = 0` with the last equation replaced by
/// `sum(d) = 1`.
pub fn stationary_of_matrix(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    check_ergodic(m)?;
    let n = m.nrows();
    let mut a = m.transpose();
    for i in 0..n {
        a[(i, i)] -= 1.0;
    }
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[n - 1] = 1.0;
    let solution = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::SolveFailed("singular balance system".into()))?;
    let mut d: Vec<f64> = solution.iter().copied().collect();
    if let Some(min) = d.iter().copied().reduce(f64::min) {
        if min < -1e-9 {
            return Err(Error::SolveFailed(format!(
                "stationary solve produced a negative mass {min:e}"
            )));
        }
    }
    for x in &mut d {
        *x = x.max(0.0);
    }
    let total: f64 = d.iter().sum();
    d.iter_mut().for_each(|x| *x /= total);

    let residual = balance_residual(m, &d);
    if residual >= STATIONARY_RESIDUAL_TOLERANCE {
        return Err(Error::SolveFailed(format!(
            "balance residual {residual:e} above tolerance"
        )));
    }
    Ok(d)
}

/// `max_j |(d^T M)_j - d_j|`.
pub fn balance_residual(m: &DMatrix<f64>, d: &[f64]) -> f64 {
    let n = m.nrows();
    (0..n)
        .map(|j| {
            let flow: f64 = (0..n).map(|i| d[i] * m[(i, j)]).sum();
            (flow - d[j]).abs()
        })
        .fold(0.0, f64::max)
}

/// Undiscounted stationary state-action distribution `d_pi` of `(mdp, policy)`.
pub fn stationary_distribution(mdp: &TabularMdp, policy: &TabularPolicy) -> Result<StateActionDist> {
    let m = chain_matrix(mdp, policy)?;
    let d = stationary_of_matrix(&m)?;
    Ok(StateActionDist {
        n_states: mdp.n_states,
        n_actions: mdp.n_actions,
        probs: d,
    })
}
