//! Finite-horizon tabular MDPs and stationary policies over them.

use serde::{Deserialize, Serialize};

use crate::error::{OpeError, Result};
use crate::nuisance::q_recursion;
use crate::table::{check_distribution, SaTable, TransitionTable};

// ── Rewards ─────────────────────────────────────────────────────────────

/// Finite-support reward distribution for one state-action pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSpec {
    pub support: Vec<f64>,
    pub probs: Vec<f64>,
}

impl RewardSpec {
    pub fn deterministic(value: f64) -> Self {
        Self {
            support: vec![value],
            probs: vec![1.0],
        }
    }

    pub fn bernoulli(p: f64) -> Self {
        Self {
            support: vec![0.0, 1.0],
            probs: vec![1.0 - p, p],
        }
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        if self.support.len() != self.probs.len() {
            return Err(OpeError::invalid(
                path,
                format!(
                    "support has {} values but probs has {}",
                    self.support.len(),
                    self.probs.len()
                ),
            ));
        }
        if let Some(i) = self.support.iter().position(|r| !r.is_finite()) {
            return Err(OpeError::invalid(
                format!("{path}.support[{i}]"),
                "reward value is not finite",
            ));
        }
        check_distribution(&format!("{path}.probs"), &self.probs)
    }

    pub fn mean(&self) -> f64 {
        self.support
            .iter()
            .zip(&self.probs)
            .map(|(r, p)| r * p)
            .sum()
    }

    pub fn variance(&self) -> f64 {
        let mean = self.mean();
        self.support
            .iter()
            .zip(&self.probs)
            .map(|(r, p)| p * (r - mean) * (r - mean))
            .sum()
    }
}

// ── MDP ─────────────────────────────────────────────────────────────────

/// `<S, A, P_S0, P_S, P_R>` together with the horizon (index of the last step) and discount.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MdpFile", into = "MdpFile")]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    discount: f64,
    initial_dist: Vec<f64>,
    transitions: TransitionTable,
    rewards: Vec<RewardSpec>,
}

impl TabularMdp {
    /// Builds and validates an MDP. `rewards` is indexed `[s * num_actions + a]`.
    pub fn new(
        horizon: usize,
        discount: f64,
        initial_dist: Vec<f64>,
        transitions: TransitionTable,
        rewards: Vec<RewardSpec>,
    ) -> Result<Self> {
        let num_states = transitions.num_states();
        let num_actions = transitions.num_actions();
        if num_states == 0 {
            return Err(OpeError::invalid("num_states", "must be positive"));
        }
        if num_actions == 0 {
            return Err(OpeError::invalid("num_actions", "must be positive"));
        }
        if !(0.0..=1.0).contains(&discount) {
            return Err(OpeError::invalid(
                "discount",
                format!("{discount} is outside [0, 1]"),
            ));
        }
        if initial_dist.len() != num_states {
            return Err(OpeError::invalid(
                "initial_dist",
                format!(
                    "expected {num_states} entries, found {}",
                    initial_dist.len()
                ),
            ));
        }
        check_distribution("initial_dist", &initial_dist)?;
        for s in 0..num_states {
            for a in 0..num_actions {
                check_distribution(&format!("transitions[{s}][{a}]"), transitions.row(s, a))?;
            }
        }
        if rewards.len() != num_states * num_actions {
            return Err(OpeError::invalid(
                "rewards",
                format!(
                    "expected {} state-action entries, found {}",
                    num_states * num_actions,
                    rewards.len()
                ),
            ));
        }
        for (i, r) in rewards.iter().enumerate() {
            r.validate(&format!(
                "rewards[{}][{}]",
                i / num_actions,
                i % num_actions
            ))?;
        }
        Ok(Self {
            num_states,
            num_actions,
            horizon,
            discount,
            initial_dist,
            transitions,
            rewards,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn with_discount(mut self, discount: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&discount) {
            return Err(OpeError::invalid(
                "discount",
                format!("{discount} is outside [0, 1]"),
            ));
        }
        self.discount = discount;
        Ok(self)
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }

    pub fn transitions(&self) -> &TransitionTable {
        &self.transitions
    }

    pub fn reward(&self, s: usize, a: usize) -> &RewardSpec {
        &self.rewards[s * self.num_actions + a]
    }

    /// Largest reward support size over all state-action pairs.
    pub fn max_reward_support(&self) -> usize {
        self.rewards
            .iter()
            .map(|r| r.support.len())
            .max()
            .unwrap_or(1)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MdpFile {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    discount: f64,
    initial_dist: Vec<f64>,
    transitions: Vec<Vec<Vec<f64>>>,
    rewards: Vec<Vec<RewardSpec>>,
}

impl TryFrom<MdpFile> for TabularMdp {
    type Error = OpeError;

    fn try_from(f: MdpFile) -> Result<Self> {
        let (ns, na) = (f.num_states, f.num_actions);
        if ns == 0 {
            return Err(OpeError::invalid("num_states", "must be positive"));
        }
        if na == 0 {
            return Err(OpeError::invalid("num_actions", "must be positive"));
        }
        if f.transitions.len() != ns {
            return Err(OpeError::invalid(
                "transitions",
                format!("expected {ns} rows, found {}", f.transitions.len()),
            ));
        }
        for (s, per_action) in f.transitions.iter().enumerate() {
            if per_action.len() != na {
                return Err(OpeError::invalid(
                    format!("transitions[{s}]"),
                    format!("expected {na} actions, found {}", per_action.len()),
                ));
            }
            for (a, row) in per_action.iter().enumerate() {
                if row.len() != ns {
                    return Err(OpeError::invalid(
                        format!("transitions[{s}][{a}]"),
                        format!(
                            "expected {ns} next-state probabilities, found {}",
                            row.len()
                        ),
                    ));
                }
            }
        }
        if f.rewards.len() != ns {
            return Err(OpeError::invalid(
                "rewards",
                format!("expected {ns} rows, found {}", f.rewards.len()),
            ));
        }
        for (s, row) in f.rewards.iter().enumerate() {
            if row.len() != na {
                return Err(OpeError::invalid(
                    format!("rewards[{s}]"),
                    format!("expected {na} actions, found {}", row.len()),
                ));
            }
        }
        let transitions = TransitionTable::from_fn(ns, na, |s, a, n| f.transitions[s][a][n]);
        let rewards = f.rewards.into_iter().flatten().collect();
        TabularMdp::new(f.horizon, f.discount, f.initial_dist, transitions, rewards)
    }
}

impl From<TabularMdp> for MdpFile {
    fn from(m: TabularMdp) -> Self {
        let transitions = m.transitions.to_nested();
        let rewards = m
            .rewards
            .chunks(m.num_actions)
            .map(<[RewardSpec]>::to_vec)
            .collect();
        MdpFile {
            num_states: m.num_states,
            num_actions: m.num_actions,
            horizon: m.horizon,
            discount: m.discount,
            initial_dist: m.initial_dist,
            transitions,
            rewards,
        }
    }
}

// ── Policies ────────────────────────────────────────────────────────────

/// Stationary stochastic policy `pi(a | s)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyFile", into = "PolicyFile")]
pub struct Policy {
    table: SaTable,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PolicyFile {
    table: SaTable,
}

impl TryFrom<PolicyFile> for Policy {
    type Error = OpeError;

    fn try_from(f: PolicyFile) -> Result<Self> {
        Policy::new(f.table)
    }
}

impl From<Policy> for PolicyFile {
    fn from(p: Policy) -> Self {
        PolicyFile { table: p.table }
    }
}

impl Policy {
    pub fn new(table: SaTable) -> Result<Self> {
        for s in 0..table.num_states() {
            check_distribution(&format!("table[{s}]"), table.row(s))?;
        }
        Ok(Self { table })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Self {
            table: SaTable::filled(num_states, num_actions, 1.0 / num_actions as f64),
        }
    }

    /// `self + r * (other - self)` without re-validating the rows.
    ///
    /// Rows still sum to one; entries may leave `[0, 1]` when `r` is outside `[0, 1]`.
    pub fn lerp(&self, other: &Policy, r: f64) -> Policy {
        Policy {
            table: self.table.lerp(&other.table, r),
        }
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.table[(s, a)]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        self.table.row(s)
    }

    pub fn table(&self) -> &SaTable {
        &self.table
    }

    pub fn num_states(&self) -> usize {
        self.table.num_states()
    }

    pub fn num_actions(&self) -> usize {
        self.table.num_actions()
    }

    /// `sum_a pi(a|s) f(s, a)`.
    pub fn expect_row(&self, s: usize, values: &SaTable) -> f64 {
        self.row(s)
            .iter()
            .zip(values.row(s))
            .map(|(p, v)| p * v)
            .sum()
    }

    pub fn check_dims(&self, mdp: &TabularMdp) -> Result<()> {
        if self.num_states() != mdp.num_states() || self.num_actions() != mdp.num_actions() {
            return Err(OpeError::DimensionMismatch(format!(
                "policy is {}x{}, mdp is {}x{}",
                self.num_states(),
                self.num_actions(),
                mdp.num_states(),
                mdp.num_actions()
            )));
        }
        Ok(())
    }
}

// ── Exact quantities ────────────────────────────────────────────────────

pub fn mean_reward_table(mdp: &TabularMdp) -> SaTable {
    SaTable::from_fn(mdp.num_states(), mdp.num_actions(), |s, a| {
        mdp.reward(s, a).mean()
    })
}

pub fn reward_variance_table(mdp: &TabularMdp) -> SaTable {
    SaTable::from_fn(mdp.num_states(), mdp.num_actions(), |s, a| {
        mdp.reward(s, a).variance()
    })
}

/// Exact `V^pi` by backward recursion on the true mean rewards and transitions.
pub fn exact_policy_value(mdp: &TabularMdp, policy: &Policy) -> Result<f64> {
    policy.check_dims(mdp)?;
    let q = q_recursion(
        &mean_reward_table(mdp),
        mdp.transitions(),
        policy,
        mdp.horizon(),
        mdp.discount(),
    )?;
    Ok(initial_state_value(mdp, policy, q.step(0)))
}

/// `sum_s P_S0(s) sum_a pi(a|s) q(s, a)`.
pub fn initial_state_value(mdp: &TabularMdp, policy: &Policy, q0: &SaTable) -> f64 {
    mdp.initial_dist()
        .iter()
        .enumerate()
        .map(|(s, p0)| p0 * policy.expect_row(s, q0))
        .sum()
}

/// Step-0 optimal state-action values of the finite-horizon problem.
pub fn optimal_q0(mdp: &TabularMdp) -> SaTable {
    let mu = mean_reward_table(mdp);
    let (ns, na) = (mdp.num_states(), mdp.num_actions());
    let mut q = mu.clone();
    for _ in 0..mdp.horizon() {
        let v: Vec<f64> = q
            .rows()
            .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        q = SaTable::from_fn(ns, na, |s, a| {
            let next: f64 = mdp
                .transitions()
                .row(s, a)
                .iter()
                .zip(&v)
                .map(|(p, v)| p * v)
                .sum();
            mu[(s, a)] + mdp.discount() * next
        });
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_state(reward: RewardSpec, horizon: usize, discount: f64) -> TabularMdp {
        TabularMdp::new(
            horizon,
            discount,
            vec![1.0],
            TransitionTable::uniform(1, 1),
            vec![reward],
        )
        .unwrap()
    }

    #[test]
    fn mean_reward_examples() {
        let m = single_state(RewardSpec::bernoulli(0.7), 0, 1.0);
        assert!((mean_reward_table(&m)[(0, 0)] - 0.7).abs() < 1e-15);
        let m = single_state(RewardSpec::deterministic(5.0), 0, 1.0);
        assert_eq!(mean_reward_table(&m)[(0, 0)], 5.0);
        let r = RewardSpec {
            support: vec![-1.0, 0.0, 2.0],
            probs: vec![0.25, 0.5, 0.25],
        };
        assert!((r.mean() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn reward_variance_examples() {
        assert_eq!(RewardSpec::deterministic(3.0).variance(), 0.0);
        assert!((RewardSpec::bernoulli(0.5).variance() - 0.25).abs() < 1e-15);
        assert!((RewardSpec::bernoulli(0.7).variance() - 0.21).abs() < 1e-15);
    }

    #[test]
    fn constant_reward_value_is_geometric_sum() {
        for &gamma in &[0.0, 0.5, 0.9, 1.0] {
            let m = single_state(RewardSpec::deterministic(2.0), 4, gamma);
            let v = exact_policy_value(&m, &Policy::uniform(1, 1)).unwrap();
            let expected: f64 = (0..=4).map(|t| 2.0 * gamma.powi(t)).sum();
            assert!(
                (v - expected).abs() < 1e-12,
                "gamma {gamma}: {v} vs {expected}"
            );
        }
    }

    #[test]
    fn zero_discount_only_counts_first_step() {
        let transitions = TransitionTable::from_fn(2, 2, |_, _, n| if n == 1 { 1.0 } else { 0.0 });
        let rewards = vec![
            RewardSpec::deterministic(1.0),
            RewardSpec::deterministic(3.0),
            RewardSpec::deterministic(10.0),
            RewardSpec::deterministic(20.0),
        ];
        let m = TabularMdp::new(3, 0.0, vec![0.4, 0.6], transitions, rewards).unwrap();
        let pi =
            Policy::new(SaTable::from_rows(vec![vec![0.5, 0.5], vec![0.1, 0.9]]).unwrap()).unwrap();
        let expected = 0.4 * (0.5 * 1.0 + 0.5 * 3.0) + 0.6 * (0.1 * 10.0 + 0.9 * 20.0);
        assert!((exact_policy_value(&m, &pi).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn json_validation_names_offending_path() {
        let text = r#"{"num_states":2,"num_actions":1,"horizon":1,"discount":0.9,
            "initial_dist":[0.5,0.5],
            "transitions":[[[1.0,0.0]],[[0.3,0.6]]],
            "rewards":[[{"support":[1.0],"probs":[1.0]}],[{"support":[0.0],"probs":[1.0]}]]}"#;
        let err = TabularMdp::from_json(text).unwrap_err().to_string();
        assert!(err.contains("transitions[1][0]"), "{err}");

        let text = r#"{"num_states":1,"num_actions":1,"horizon":0,"discount":1.0,
            "initial_dist":[1.0],"transitions":[[[1.0]]],
            "rewards":[[{"support":[0.0,1.0],"probs":[0.5]}]]}"#;
        let err = TabularMdp::from_json(text).unwrap_err().to_string();
        assert!(err.contains("rewards[0][0]"), "{err}");
    }

    #[test]
    fn json_round_trip() {
        let transitions =
            TransitionTable::from_fn(2, 2, |s, a, n| if (s + a) % 2 == n { 0.75 } else { 0.25 });
        let rewards = (0..4)
            .map(|i| RewardSpec::bernoulli(0.1 * i as f64))
            .collect();
        let m = TabularMdp::new(2, 0.95, vec![0.3, 0.7], transitions, rewards).unwrap();
        let back = TabularMdp::from_json(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn policy_rows_must_sum_to_one() {
        let bad = SaTable::from_rows(vec![vec![0.5, 0.4]]).unwrap();
        assert!(Policy::new(bad).is_err());
        let neg = SaTable::from_rows(vec![vec![1.5, -0.5]]).unwrap();
        assert!(Policy::new(neg).is_err());
    }
}
