//! Nuisance estimation: fold partitions, tabular behavior/reward/transition models, and the
//! backward Q recursion under the evaluation policy.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::error::{OpeError, Result};
use crate::mdp::Policy;
use crate::policies::QTable;
use crate::table::{SaTable, TransitionTable};
use crate::trajectory::{LoggedDataset, Trajectory};

pub const DEFAULT_SMOOTHING_ALPHA: f64 = 0.5;

// ── Folds ───────────────────────────────────────────────────────────────

/// `K` disjoint index sets covering `0..n` with sizes differing by at most one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPartition {
    n: usize,
    folds: Vec<Vec<usize>>,
}

impl FoldPartition {
    pub fn folds(&self) -> &[Vec<usize>] {
        &self.folds
    }

    pub fn k(&self) -> usize {
        self.folds.len()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Indices outside fold `k`, ascending.
    pub fn complement(&self, k: usize) -> Vec<usize> {
        let mut in_fold = vec![false; self.n];
        for &i in &self.folds[k] {
            in_fold[i] = true;
        }
        (0..self.n).filter(|&i| !in_fold[i]).collect()
    }
}

/// Shuffles `0..n` and cuts it into `k` contiguous chunks; the first `n % k` folds get the extra
/// element. Indices inside each fold are sorted.
pub fn make_folds<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<FoldPartition> {
    if k < 2 || k > n {
        return Err(OpeError::FoldCount { k, n });
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(rng);
    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for j in 0..k {
        let size = base + usize::from(j < extra);
        let mut fold = perm[start..start + size].to_vec();
        fold.sort_unstable();
        folds.push(fold);
        start += size;
    }
    Ok(FoldPartition { n, folds })
}

// ── Tabular estimators ──────────────────────────────────────────────────

/// `(count(s,a) + alpha) / (count(s) + alpha |A|)` with counts pooled over all steps; unvisited
/// states get the uniform distribution.
pub fn estimate_behavior_policy<'a>(
    trajectories: impl IntoIterator<Item = &'a Trajectory>,
    num_states: usize,
    num_actions: usize,
    smoothing: f64,
) -> Policy {
    let mut counts = SaTable::zeros(num_states, num_actions);
    for t in trajectories {
        for step in &t.steps {
            counts[(step.state, step.action)] += 1.0;
        }
    }
    let uniform = 1.0 / num_actions as f64;
    let mut table = counts.clone();
    for s in 0..num_states {
        let visits: f64 = counts.row(s).iter().sum();
        let denom = visits + smoothing * num_actions as f64;
        let row = table.row_mut(s);
        if visits == 0.0 || denom <= 0.0 {
            row.iter_mut().for_each(|p| *p = uniform);
        } else {
            row.iter_mut().for_each(|p| *p = (*p + smoothing) / denom);
        }
    }
    Policy::new(table).expect("smoothed empirical frequencies form a distribution")
}

/// Cell means of the rewards pooled over steps; unobserved cells get the subset's global mean.
pub fn estimate_mean_reward<'a>(
    trajectories: impl IntoIterator<Item = &'a Trajectory>,
    num_states: usize,
    num_actions: usize,
) -> SaTable {
    let mut sums = SaTable::zeros(num_states, num_actions);
    let mut counts = SaTable::zeros(num_states, num_actions);
    let (mut total, mut seen) = (0.0, 0usize);
    for t in trajectories {
        for step in &t.steps {
            sums[(step.state, step.action)] += step.reward;
            counts[(step.state, step.action)] += 1.0;
            total += step.reward;
            seen += 1;
        }
    }
    let global = if seen == 0 { 0.0 } else { total / seen as f64 };
    SaTable::from_fn(num_states, num_actions, |s, a| {
        let c = counts[(s, a)];
        if c == 0.0 {
            global
        } else {
            sums[(s, a)] / c
        }
    })
}

/// Empirical next-state frequencies from steps `0..T-1`; unobserved pairs get uniform rows.
pub fn estimate_transitions<'a>(
    trajectories: impl IntoIterator<Item = &'a Trajectory>,
    num_states: usize,
    num_actions: usize,
) -> TransitionTable {
    let mut table = TransitionTable::from_fn(num_states, num_actions, |_, _, _| 0.0);
    for t in trajectories {
        for pair in t.steps.windows(2) {
            table.row_mut(pair[0].state, pair[0].action)[pair[1].state] += 1.0;
        }
    }
    let uniform = 1.0 / num_states as f64;
    for s in 0..num_states {
        for a in 0..num_actions {
            let row = table.row_mut(s, a);
            let total: f64 = row.iter().sum();
            if total == 0.0 {
                row.iter_mut().for_each(|p| *p = uniform);
            } else {
                row.iter_mut().for_each(|p| *p /= total);
            }
        }
    }
    table
}

/// `q_T = mu`, `q_t(s,a) = mu(s,a) + gamma sum_{s',a'} P(s'|s,a) pi_e(a'|s') q_{t+1}(s',a')`.
pub fn q_recursion(
    mean_reward: &SaTable,
    transitions: &TransitionTable,
    eval_policy: &Policy,
    horizon: usize,
    discount: f64,
) -> Result<QTable> {
    let (ns, na) = (mean_reward.num_states(), mean_reward.num_actions());
    if transitions.num_states() != ns
        || transitions.num_actions() != na
        || eval_policy.num_states() != ns
        || eval_policy.num_actions() != na
    {
        return Err(OpeError::DimensionMismatch(format!(
            "mean reward {ns}x{na}, transitions {}x{}, policy {}x{}",
            transitions.num_states(),
            transitions.num_actions(),
            eval_policy.num_states(),
            eval_policy.num_actions()
        )));
    }
    let mut steps = vec![mean_reward.clone()];
    for _ in 0..horizon {
        let next = steps.last().unwrap();
        let v: Vec<f64> = (0..ns).map(|s| eval_policy.expect_row(s, next)).collect();
        let q = SaTable::from_fn(ns, na, |s, a| {
            let cont: f64 = transitions
                .row(s, a)
                .iter()
                .zip(&v)
                .map(|(p, v)| p * v)
                .sum();
            mean_reward[(s, a)] + discount * cont
        });
        steps.push(q);
    }
    steps.reverse();
    QTable::new(steps)
}

// ── Fitted nuisance tuples ──────────────────────────────────────────────

/// `(pi_b, {q_t})` plus the reward and transition models the Q table was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceEstimate {
    pub behavior: Policy,
    pub q: QTable,
    pub mean_reward: SaTable,
    pub transitions: TransitionTable,
}

impl NuisanceEstimate {
    /// Nuisances computed from the true model, for identity checks and oracle injection.
    pub fn oracle(
        mdp: &crate::mdp::TabularMdp,
        behavior: &Policy,
        eval_policy: &Policy,
    ) -> Result<Self> {
        let mean_reward = crate::mdp::mean_reward_table(mdp);
        let q = q_recursion(
            &mean_reward,
            mdp.transitions(),
            eval_policy,
            mdp.horizon(),
            mdp.discount(),
        )?;
        Ok(Self {
            behavior: behavior.clone(),
            q,
            mean_reward,
            transitions: mdp.transitions().clone(),
        })
    }

    pub fn check_support(&self, eval_policy: &Policy) -> Result<()> {
        check_support(&self.behavior, eval_policy)
    }
}

/// Errors when `behavior(a|s) = 0` at a pair where `eval_policy(a|s) > 0`.
pub fn check_support(behavior: &Policy, eval_policy: &Policy) -> Result<()> {
    for s in 0..eval_policy.num_states() {
        for a in 0..eval_policy.num_actions() {
            let e = eval_policy.prob(s, a);
            if e > 0.0 && behavior.prob(s, a) <= 0.0 {
                return Err(OpeError::SupportViolation {
                    state: s,
                    action: a,
                    eval_mass: e,
                });
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub enum BehaviorModel {
    #[default]
    Estimated,
    Known(Policy),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QModel {
    #[default]
    Tabular,
    /// `q_t = 0` for all t, which turns the doubly robust score into the IPW score.
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NuisanceConfig {
    pub smoothing_alpha: f64,
    pub behavior: BehaviorModel,
    pub q_model: QModel,
    /// Fraction of the fitting trajectories the models see (taken in index order).
    pub fit_fraction: f64,
    /// Bypasses fitting entirely.
    pub oracle: Option<NuisanceEstimate>,
}

impl Default for NuisanceConfig {
    fn default() -> Self {
        Self {
            smoothing_alpha: DEFAULT_SMOOTHING_ALPHA,
            behavior: BehaviorModel::Estimated,
            q_model: QModel::Tabular,
            fit_fraction: 1.0,
            oracle: None,
        }
    }
}

impl NuisanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.smoothing_alpha >= 0.0 && self.smoothing_alpha.is_finite()) {
            return Err(OpeError::invalid(
                "smoothing_alpha",
                "must be finite and >= 0",
            ));
        }
        if !(self.fit_fraction > 0.0 && self.fit_fraction <= 1.0) {
            return Err(OpeError::invalid("fit_fraction", "must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// Fits one nuisance tuple on `data[indices]`.
pub fn fit_on(
    data: &LoggedDataset,
    indices: &[usize],
    eval_policy: &Policy,
    config: &NuisanceConfig,
    discount: f64,
) -> Result<NuisanceEstimate> {
    config.validate()?;
    let (ns, na) = (eval_policy.num_states(), eval_policy.num_actions());
    let eta = match &config.oracle {
        Some(eta) => eta.clone(),
        None => {
            let keep = ((indices.len() as f64 * config.fit_fraction).ceil() as usize)
                .clamp(1.min(indices.len()), indices.len());
            let subset = &indices[..keep];
            let behavior = match &config.behavior {
                BehaviorModel::Known(p) => p.clone(),
                BehaviorModel::Estimated => {
                    estimate_behavior_policy(data.select(subset), ns, na, config.smoothing_alpha)
                }
            };
            let mean_reward = estimate_mean_reward(data.select(subset), ns, na);
            let transitions = estimate_transitions(data.select(subset), ns, na);
            let q = match config.q_model {
                QModel::Tabular => q_recursion(
                    &mean_reward,
                    &transitions,
                    eval_policy,
                    data.horizon(),
                    discount,
                )?,
                QModel::Zero => QTable::zeros(data.horizon(), ns, na),
            };
            NuisanceEstimate {
                behavior,
                q,
                mean_reward,
                transitions,
            }
        }
    };
    if eta.behavior.num_states() != ns || eta.behavior.num_actions() != na {
        return Err(OpeError::DimensionMismatch(
            "behavior policy and evaluation policy differ in shape".into(),
        ));
    }
    if eta.q.horizon() != data.horizon() {
        return Err(OpeError::DimensionMismatch(format!(
            "q table spans {} steps, data has {}",
            eta.q.horizon() + 1,
            data.horizon() + 1
        )));
    }
    eta.check_support(eval_policy)?;
    Ok(eta)
}

/// One nuisance tuple per fold, each fit on that fold's complement only.
pub fn fit_nuisances(
    data: &LoggedDataset,
    partition: &FoldPartition,
    eval_policy: &Policy,
    config: &NuisanceConfig,
    discount: f64,
) -> Result<Vec<NuisanceEstimate>> {
    if partition.n() != data.len() {
        return Err(OpeError::DimensionMismatch(format!(
            "partition covers {} trajectories, dataset has {}",
            partition.n(),
            data.len()
        )));
    }
    data.check_dims(eval_policy.num_states(), eval_policy.num_actions())?;
    (0..partition.k())
        .map(|k| {
            fit_on(
                data,
                &partition.complement(k),
                eval_policy,
                config,
                discount,
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::Step;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn traj(steps: &[(usize, usize, f64)]) -> Trajectory {
        Trajectory::new(steps.iter().map(|&(s, a, r)| Step::new(s, a, r)).collect())
    }

    #[test]
    fn folds_partition_indices() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = make_folds(4, 2, &mut rng).unwrap();
        assert_eq!(
            p.folds().iter().map(Vec::len).collect::<Vec<_>>(),
            vec![2, 2]
        );
        let mut all: Vec<usize> = p.folds().concat();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3]);

        let p = make_folds(5, 2, &mut rng).unwrap();
        assert_eq!(
            p.folds().iter().map(Vec::len).collect::<Vec<_>>(),
            vec![3, 2]
        );

        let a = make_folds(50, 3, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        let b = make_folds(50, 3, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fold_count_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            make_folds(3, 4, &mut rng),
            Err(OpeError::FoldCount { .. })
        ));
        assert!(matches!(
            make_folds(3, 1, &mut rng),
            Err(OpeError::FoldCount { .. })
        ));
    }

    #[test]
    fn behavior_estimates() {
        let data = [traj(&[(0, 0, 0.0), (0, 0, 0.0), (0, 1, 0.0)])];
        let p = estimate_behavior_policy(&data, 1, 2, 0.0);
        assert!((p.prob(0, 0) - 2.0 / 3.0).abs() < 1e-15);
        assert!((p.prob(0, 1) - 1.0 / 3.0).abs() < 1e-15);

        let data = [traj(&[(0, 0, 0.0), (0, 0, 0.0), (0, 0, 0.0), (0, 1, 0.0)])];
        let p = estimate_behavior_policy(&data, 2, 2, 0.5);
        assert!((p.prob(0, 0) - 0.7).abs() < 1e-15);
        assert!((p.prob(0, 1) - 0.3).abs() < 1e-15);
        // unvisited state falls back to uniform
        assert_eq!(p.row(1), &[0.5, 0.5]);

        let p = estimate_behavior_policy(&data, 1, 2, 1e9);
        assert!((p.prob(0, 0) - 0.5).abs() < 1e-8);
    }

    #[test]
    fn mean_reward_estimates() {
        let data = [traj(&[(0, 0, 1.0), (0, 0, 0.0), (0, 0, 1.0), (0, 0, 1.0)])];
        let mu = estimate_mean_reward(&data, 1, 2);
        assert_eq!(mu[(0, 0)], 0.75);
        assert_eq!(mu[(0, 1)], 0.75);

        let data = [
            traj(&[(0, 0, 2.0), (0, 0, -1.0)]),
            traj(&[(1, 1, 0.0), (1, 1, 0.0)]),
        ];
        let mu = estimate_mean_reward(&data, 2, 2);
        assert_eq!(mu[(0, 0)], 0.5);
        assert_eq!(mu[(0, 1)], 0.25);
    }

    #[test]
    fn transition_estimates() {
        let data = [
            traj(&[(0, 0, 0.0), (1, 0, 0.0)]),
            traj(&[(0, 0, 0.0), (1, 0, 0.0)]),
            traj(&[(0, 0, 0.0), (2, 0, 0.0)]),
        ];
        let p = estimate_transitions(&data, 3, 1);
        assert_eq!(p.row(0, 0), &[0.0, 2.0 / 3.0, 1.0 / 3.0]);
        assert_eq!(p.row(1, 0), &[1.0 / 3.0; 3]);

        let data = [traj(&[(0, 0, 0.0)])];
        let p = estimate_transitions(&data, 4, 2);
        for s in 0..4 {
            for a in 0..2 {
                assert_eq!(p.row(s, a), &[0.25; 4]);
            }
        }
    }

    #[test]
    fn q_recursion_boundaries() {
        let mu = SaTable::from_rows(vec![vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let p = TransitionTable::uniform(2, 2);
        let pi = Policy::uniform(2, 2);
        let q = q_recursion(&mu, &p, &pi, 0, 0.9).unwrap();
        assert_eq!(q.horizon(), 0);
        assert_eq!(q.step(0), &mu);
        let q = q_recursion(&mu, &p, &pi, 3, 0.0).unwrap();
        for t in 0..=3 {
            assert_eq!(q.step(t), &mu);
        }
    }

    #[test]
    fn known_behavior_passes_through() {
        let data = LoggedDataset::new(vec![
            traj(&[(0, 0, 1.0)]),
            traj(&[(1, 1, 0.0)]),
            traj(&[(0, 1, 1.0)]),
            traj(&[(1, 0, 0.0)]),
        ])
        .unwrap();
        let known =
            Policy::new(SaTable::from_rows(vec![vec![0.3, 0.7], vec![0.6, 0.4]]).unwrap()).unwrap();
        let cfg = NuisanceConfig {
            behavior: BehaviorModel::Known(known.clone()),
            ..Default::default()
        };
        let part = make_folds(4, 2, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let etas = fit_nuisances(&data, &part, &Policy::uniform(2, 2), &cfg, 1.0).unwrap();
        assert!(etas.iter().all(|e| e.behavior == known));
    }

    #[test]
    fn support_violation_is_reported() {
        let data = LoggedDataset::new(vec![traj(&[(0, 0, 1.0)]), traj(&[(0, 0, 0.0)])]).unwrap();
        let cfg = NuisanceConfig {
            smoothing_alpha: 0.0,
            ..Default::default()
        };
        let eval = Policy::new(SaTable::from_rows(vec![vec![0.0, 1.0]]).unwrap()).unwrap();
        let part = make_folds(2, 2, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(matches!(
            fit_nuisances(&data, &part, &eval, &cfg, 1.0),
            Err(OpeError::SupportViolation {
                state: 0,
                action: 1,
                ..
            })
        ));
    }
}
