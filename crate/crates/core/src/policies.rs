//! Policy families used for behavior and evaluation policies.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{OpeError, Result};
use crate::mdp::Policy;
use crate::table::SaTable;

pub const DEFAULT_THOMPSON_DRAWS: usize = 100_000;

/// Per-step state-action values `q_t(s, a)` for `t = 0..=T`.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    steps: Vec<SaTable>,
}

impl QTable {
    pub fn new(steps: Vec<SaTable>) -> Result<Self> {
        let first = steps
            .first()
            .ok_or_else(|| OpeError::invalid("q", "no steps"))?;
        let (ns, na) = (first.num_states(), first.num_actions());
        for (t, q) in steps.iter().enumerate() {
            if q.num_states() != ns || q.num_actions() != na {
                return Err(OpeError::invalid(
                    format!("q[{t}]"),
                    "dimensions differ from step 0",
                ));
            }
            if q.values().iter().any(|v| !v.is_finite()) {
                return Err(OpeError::invalid(format!("q[{t}]"), "non-finite entry"));
            }
        }
        Ok(Self { steps })
    }

    pub fn zeros(horizon: usize, num_states: usize, num_actions: usize) -> Self {
        Self {
            steps: vec![SaTable::zeros(num_states, num_actions); horizon + 1],
        }
    }

    pub fn step(&self, t: usize) -> &SaTable {
        &self.steps[t]
    }

    pub fn horizon(&self) -> usize {
        self.steps.len() - 1
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            steps: self.steps.iter().map(|q| q.map(|v| c * v)).collect(),
        }
    }

    pub fn lerp(&self, other: &QTable, r: f64) -> Self {
        Self {
            steps: self
                .steps
                .iter()
                .zip(&other.steps)
                .map(|(a, b)| a.lerp(b, r))
                .collect(),
        }
    }
}

/// First index attaining the maximum.
fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn check_finite(scores: &SaTable) -> Result<()> {
    if let Some(i) = scores.values().iter().position(|v| !v.is_finite()) {
        let na = scores.num_actions();
        return Err(OpeError::invalid(
            format!("scores[{}][{}]", i / na, i % na),
            "score is not finite",
        ));
    }
    Ok(())
}

/// Argmax gets `1 - eps + eps/|A|`, every other action `eps/|A|`.
pub fn epsilon_greedy_policy(scores: &SaTable, epsilon: f64) -> Result<Policy> {
    if scores.num_actions() == 0 {
        return Err(OpeError::invalid("scores", "empty action set"));
    }
    if !(0.0..=1.0).contains(&epsilon) {
        return Err(OpeError::invalid(
            "epsilon",
            format!("{epsilon} is outside [0, 1]"),
        ));
    }
    check_finite(scores)?;
    let na = scores.num_actions();
    let explore = epsilon / na as f64;
    let mut table = SaTable::filled(scores.num_states(), na, explore);
    for s in 0..scores.num_states() {
        let best = argmax(scores.row(s));
        table[(s, best)] = 1.0 - epsilon + explore;
    }
    Policy::new(table)
}

pub fn softmax_policy(scores: &SaTable) -> Result<Policy> {
    check_finite(scores)?;
    let mut table = scores.clone();
    for s in 0..scores.num_states() {
        let row = table.row_mut(s);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Policy::new(table)
}

pub fn greedy_policy(means: &SaTable) -> Result<Policy> {
    epsilon_greedy_policy(means, 0.0)
}

/// Monte Carlo choice probabilities of Gaussian Thompson sampling.
///
/// For each state, `draws` rounds sample `r(a) ~ N(means(s,a), variances(s,a))` independently and
/// record the argmax (ties to the lowest index). The last action with positive count absorbs the
/// rounding so that each row sums to exactly one.
pub fn thompson_gaussian_policy<R: Rng + ?Sized>(
    means: &SaTable,
    variances: &SaTable,
    draws: usize,
    rng: &mut R,
) -> Result<Policy> {
    if draws == 0 {
        return Err(OpeError::invalid("draws", "must be at least 1"));
    }
    if means.num_states() != variances.num_states()
        || means.num_actions() != variances.num_actions()
    {
        return Err(OpeError::DimensionMismatch(
            "means and variances differ in shape".into(),
        ));
    }
    check_finite(means)?;
    let na = means.num_actions();
    if let Some(i) = variances
        .values()
        .iter()
        .position(|v| !v.is_finite() || *v < 0.0)
    {
        return Err(OpeError::invalid(
            format!("variances[{}][{}]", i / na, i % na),
            "variance must be finite and nonnegative",
        ));
    }
    let mut table = SaTable::zeros(means.num_states(), na);
    let mut counts = vec![0usize; na];
    let mut sampled = vec![0.0; na];
    for s in 0..means.num_states() {
        counts.iter_mut().for_each(|c| *c = 0);
        let mu = means.row(s);
        let sd: Vec<f64> = variances.row(s).iter().map(|v| v.sqrt()).collect();
        for _ in 0..draws {
            for a in 0..na {
                let z: f64 = StandardNormal.sample(rng);
                sampled[a] = mu[a] + sd[a] * z;
            }
            counts[argmax(&sampled)] += 1;
        }
        let row = table.row_mut(s);
        let last = counts.iter().rposition(|&c| c > 0).unwrap_or(0);
        let mut assigned = 0.0;
        for a in 0..na {
            if a != last {
                row[a] = counts[a] as f64 / draws as f64;
                assigned += row[a];
            }
        }
        row[last] = 1.0 - assigned;
    }
    Policy::new(table)
}
