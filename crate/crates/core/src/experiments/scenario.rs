//! Generators for test and experiment MDPs.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OpeError, Result};
use crate::mdp::{RewardSpec, TabularMdp};
use crate::table::TransitionTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardKind {
    /// Bernoulli rewards with a random success probability per pair.
    #[default]
    Binary,
    /// Three-point rewards on `{-1, 0, 2}` with random weights.
    ThreePoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RandomMdpSpec {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub discount: f64,
    #[serde(default)]
    pub reward: RewardKind,
    pub seed: u64,
}

fn random_distribution<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..len).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut probs: Vec<f64> = raw.iter().map(|w| w / total).collect();
    // push the rounding residue onto the last entry so the sum is 1 to within an ulp
    let head: f64 = probs[..len - 1].iter().sum();
    probs[len - 1] = 1.0 - head;
    probs
}

/// Random MDP with strictly positive initial, transition, and reward probabilities.
pub fn random_mdp<R: Rng + ?Sized>(
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    discount: f64,
    reward: RewardKind,
    rng: &mut R,
) -> Result<TabularMdp> {
    if num_states == 0 || num_actions == 0 {
        return Err(OpeError::invalid(
            "random",
            "need at least one state and one action",
        ));
    }
    let initial = random_distribution(num_states, rng);
    let mut rows = Vec::with_capacity(num_states * num_actions);
    for _ in 0..num_states * num_actions {
        rows.push(random_distribution(num_states, rng));
    }
    let transitions = TransitionTable::from_fn(num_states, num_actions, |s, a, n| {
        rows[s * num_actions + a][n]
    });
    let rewards = (0..num_states * num_actions)
        .map(|_| match reward {
            RewardKind::Binary => RewardSpec::bernoulli(rng.random_range(0.05..0.95)),
            RewardKind::ThreePoint => RewardSpec {
                support: vec![-1.0, 0.0, 2.0],
                probs: random_distribution(3, rng),
            },
        })
        .collect();
    TabularMdp::new(horizon, discount, initial, transitions, rewards)
}

impl RandomMdpSpec {
    pub fn build(&self) -> Result<TabularMdp> {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(self.seed);
        random_mdp(
            self.num_states,
            self.num_actions,
            self.horizon,
            self.discount,
            self.reward,
            &mut rng,
        )
    }
}

/// Product of `base` with an `noise_states`-state chain that ignores actions and rewards.
///
/// Product state `s * noise_states + z` pairs base state `s` with noise state `z`. The noise
/// starts uniform, stays put with probability `noise_stay`, and otherwise jumps uniformly.
/// Rewards and base dynamics do not depend on `z`, so the extra coordinate is pure distraction
/// for any estimator that conditions on the full state.
pub fn noisy_product(
    base: &TabularMdp,
    noise_states: usize,
    noise_stay: f64,
) -> Result<TabularMdp> {
    if noise_states == 0 {
        return Err(OpeError::invalid("noise_states", "must be positive"));
    }
    if !(0.0..=1.0).contains(&noise_stay) {
        return Err(OpeError::invalid("noise_stay", "must lie in [0, 1]"));
    }
    let m = noise_states;
    let ns = base.num_states() * m;
    let na = base.num_actions();
    let noise_step = |from: usize, to: usize| {
        let jump = (1.0 - noise_stay) / m as f64;
        if from == to {
            noise_stay + jump
        } else {
            jump
        }
    };
    let initial = (0..ns)
        .map(|s| base.initial_dist()[s / m] / m as f64)
        .collect();
    let transitions = TransitionTable::from_fn(ns, na, |s, a, next| {
        base.transitions().row(s / m, a)[next / m] * noise_step(s % m, next % m)
    });
    let rewards = (0..ns)
        .flat_map(|s| (0..na).map(move |a| (s, a)))
        .map(|(s, a)| base.reward(s / m, a).clone())
        .collect();
    renormalized(
        base.horizon(),
        base.discount(),
        initial,
        transitions,
        rewards,
    )
}

/// Builds the MDP after nudging every distribution to sum to one exactly in floating point.
fn renormalized(
    horizon: usize,
    discount: f64,
    mut initial: Vec<f64>,
    mut transitions: TransitionTable,
    rewards: Vec<RewardSpec>,
) -> Result<TabularMdp> {
    fn fix(v: &mut [f64]) {
        let total: f64 = v.iter().sum();
        v.iter_mut().for_each(|p| *p /= total);
    }
    fix(&mut initial);
    for s in 0..transitions.num_states() {
        for a in 0..transitions.num_actions() {
            fix(transitions.row_mut(s, a));
        }
    }
    TabularMdp::new(horizon, discount, initial, transitions, rewards)
}
