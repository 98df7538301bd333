//! Reference computations shared by the integration tests.
//!
//! Everything here is written independently of the library's enumerator and recursions so the
//! two can be checked against each other.

#![allow(dead_code)]

use debiased_ope::experiments::scenario::{random_mdp, RewardKind};
use debiased_ope::policies::QTable;
use debiased_ope::table::SaTable;
use debiased_ope::{Policy, Step, TabularMdp, Trajectory};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub struct Instance {
    pub mdp: TabularMdp,
    pub behavior: Policy,
    pub eval: Policy,
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Strictly positive rows.
pub fn positive_policy(ns: usize, na: usize, rng: &mut impl Rng) -> Policy {
    let table = SaTable::from_fn(ns, na, |_, _| rng.random_range(0.1..1.0));
    normalize(table)
}

/// Rows with some exact zeros, but never an all-zero row.
pub fn sparse_policy(ns: usize, na: usize, rng: &mut impl Rng) -> Policy {
    let mut table = SaTable::from_fn(ns, na, |_, _| {
        if rng.random_bool(0.3) {
            0.0
        } else {
            rng.random_range(0.1..1.0)
        }
    });
    for s in 0..ns {
        if table.row(s).iter().all(|&v| v == 0.0) {
            table[(s, 0)] = 1.0;
        }
    }
    normalize(table)
}

fn normalize(mut table: SaTable) -> Policy {
    for s in 0..table.num_states() {
        let row = table.row_mut(s);
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= total);
    }
    Policy::new(table).unwrap()
}

pub fn random_table(ns: usize, na: usize, lo: f64, hi: f64, rng: &mut impl Rng) -> SaTable {
    SaTable::from_fn(ns, na, |_, _| rng.random_range(lo..hi))
}

pub fn random_q(horizon: usize, ns: usize, na: usize, rng: &mut impl Rng) -> QTable {
    QTable::new(
        (0..=horizon)
            .map(|_| random_table(ns, na, -2.0, 3.0, rng))
            .collect(),
    )
    .unwrap()
}

/// Random enumerable instance: `|S| <= 4`, `|A| <= 3`, `T <= 3`, binary rewards.
pub fn random_instance(seed: u64) -> Instance {
    let mut r = rng(seed);
    let ns = r.random_range(1..=4);
    let na = r.random_range(2..=3);
    let horizon = r.random_range(0..=3);
    let discount = r.random_range(0.5..=1.0);
    let mdp = random_mdp(ns, na, horizon, discount, RewardKind::Binary, &mut r).unwrap();
    let behavior = positive_policy(ns, na, &mut r);
    let eval = sparse_policy(ns, na, &mut r);
    Instance {
        mdp,
        behavior,
        eval,
    }
}

/// Every trajectory with positive probability under `policy`, by plain recursion.
pub fn enumerate(mdp: &TabularMdp, policy: &Policy) -> Vec<(Trajectory, f64)> {
    fn rec(
        mdp: &TabularMdp,
        policy: &Policy,
        state: usize,
        prefix: &mut Vec<Step>,
        prob: f64,
        out: &mut Vec<(Trajectory, f64)>,
    ) {
        for action in 0..mdp.num_actions() {
            let pa = policy.prob(state, action);
            if pa == 0.0 {
                continue;
            }
            let reward = mdp.reward(state, action);
            for (r, pr) in reward.support.iter().zip(&reward.probs) {
                if *pr == 0.0 {
                    continue;
                }
                let mut step = Step::new(state, action, *r);
                step.propensity = Some(pa);
                prefix.push(step);
                let p = prob * pa * pr;
                if prefix.len() == mdp.horizon() + 1 {
                    out.push((Trajectory::new(prefix.clone()), p));
                } else {
                    for (next, pn) in mdp.transitions().row(state, action).iter().enumerate() {
                        if *pn > 0.0 {
                            rec(mdp, policy, next, prefix, p * pn, out);
                        }
                    }
                }
                prefix.pop();
            }
        }
    }
    let mut out = Vec::new();
    for (s, p) in mdp.initial_dist().iter().enumerate() {
        if *p > 0.0 {
            rec(mdp, policy, s, &mut Vec::new(), *p, &mut out);
        }
    }
    out
}

/// `E_pi[sum_t gamma^t R_t]` by enumeration.
pub fn brute_value(mdp: &TabularMdp, policy: &Policy) -> f64 {
    enumerate(mdp, policy)
        .iter()
        .map(|(t, p)| {
            let mut w = 1.0;
            let mut g = 0.0;
            for s in &t.steps {
                g += w * s.reward;
                w *= mdp.discount();
            }
            p * g
        })
        .sum()
}

/// Standard normal by Box-Muller, independent of any distribution crate.
pub fn box_muller(rng: &mut impl Rng) -> f64 {
    let u1: f64 = 1.0 - rng.random::<f64>();
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

pub fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
}

/// A 3-state, 2-action, horizon-2 chain with Bernoulli rewards.
pub fn chain_mdp() -> TabularMdp {
    TabularMdp::from_json(
        r#"{
        "num_states": 3, "num_actions": 2, "horizon": 2, "discount": 0.9,
        "initial_dist": [0.5, 0.3, 0.2],
        "transitions": [
            [[0.7, 0.2, 0.1], [0.1, 0.6, 0.3]],
            [[0.3, 0.4, 0.3], [0.2, 0.2, 0.6]],
            [[0.5, 0.25, 0.25], [0.1, 0.1, 0.8]]
        ],
        "rewards": [
            [{"support": [0, 1], "probs": [0.8, 0.2]}, {"support": [0, 1], "probs": [0.4, 0.6]}],
            [{"support": [0, 1], "probs": [0.5, 0.5]}, {"support": [0, 1], "probs": [0.9, 0.1]}],
            [{"support": [0, 1], "probs": [0.3, 0.7]}, {"support": [0, 1], "probs": [0.6, 0.4]}]
        ]
    }"#,
    )
    .unwrap()
}

/// A horizon-0 problem with 3 contexts, 3 actions, and three-point rewards.
pub fn bandit_mdp() -> TabularMdp {
    TabularMdp::from_json(
        r#"{
        "num_states": 3, "num_actions": 3, "horizon": 0, "discount": 1.0,
        "initial_dist": [0.5, 0.3, 0.2],
        "transitions": [
            [[1, 0, 0], [1, 0, 0], [1, 0, 0]],
            [[0, 1, 0], [0, 1, 0], [0, 1, 0]],
            [[0, 0, 1], [0, 0, 1], [0, 0, 1]]
        ],
        "rewards": [
            [{"support": [0, 1, 3], "probs": [0.5, 0.3, 0.2]},
             {"support": [0, 1, 3], "probs": [0.2, 0.6, 0.2]},
             {"support": [0, 1, 3], "probs": [0.7, 0.1, 0.2]}],
            [{"support": [0, 1, 3], "probs": [0.1, 0.8, 0.1]},
             {"support": [0, 1, 3], "probs": [0.4, 0.4, 0.2]},
             {"support": [0, 1, 3], "probs": [0.3, 0.3, 0.4]}],
            [{"support": [0, 1, 3], "probs": [0.6, 0.2, 0.2]},
             {"support": [0, 1, 3], "probs": [0.2, 0.2, 0.6]},
             {"support": [0, 1, 3], "probs": [0.5, 0.5, 0.0]}]
        ]
    }"#,
    )
    .unwrap()
}
