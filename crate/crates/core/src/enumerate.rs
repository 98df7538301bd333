//! Exhaustive enumeration of trajectories for small MDPs.
//!
//! Every positive-probability outcome `(s_0, a_0, r_0, ..., s_T, a_T, r_T)` is listed with its
//! exact probability `P_S0(s_0) pi(a_0|s_0) P_R(r_0|s_0,a_0) prod_t P_S(s_t|..) pi(a_t|s_t) P_R(..)`.
//! Expectations computed from the list are exact up to floating-point summation and serve as
//! the reference for the estimator identities.

use crate::error::{OpeError, Result};
use crate::mdp::{Policy, TabularMdp};
use crate::trajectory::{Step, Trajectory};

pub const DEFAULT_ENUMERATION_CAP: u64 = 10_000_000;

/// Upper bound on the number of outcomes: `(|S| |A| max_support)^(T+1)`.
pub fn outcome_bound(mdp: &TabularMdp) -> f64 {
    let per_step = (mdp.num_states() * mdp.num_actions() * mdp.max_reward_support()) as f64;
    per_step.powi(mdp.horizon() as i32 + 1)
}

pub fn enumerate_trajectories(mdp: &TabularMdp, policy: &Policy) -> Result<Vec<(Trajectory, f64)>> {
    enumerate_trajectories_with_cap(mdp, policy, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_trajectories_with_cap(
    mdp: &TabularMdp,
    policy: &Policy,
    cap: u64,
) -> Result<Vec<(Trajectory, f64)>> {
    policy.check_dims(mdp)?;
    let needed = outcome_bound(mdp);
    if needed > cap as f64 {
        return Err(OpeError::EnumerationCap { needed, cap });
    }
    let mut out = Vec::new();
    let mut prefix = Vec::with_capacity(mdp.horizon() + 1);
    for (s0, &p0) in mdp.initial_dist().iter().enumerate() {
        if p0 > 0.0 {
            expand(mdp, policy, s0, p0, &mut prefix, &mut out);
        }
    }
    Ok(out)
}

fn expand(
    mdp: &TabularMdp,
    policy: &Policy,
    state: usize,
    prob: f64,
    prefix: &mut Vec<Step>,
    out: &mut Vec<(Trajectory, f64)>,
) {
    let t = prefix.len();
    for (action, &pa) in policy.row(state).iter().enumerate() {
        if pa <= 0.0 {
            continue;
        }
        let reward = mdp.reward(state, action);
        for (&r, &pr) in reward.support.iter().zip(&reward.probs) {
            if pr <= 0.0 {
                continue;
            }
            let p = prob * pa * pr;
            prefix.push(Step {
                state,
                action,
                reward: r,
                propensity: Some(pa),
            });
            if t == mdp.horizon() {
                out.push((Trajectory::new(prefix.clone()), p));
            } else {
                for (next, &ps) in mdp.transitions().row(state, action).iter().enumerate() {
                    if ps > 0.0 {
                        expand(mdp, policy, next, p * ps, prefix, out);
                    }
                }
            }
            prefix.pop();
        }
    }
}

/// Exact `E_{H ~ policy}[f(H)]` over the enumerated outcomes.
pub fn expectation(
    outcomes: &[(Trajectory, f64)],
    mut f: impl FnMut(&Trajectory) -> Result<f64>,
) -> Result<f64> {
    let mut total = 0.0;
    for (traj, p) in outcomes {
        total += p * f(traj)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::RewardSpec;
    use crate::table::TransitionTable;

    #[test]
    fn degenerate_chain_has_one_outcome() {
        let mdp = TabularMdp::new(
            0,
            1.0,
            vec![1.0],
            TransitionTable::uniform(1, 1),
            vec![RewardSpec::deterministic(2.0)],
        )
        .unwrap();
        let out = enumerate_trajectories(&mdp, &Policy::uniform(1, 1)).unwrap();
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].1, 1.0);
    }

    #[test]
    fn uniform_two_actions_two_steps() {
        let mdp = TabularMdp::new(
            1,
            1.0,
            vec![1.0],
            TransitionTable::uniform(1, 2),
            vec![RewardSpec::deterministic(1.0); 2],
        )
        .unwrap();
        let out = enumerate_trajectories(&mdp, &Policy::uniform(1, 2)).unwrap();
        assert_eq!(out.len(), 4);
        assert!(out.iter().all(|(_, p)| (*p - 0.25).abs() < 1e-15));
    }

    #[test]
    fn cap_is_enforced() {
        let mdp = TabularMdp::new(
            9,
            1.0,
            vec![0.5, 0.5],
            TransitionTable::uniform(2, 2),
            vec![RewardSpec::bernoulli(0.5); 4],
        )
        .unwrap();
        let err = enumerate_trajectories_with_cap(&mdp, &Policy::uniform(2, 2), 1000).unwrap_err();
        assert!(matches!(err, OpeError::EnumerationCap { .. }));
    }
}
