//! Per-trajectory scores.

use crate::error::{OpeError, Result};
use crate::mdp::Policy;
use crate::nuisance::NuisanceEstimate;
use crate::table::SaTable;
use crate::trajectory::Trajectory;

/// Optional modifications to the raw importance weights. Both default to off.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WeightOptions {
    /// Caps every cumulative weight `rho_t` at this value.
    pub clip: Option<f64>,
}

impl WeightOptions {
    fn apply(&self, rho: f64) -> f64 {
        match self.clip {
            Some(c) => rho.min(c),
            None => rho,
        }
    }
}

fn ratio(traj: &Trajectory, t: usize, eval_policy: &Policy, behavior: &Policy) -> Result<f64> {
    let step = &traj.steps[t];
    let b = behavior.prob(step.state, step.action);
    if b <= 0.0 {
        return Err(OpeError::ZeroPropensity {
            step: t,
            state: step.state,
            action: step.action,
        });
    }
    Ok(eval_policy.prob(step.state, step.action) / b)
}

/// Cumulative weights `rho_t = prod_{t' <= t} pi_e(A_t'|S_t') / behavior(A_t'|S_t')`.
pub fn importance_weights(
    traj: &Trajectory,
    eval_policy: &Policy,
    behavior: &Policy,
) -> Result<Vec<f64>> {
    let mut rho = 1.0;
    (0..traj.len())
        .map(|t| {
            rho *= ratio(traj, t, eval_policy, behavior)?;
            Ok(rho)
        })
        .collect()
}

/// Doubly robust score
/// `sum_t gamma^t { rho_t (R_t - q_t(S_t,A_t)) + rho_{t-1} sum_a pi_e(a|S_t) q_t(S_t,a) }`, `rho_{-1} = 1`.
pub fn psi(
    traj: &Trajectory,
    eta: &NuisanceEstimate,
    eval_policy: &Policy,
    discount: f64,
) -> Result<f64> {
    psi_with(
        traj,
        &eta.behavior,
        eta,
        eval_policy,
        discount,
        WeightOptions::default(),
    )
}

pub(crate) fn psi_with(
    traj: &Trajectory,
    behavior: &Policy,
    eta: &NuisanceEstimate,
    eval_policy: &Policy,
    discount: f64,
    opts: WeightOptions,
) -> Result<f64> {
    let mut total = 0.0;
    let mut weight = 1.0;
    let mut rho_raw = 1.0;
    let mut prev = 1.0;
    for (t, step) in traj.steps.iter().enumerate() {
        rho_raw *= ratio(traj, t, eval_policy, behavior)?;
        let rho = opts.apply(rho_raw);
        let q = eta.q.step(t);
        let baseline = eval_policy.expect_row(step.state, q);
        total += weight * (rho * (step.reward - q[(step.state, step.action)]) + prev * baseline);
        prev = rho;
        weight *= discount;
    }
    Ok(total)
}

/// Importance-weighted return `sum_t gamma^t rho_t R_t`.
pub fn psi_ipw(
    traj: &Trajectory,
    behavior: &Policy,
    eval_policy: &Policy,
    discount: f64,
) -> Result<f64> {
    psi_ipw_with(
        traj,
        behavior,
        eval_policy,
        discount,
        WeightOptions::default(),
    )
}

pub(crate) fn psi_ipw_with(
    traj: &Trajectory,
    behavior: &Policy,
    eval_policy: &Policy,
    discount: f64,
    opts: WeightOptions,
) -> Result<f64> {
    let mut total = 0.0;
    let mut weight = 1.0;
    let mut rho_raw = 1.0;
    for (t, step) in traj.steps.iter().enumerate() {
        rho_raw *= ratio(traj, t, eval_policy, behavior)?;
        total += weight * (opts.apply(rho_raw) * step.reward);
        weight *= discount;
    }
    Ok(total)
}

/// Single-step doubly robust score
/// `pi_e(A|S)/pi_b(A|S) (R - mu(S,A)) + sum_a pi_e(a|S) mu(S,a)` for `T = 0` data.
pub fn contextual_bandit_score(
    traj: &Trajectory,
    behavior: &Policy,
    mean_reward: &SaTable,
    eval_policy: &Policy,
) -> Result<f64> {
    if traj.len() != 1 {
        return Err(OpeError::HorizonNotZero(traj.len().saturating_sub(1)));
    }
    let step = &traj.steps[0];
    let w = ratio(traj, 0, eval_policy, behavior)?;
    Ok(w * (step.reward - mean_reward[(step.state, step.action)])
        + eval_policy.expect_row(step.state, mean_reward))
}
