use crate::error::{OpeError, Result};
use crate::mdp::{mean_reward_table, reward_variance_table, Policy, TabularMdp};
use crate::nuisance::check_support;

/// Asymptotic variance lower bound for single-step (contextual bandit) data:
///
/// `E_{S~P_S0}[ sum_a pi_e(a|S)^2 sigma_R^2(S,a) / pi_b(a|S) + (sum_a pi_e(a|S) mu(S,a) - V)^2 ]`.
pub fn cb_efficiency_bound(
    mdp: &TabularMdp,
    behavior: &Policy,
    eval_policy: &Policy,
) -> Result<f64> {
    if mdp.horizon() != 0 {
        return Err(OpeError::HorizonNotZero(mdp.horizon()));
    }
    behavior.check_dims(mdp)?;
    eval_policy.check_dims(mdp)?;
    check_support(behavior, eval_policy)?;
    let mu = mean_reward_table(mdp);
    let var = reward_variance_table(mdp);
    let state_values: Vec<f64> = (0..mdp.num_states())
        .map(|s| eval_policy.expect_row(s, &mu))
        .collect();
    let value: f64 = mdp
        .initial_dist()
        .iter()
        .zip(&state_values)
        .map(|(p, v)| p * v)
        .sum();
    let mut bound = 0.0;
    for (s, &p0) in mdp.initial_dist().iter().enumerate() {
        if p0 == 0.0 {
            continue;
        }
        let noise: f64 = (0..mdp.num_actions())
            .filter(|&a| eval_policy.prob(s, a) > 0.0)
            .map(|a| {
                let e = eval_policy.prob(s, a);
                e * e * var[(s, a)] / behavior.prob(s, a)
            })
            .sum();
        let spread = state_values[s] - value;
        bound += p0 * (noise + spread * spread);
    }
    Ok(bound)
}
