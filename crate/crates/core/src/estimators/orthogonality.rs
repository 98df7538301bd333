//! Directional derivatives of the expected score with respect to the nuisances, computed
//! exactly by enumeration.

use serde::{Deserialize, Serialize};

use crate::enumerate::{enumerate_trajectories, expectation};
use crate::error::{OpeError, Result};
use crate::mdp::{Policy, TabularMdp};
use crate::nuisance::NuisanceEstimate;
use crate::trajectory::Trajectory;

use super::scores::{psi, psi_ipw};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreKind {
    #[serde(rename = "DML_PSI")]
    DmlPsi,
    #[serde(rename = "IPW_PSI")]
    IpwPsi,
}

fn perturbed(eta: &NuisanceEstimate, alt: &NuisanceEstimate, r: f64) -> NuisanceEstimate {
    NuisanceEstimate {
        behavior: eta.behavior.lerp(&alt.behavior, r),
        q: eta.q.lerp(&alt.q, r),
        mean_reward: eta.mean_reward.lerp(&alt.mean_reward, r),
        transitions: eta.transitions.clone(),
    }
}

fn expected_score(
    outcomes: &[(Trajectory, f64)],
    eta: &NuisanceEstimate,
    eval_policy: &Policy,
    discount: f64,
    score: ScoreKind,
) -> Result<f64> {
    expectation(outcomes, |h| match score {
        ScoreKind::DmlPsi => psi(h, eta, eval_policy, discount),
        ScoreKind::IpwPsi => psi_ipw(h, &eta.behavior, eval_policy, discount),
    })
}

fn check_true_behavior(eta_true: &NuisanceEstimate, mdp: &TabularMdp) -> Result<()> {
    eta_true.behavior.check_dims(mdp)?;
    if eta_true.q.horizon() != mdp.horizon() {
        return Err(OpeError::DimensionMismatch(format!(
            "q table spans {} steps, mdp has {}",
            eta_true.q.horizon() + 1,
            mdp.horizon() + 1
        )));
    }
    Ok(())
}

/// `g(r) = E_{H ~ pi_b}[score(H; eta + r (alt - eta))]` at each `r`, exactly.
///
/// Trajectories are enumerated under `eta_true.behavior`, which must be the true behavior policy.
pub fn score_expectation(
    mdp: &TabularMdp,
    eval_policy: &Policy,
    eta_true: &NuisanceEstimate,
    eta_alt: &NuisanceEstimate,
    score: ScoreKind,
    rs: &[f64],
) -> Result<Vec<f64>> {
    check_true_behavior(eta_true, mdp)?;
    let outcomes = enumerate_trajectories(mdp, &eta_true.behavior)?;
    rs.iter()
        .map(|&r| {
            let eta = perturbed(eta_true, eta_alt, r);
            expected_score(&outcomes, &eta, eval_policy, mdp.discount(), score)
        })
        .collect()
}

/// Central difference `(g(h) - g(-h)) / 2h` of the expected score along `eta_alt - eta_true`.
pub fn orthogonality_derivative(
    mdp: &TabularMdp,
    eval_policy: &Policy,
    eta_true: &NuisanceEstimate,
    eta_alt: &NuisanceEstimate,
    score: ScoreKind,
    step: f64,
) -> Result<f64> {
    if !(step > 0.0 && step.is_finite()) {
        return Err(OpeError::invalid("step", "must be positive and finite"));
    }
    let g = score_expectation(mdp, eval_policy, eta_true, eta_alt, score, &[step, -step])?;
    Ok((g[0] - g[1]) / (2.0 * step))
}
