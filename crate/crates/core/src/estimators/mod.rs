//! Value estimators built on the per-trajectory scores.
//!
//! All five estimators report the mean of a per-trajectory score together with the plug-in
//! variance `(1/n) sum (score_i - mean)^2` and a normal confidence interval
//! `mean +- z_{(1+level)/2} sqrt(variance / n)`.
//!
//! | estimator | nuisances fit on           | scores averaged over |
//! |-----------|----------------------------|----------------------|
//! | DM        | all trajectories           | all (plug-in `q_0`)  |
//! | IPW       | all trajectories (`pi_b`)  | all                  |
//! | DR-full   | all trajectories           | all                  |
//! | DR-half   | shuffled second half       | first half           |
//! | DML       | complement of each fold    | all, fold by fold    |

mod bound;
mod orthogonality;
mod scores;

pub use bound::cb_efficiency_bound;
pub use orthogonality::{orthogonality_derivative, score_expectation, ScoreKind};
pub use scores::{contextual_bandit_score, importance_weights, psi, psi_ipw, WeightOptions};

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{OpeError, Result};
use crate::mdp::Policy;
use crate::nuisance::{
    check_support, estimate_behavior_policy, fit_nuisances, fit_on, make_folds, BehaviorModel,
    FoldPartition, NuisanceConfig, NuisanceEstimate,
};
use crate::trajectory::LoggedDataset;

pub const DEFAULT_LEVEL: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EstimatorKind {
    #[serde(rename = "DM")]
    Dm,
    #[serde(rename = "IPW")]
    Ipw,
    #[serde(rename = "DR_FULL")]
    DrFull,
    #[serde(rename = "DR_HALF")]
    DrHalf,
    #[serde(rename = "DML")]
    Dml,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 5] = [
        EstimatorKind::Dm,
        EstimatorKind::Ipw,
        EstimatorKind::DrFull,
        EstimatorKind::DrHalf,
        EstimatorKind::Dml,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Dm => "DM",
            EstimatorKind::Ipw => "IPW",
            EstimatorKind::DrFull => "DR_FULL",
            EstimatorKind::DrHalf => "DR_HALF",
            EstimatorKind::Dml => "DML",
        }
    }

    /// Whether the estimator consumes randomness (sample splitting).
    pub fn is_randomized(self) -> bool {
        matches!(self, EstimatorKind::DrHalf | EstimatorKind::Dml)
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorKind {
    type Err = OpeError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_uppercase().replace('-', "_");
        EstimatorKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| OpeError::Config(format!("unknown estimator '{s}'")))
    }
}

/// Point estimate, plug-in variance of the averaged scores, and normal interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueEstimate {
    pub estimator: EstimatorKind,
    pub value: f64,
    pub variance: f64,
    pub n: usize,
    pub ci_low: f64,
    pub ci_high: f64,
    pub level: f64,
}

pub fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

impl ValueEstimate {
    pub fn from_scores(estimator: EstimatorKind, scores: &[f64], level: f64) -> Result<Self> {
        if scores.is_empty() {
            return Err(OpeError::EmptyDataset);
        }
        if !(level > 0.0 && level < 1.0) {
            return Err(OpeError::invalid(
                "level",
                format!("{level} is outside (0, 1)"),
            ));
        }
        let n = scores.len();
        let value = scores.iter().sum::<f64>() / n as f64;
        let variance = scores
            .iter()
            .map(|s| (s - value) * (s - value))
            .sum::<f64>()
            / n as f64;
        let half = normal_quantile((1.0 + level) / 2.0) * (variance / n as f64).sqrt();
        Ok(Self {
            estimator,
            value,
            variance,
            n,
            ci_low: value - half,
            ci_high: value + half,
            level,
        })
    }

    pub fn std_error(&self) -> f64 {
        (self.variance / self.n as f64).sqrt()
    }

    pub fn covers(&self, truth: f64) -> bool {
        self.ci_low <= truth && truth <= self.ci_high
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig {
    pub k_folds: usize,
    pub level: f64,
    pub nuisance: NuisanceConfig,
    pub weights: WeightOptions,
    /// Per-step self-normalized weights for IPW. Off by default.
    pub self_normalize: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            k_folds: 2,
            level: DEFAULT_LEVEL,
            nuisance: NuisanceConfig::default(),
            weights: WeightOptions::default(),
            self_normalize: false,
        }
    }
}

impl EstimatorConfig {
    /// Names of enabled options that depart from raw importance weighting.
    pub fn deviations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Some(c) = self.weights.clip {
            out.push(format!("weight_clip={c}"));
        }
        if self.self_normalize {
            out.push("self_normalized_ipw".into());
        }
        out
    }
}

fn check_inputs(data: &LoggedDataset, eval_policy: &Policy, discount: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&discount) {
        return Err(OpeError::invalid(
            "discount",
            format!("{discount} is outside [0, 1]"),
        ));
    }
    data.check_dims(eval_policy.num_states(), eval_policy.num_actions())
}

// ── Baselines ───────────────────────────────────────────────────────────

/// Plug-in estimate `(1/N) sum_i sum_a pi_e(a|S_i0) q_0(S_i0, a)`.
pub fn dm_estimate(
    data: &LoggedDataset,
    eta: &NuisanceEstimate,
    eval_policy: &Policy,
    level: f64,
) -> Result<ValueEstimate> {
    let q0 = eta.q.step(0);
    let scores: Vec<f64> = data
        .trajectories()
        .iter()
        .map(|t| eval_policy.expect_row(t.steps[0].state, q0))
        .collect();
    ValueEstimate::from_scores(EstimatorKind::Dm, &scores, level)
}

pub fn ipw_estimate(
    data: &LoggedDataset,
    behavior: &Policy,
    eval_policy: &Policy,
    discount: f64,
    level: f64,
) -> Result<ValueEstimate> {
    ipw_estimate_with(
        data,
        behavior,
        eval_policy,
        discount,
        level,
        WeightOptions::default(),
    )
}

fn ipw_estimate_with(
    data: &LoggedDataset,
    behavior: &Policy,
    eval_policy: &Policy,
    discount: f64,
    level: f64,
    opts: WeightOptions,
) -> Result<ValueEstimate> {
    let scores = data
        .trajectories()
        .iter()
        .map(|t| scores::psi_ipw_with(t, behavior, eval_policy, discount, opts))
        .collect::<Result<Vec<_>>>()?;
    ValueEstimate::from_scores(EstimatorKind::Ipw, &scores, level)
}

/// Per-decision self-normalized IPW. Each trajectory contributes
/// `sum_t gamma^t [ (rho_it / mean_i rho_it) (R_it - m_t) + m_t ]` with `m_t` the weighted mean
/// reward at step `t`, so the scores average to `sum_t gamma^t m_t`.
fn self_normalized_ipw(
    data: &LoggedDataset,
    behavior: &Policy,
    eval_policy: &Policy,
    discount: f64,
    level: f64,
    opts: WeightOptions,
) -> Result<ValueEstimate> {
    let weights = data
        .trajectories()
        .iter()
        .map(|t| {
            importance_weights(t, eval_policy, behavior).map(|w| {
                w.into_iter()
                    .map(|r| opts.clip.map_or(r, |c| r.min(c)))
                    .collect()
            })
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let n = data.len() as f64;
    let steps = data.horizon() + 1;
    let mut mean_weight = vec![0.0; steps];
    let mut weighted_reward = vec![0.0; steps];
    for (traj, w) in data.trajectories().iter().zip(&weights) {
        for t in 0..steps {
            mean_weight[t] += w[t] / n;
            weighted_reward[t] += w[t] * traj.steps[t].reward / n;
        }
    }
    let m: Vec<f64> = (0..steps)
        .map(|t| {
            if mean_weight[t] > 0.0 {
                weighted_reward[t] / mean_weight[t]
            } else {
                0.0
            }
        })
        .collect();
    let scores: Vec<f64> = data
        .trajectories()
        .iter()
        .zip(&weights)
        .map(|(traj, w)| {
            let mut total = 0.0;
            let mut disc = 1.0;
            for t in 0..steps {
                if mean_weight[t] > 0.0 {
                    total += disc * (w[t] / mean_weight[t] * (traj.steps[t].reward - m[t]) + m[t]);
                }
                disc *= discount;
            }
            total
        })
        .collect();
    ValueEstimate::from_scores(EstimatorKind::Ipw, &scores, level)
}

fn scores_on(
    data: &LoggedDataset,
    indices: &[usize],
    eta: &NuisanceEstimate,
    eval_policy: &Policy,
    discount: f64,
    opts: WeightOptions,
) -> Result<Vec<f64>> {
    data.select(indices)
        .map(|t| scores::psi_with(t, &eta.behavior, eta, eval_policy, discount, opts))
        .collect()
}

/// Nuisances and scores on the same full sample.
pub fn dr_full_estimate(
    data: &LoggedDataset,
    eval_policy: &Policy,
    discount: f64,
    config: &EstimatorConfig,
) -> Result<ValueEstimate> {
    check_inputs(data, eval_policy, discount)?;
    let all: Vec<usize> = (0..data.len()).collect();
    let eta = fit_on(data, &all, eval_policy, &config.nuisance, discount)?;
    let scores = scores_on(data, &all, &eta, eval_policy, discount, config.weights)?;
    ValueEstimate::from_scores(EstimatorKind::DrFull, &scores, config.level)
}

/// Shuffles the indices, scores the first `ceil(N/2)` with nuisances fit on the rest.
pub fn dr_half_estimate<R: Rng + ?Sized>(
    data: &LoggedDataset,
    eval_policy: &Policy,
    discount: f64,
    rng: &mut R,
    config: &EstimatorConfig,
) -> Result<ValueEstimate> {
    check_inputs(data, eval_policy, discount)?;
    if data.len() < 2 {
        return Err(OpeError::invalid(
            "n_trajectories",
            "DR-half needs at least 2 trajectories",
        ));
    }
    let mut perm: Vec<usize> = (0..data.len()).collect();
    perm.shuffle(rng);
    let split = data.len().div_ceil(2);
    let (scored, fitting) = perm.split_at(split);
    let mut fitting = fitting.to_vec();
    fitting.sort_unstable();
    let eta = fit_on(data, &fitting, eval_policy, &config.nuisance, discount)?;
    let scores = scores_on(data, scored, &eta, eval_policy, discount, config.weights)?;
    ValueEstimate::from_scores(EstimatorKind::DrHalf, &scores, config.level)
}

/// Scores of every trajectory, in dataset order, each computed with the nuisances fit on the
/// complement of its own fold.
pub fn cross_fitted_scores(
    data: &LoggedDataset,
    partition: &FoldPartition,
    eval_policy: &Policy,
    discount: f64,
    config: &EstimatorConfig,
) -> Result<Vec<f64>> {
    let etas = fit_nuisances(data, partition, eval_policy, &config.nuisance, discount)?;
    let mut out = vec![0.0; data.len()];
    for (fold, eta) in partition.folds().iter().zip(&etas) {
        let s = scores_on(data, fold, eta, eval_policy, discount, config.weights)?;
        for (&i, v) in fold.iter().zip(s) {
            out[i] = v;
        }
    }
    Ok(out)
}

/// Cross-fitted doubly robust estimate with the pooled variance of the fold scores.
pub fn dml_estimate<R: Rng + ?Sized>(
    data: &LoggedDataset,
    eval_policy: &Policy,
    discount: f64,
    rng: &mut R,
    config: &EstimatorConfig,
) -> Result<ValueEstimate> {
    check_inputs(data, eval_policy, discount)?;
    let partition = make_folds(data.len(), config.k_folds, rng)?;
    let scores = cross_fitted_scores(data, &partition, eval_policy, discount, config)?;
    ValueEstimate::from_scores(EstimatorKind::Dml, &scores, config.level)
}

/// Runs any estimator. DM and IPW fit their nuisances on the whole sample.
pub fn estimate<R: Rng + ?Sized>(
    kind: EstimatorKind,
    data: &LoggedDataset,
    eval_policy: &Policy,
    discount: f64,
    config: &EstimatorConfig,
    rng: &mut R,
) -> Result<ValueEstimate> {
    check_inputs(data, eval_policy, discount)?;
    match kind {
        EstimatorKind::Dm => {
            let all: Vec<usize> = (0..data.len()).collect();
            let eta = fit_on(data, &all, eval_policy, &config.nuisance, discount)?;
            dm_estimate(data, &eta, eval_policy, config.level)
        }
        EstimatorKind::Ipw => {
            let behavior = full_sample_behavior(data, eval_policy, &config.nuisance)?;
            if config.self_normalize {
                self_normalized_ipw(
                    data,
                    &behavior,
                    eval_policy,
                    discount,
                    config.level,
                    config.weights,
                )
            } else {
                ipw_estimate_with(
                    data,
                    &behavior,
                    eval_policy,
                    discount,
                    config.level,
                    config.weights,
                )
            }
        }
        EstimatorKind::DrFull => dr_full_estimate(data, eval_policy, discount, config),
        EstimatorKind::DrHalf => dr_half_estimate(data, eval_policy, discount, rng, config),
        EstimatorKind::Dml => dml_estimate(data, eval_policy, discount, rng, config),
    }
}

fn full_sample_behavior(
    data: &LoggedDataset,
    eval_policy: &Policy,
    config: &NuisanceConfig,
) -> Result<Policy> {
    let behavior = if let Some(eta) = &config.oracle {
        eta.behavior.clone()
    } else {
        match &config.behavior {
            BehaviorModel::Known(p) => p.clone(),
            BehaviorModel::Estimated => estimate_behavior_policy(
                data.trajectories(),
                eval_policy.num_states(),
                eval_policy.num_actions(),
                config.smoothing_alpha,
            ),
        }
    };
    check_support(&behavior, eval_policy)?;
    Ok(behavior)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{Step, Trajectory};

    #[test]
    fn interval_half_width_matches_normal_quantile() {
        let scores = [1.0, 2.0, 4.0, 7.0];
        let v = ValueEstimate::from_scores(EstimatorKind::Dml, &scores, 0.95).unwrap();
        assert_eq!(v.value, 3.5);
        assert_eq!(v.variance, 5.25);
        let half = 1.959_963_984_540_054 * (5.25f64 / 4.0).sqrt();
        assert!((v.ci_high - v.value - half).abs() < 1e-12);
        assert!((v.value - v.ci_low - half).abs() < 1e-12);
        assert!(v.ci_low <= v.value && v.value <= v.ci_high);
    }

    #[test]
    fn estimator_names_parse() {
        assert_eq!("dml".parse::<EstimatorKind>().unwrap(), EstimatorKind::Dml);
        assert_eq!(
            "dr-half".parse::<EstimatorKind>().unwrap(),
            EstimatorKind::DrHalf
        );
        assert_eq!(
            "DR_FULL".parse::<EstimatorKind>().unwrap(),
            EstimatorKind::DrFull
        );
        assert!("magic".parse::<EstimatorKind>().is_err());
    }

    #[test]
    fn identical_trajectories_have_zero_variance() {
        let t = Trajectory::new(vec![Step::new(0, 0, 1.0), Step::new(0, 1, 0.5)]);
        let data = LoggedDataset::new(vec![t; 6]).unwrap();
        let pi = Policy::uniform(1, 2);
        let v = ipw_estimate(&data, &pi, &pi, 0.9, 0.95).unwrap();
        assert_eq!(v.variance, 0.0);
        assert_eq!(v.ci_low, v.ci_high);
    }
}
