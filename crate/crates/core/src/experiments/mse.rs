//! Monte Carlo MSE studies.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::config::{GroundTruthSpec, ResolvedExperiment};
use crate::error::Result;
use crate::estimators::{estimate, EstimatorKind, ValueEstimate};
use crate::mdp::exact_policy_value;
use crate::trajectory::{sample_dataset, sample_trajectory};

pub const THREADS_ENV: &str = "OPE_DML_THREADS";

/// Independent stream for `(seed, index, purpose)`.
///
/// The three words are written into the ChaCha key, so streams for different replications or
/// purposes never overlap and do not depend on the order in which they are requested.
pub fn derived_rng(seed: u64, index: u64, purpose: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&index.to_le_bytes());
    key[16..24].copy_from_slice(&purpose.to_le_bytes());
    key[24..].copy_from_slice(b"ope-dml\0");
    ChaCha8Rng::from_seed(key)
}

const DATA_PURPOSE: u64 = 0;

/// Purpose tag of an estimator's splitting stream.
pub fn estimator_purpose(kind: EstimatorKind) -> u64 {
    1 + EstimatorKind::ALL
        .iter()
        .position(|k| *k == kind)
        .unwrap_or(0) as u64
}

/// Maps `f` over `0..n`, in parallel when the `parallel` feature is on, preserving index order.
pub fn run_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        let threads = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .filter(|&t| t > 0);
        let work = || (0..n).into_par_iter().map(&f).collect::<Vec<T>>();
        match threads.and_then(|t| rayon::ThreadPoolBuilder::new().num_threads(t).build().ok()) {
            Some(pool) => pool.install(work),
            None => work(),
        }
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum GroundTruthProvenance {
    #[serde(rename = "DP_EXACT")]
    DpExact,
    #[serde(rename = "ON_POLICY_ROLLOUT")]
    OnPolicyRollout,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorMse {
    pub estimator: EstimatorKind,
    pub mse: f64,
    /// Standard error of the MSE over replications; absent with a single replication.
    pub se_of_mse: Option<f64>,
    pub bias: f64,
    /// Spread of the estimates around their mean, with divisor `R`, so `mse = bias^2 + variance`.
    pub variance: f64,
    pub mean_estimate: f64,
    /// Share of replications whose interval covers the ground truth.
    pub coverage: f64,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MseReport {
    pub ground_truth: f64,
    pub ground_truth_provenance: GroundTruthProvenance,
    pub n_trajectories: usize,
    pub replications: usize,
    pub k_folds: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorMse>,
    pub deviations: Vec<String>,
}

impl MseReport {
    pub fn get(&self, kind: EstimatorKind) -> Option<&EstimatorMse> {
        self.estimators.iter().find(|e| e.estimator == kind)
    }
}

pub fn ground_truth(exp: &ResolvedExperiment) -> Result<(f64, GroundTruthProvenance)> {
    match exp.ground_truth {
        GroundTruthSpec::DpExact => Ok((
            exact_policy_value(&exp.mdp, &exp.evaluation)?,
            GroundTruthProvenance::DpExact,
        )),
        GroundTruthSpec::OnPolicyRollout { rollouts, seed } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = exp.mdp.discount();
            let mut total = 0.0;
            for _ in 0..rollouts {
                total +=
                    sample_trajectory(&exp.mdp, &exp.evaluation, &mut rng)?.discounted_return(g);
            }
            Ok((
                total / rollouts as f64,
                GroundTruthProvenance::OnPolicyRollout,
            ))
        }
    }
}

/// Estimates of every configured estimator on replication `rep`, in configured order.
pub fn run_replication(exp: &ResolvedExperiment, rep: usize) -> Result<Vec<ValueEstimate>> {
    let mut data_rng = derived_rng(exp.seed, rep as u64, DATA_PURPOSE);
    let data = sample_dataset(&exp.mdp, &exp.behavior, exp.n_trajectories, &mut data_rng)?;
    exp.estimators
        .iter()
        .map(|&kind| {
            let mut rng = derived_rng(exp.seed, rep as u64, estimator_purpose(kind));
            estimate(
                kind,
                &data,
                &exp.evaluation,
                exp.mdp.discount(),
                &exp.estimator_config,
                &mut rng,
            )
        })
        .collect()
}

/// All replications; entry `r` holds the estimates of replication `r`.
pub fn run_replications(exp: &ResolvedExperiment) -> Result<Vec<Vec<ValueEstimate>>> {
    run_indexed(exp.replications, |rep| run_replication(exp, rep))
        .into_iter()
        .collect()
}

/// Aggregates estimates of one estimator against the truth.
pub fn summarize(kind: EstimatorKind, estimates: &[ValueEstimate], truth: f64) -> EstimatorMse {
    let r = estimates.len() as f64;
    let sq: Vec<f64> = estimates
        .iter()
        .map(|e| (e.value - truth) * (e.value - truth))
        .collect();
    let mse = sq.iter().sum::<f64>() / r;
    let mean_estimate = estimates.iter().map(|e| e.value).sum::<f64>() / r;
    let variance = estimates
        .iter()
        .map(|e| (e.value - mean_estimate) * (e.value - mean_estimate))
        .sum::<f64>()
        / r;
    let se_of_mse = (estimates.len() > 1).then(|| {
        let ss = sq.iter().map(|v| (v - mse) * (v - mse)).sum::<f64>();
        (ss / (r - 1.0)).sqrt() / r.sqrt()
    });
    EstimatorMse {
        estimator: kind,
        mse,
        se_of_mse,
        bias: mean_estimate - truth,
        variance,
        mean_estimate,
        coverage: estimates.iter().filter(|e| e.covers(truth)).count() as f64 / r,
        replications: estimates.len(),
    }
}

pub fn run_mse_experiment(exp: &ResolvedExperiment) -> Result<MseReport> {
    let (truth, provenance) = ground_truth(exp)?;
    let runs = run_replications(exp)?;
    let estimators = exp
        .estimators
        .iter()
        .enumerate()
        .map(|(j, &kind)| {
            let column: Vec<ValueEstimate> = runs.iter().map(|row| row[j].clone()).collect();
            summarize(kind, &column, truth)
        })
        .collect();
    Ok(MseReport {
        ground_truth: truth,
        ground_truth_provenance: provenance,
        n_trajectories: exp.n_trajectories,
        replications: exp.replications,
        k_folds: exp.estimator_config.k_folds,
        seed: exp.seed,
        estimators,
        deviations: exp.estimator_config.deviations(),
    })
}
