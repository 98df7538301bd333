//! JSON configuration for simulations and Monte Carlo studies.
//!
//! ```json
//! {
//!   "mdp": {"noisy_product": {"base": {"file": "chain.json"}, "noise_states": 4, "noise_stay": 0.5}},
//!   "behavior_policy": {"kind": "epsilon_greedy", "epsilon": 0.3, "scores": "optimal_q"},
//!   "evaluation_policy": {"kind": "greedy", "scores": "optimal_q"},
//!   "n_trajectories": 500,
//!   "replications": 200,
//!   "estimators": ["DML", "DR_HALF", "DR_FULL", "IPW", "DM"],
//!   "k_folds": 2,
//!   "seed": 1,
//!   "nuisance": {"smoothing_alpha": 0.5, "behavior_policy": "known", "fit_fraction": 0.5}
//! }
//! ```
//!
//! Relative `file` paths resolve against the directory of the config file.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scenario::{noisy_product, RandomMdpSpec};
use crate::error::{OpeError, Result};
use crate::estimators::{EstimatorConfig, EstimatorKind, WeightOptions, DEFAULT_LEVEL};
use crate::mdp::{mean_reward_table, optimal_q0, reward_variance_table, Policy, TabularMdp};
use crate::nuisance::{BehaviorModel, NuisanceConfig, QModel, DEFAULT_SMOOTHING_ALPHA};
use crate::policies::{
    epsilon_greedy_policy, greedy_policy, softmax_policy, thompson_gaussian_policy,
    DEFAULT_THOMPSON_DRAWS,
};
use crate::table::SaTable;

// ── MDP sources ─────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MdpSource {
    File(PathBuf),
    Inline(TabularMdp),
    Random(RandomMdpSpec),
    NoisyProduct {
        base: Box<MdpSource>,
        noise_states: usize,
        #[serde(default)]
        noise_stay: f64,
    },
}

impl MdpSource {
    pub fn load(&self, base_dir: &Path) -> Result<TabularMdp> {
        match self {
            MdpSource::File(p) => TabularMdp::from_path(base_dir.join(p)),
            MdpSource::Inline(mdp) => Ok(mdp.clone()),
            MdpSource::Random(spec) => spec.build(),
            MdpSource::NoisyProduct {
                base,
                noise_states,
                noise_stay,
            } => noisy_product(&base.load(base_dir)?, *noise_states, *noise_stay),
        }
    }
}

// ── Policies ────────────────────────────────────────────────────────────

/// Where per-pair scores for a policy family come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ScoreSource {
    /// Expected immediate reward `mu(s, a)`.
    MeanReward,
    /// Reward variance of each pair.
    RewardVariance,
    /// Optimal first-step action values.
    OptimalQ,
    /// One score per action, shared by every state.
    PerAction(Vec<f64>),
    Table(SaTable),
}

impl ScoreSource {
    fn resolve(&self, mdp: Option<&TabularMdp>, field: &str) -> Result<SaTable> {
        let needs_mdp = || {
            OpeError::invalid(
                field,
                "score source derived from the MDP, but no MDP is configured",
            )
        };
        match self {
            ScoreSource::MeanReward => mdp.map(mean_reward_table).ok_or_else(needs_mdp),
            ScoreSource::RewardVariance => mdp.map(reward_variance_table).ok_or_else(needs_mdp),
            ScoreSource::OptimalQ => mdp.map(optimal_q0).ok_or_else(needs_mdp),
            ScoreSource::PerAction(v) => {
                let ns = mdp.map(TabularMdp::num_states).ok_or_else(needs_mdp)?;
                Ok(SaTable::from_fn(ns, v.len(), |_, a| v[a]))
            }
            ScoreSource::Table(t) => Ok(t.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PolicySpec {
    Table {
        table: SaTable,
    },
    Uniform,
    EpsilonGreedy {
        epsilon: f64,
        scores: ScoreSource,
    },
    Softmax {
        scores: ScoreSource,
    },
    Greedy {
        scores: ScoreSource,
    },
    Thompson {
        means: ScoreSource,
        variances: ScoreSource,
        #[serde(default = "default_draws")]
        draws: usize,
        #[serde(default)]
        seed: u64,
    },
}

fn default_draws() -> usize {
    DEFAULT_THOMPSON_DRAWS
}

impl PolicySpec {
    /// Builds the policy. `dims` is used only by `uniform`.
    pub fn build(
        &self,
        mdp: Option<&TabularMdp>,
        dims: (usize, usize),
        field: &str,
    ) -> Result<Policy> {
        let policy = match self {
            PolicySpec::Table { table } => Policy::new(table.clone())?,
            PolicySpec::Uniform => Policy::uniform(dims.0, dims.1),
            PolicySpec::EpsilonGreedy { epsilon, scores } => {
                epsilon_greedy_policy(&scores.resolve(mdp, field)?, *epsilon)?
            }
            PolicySpec::Softmax { scores } => softmax_policy(&scores.resolve(mdp, field)?)?,
            PolicySpec::Greedy { scores } => greedy_policy(&scores.resolve(mdp, field)?)?,
            PolicySpec::Thompson {
                means,
                variances,
                draws,
                seed,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                thompson_gaussian_policy(
                    &means.resolve(mdp, field)?,
                    &variances.resolve(mdp, field)?,
                    *draws,
                    &mut rng,
                )?
            }
        };
        if (policy.num_states(), policy.num_actions()) != dims {
            return Err(OpeError::DimensionMismatch(format!(
                "{field} is {}x{}, expected {}x{}",
                policy.num_states(),
                policy.num_actions(),
                dims.0,
                dims.1
            )));
        }
        Ok(policy)
    }

    /// Dimensions implied by the spec itself, if any.
    pub fn dims(&self) -> Option<(usize, usize)> {
        let table = match self {
            PolicySpec::Table { table } => table,
            PolicySpec::EpsilonGreedy {
                scores: ScoreSource::Table(t),
                ..
            }
            | PolicySpec::Softmax {
                scores: ScoreSource::Table(t),
            }
            | PolicySpec::Greedy {
                scores: ScoreSource::Table(t),
            }
            | PolicySpec::Thompson {
                means: ScoreSource::Table(t),
                ..
            } => t,
            _ => return None,
        };
        Some((table.num_states(), table.num_actions()))
    }
}

// ── Nuisance block ──────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorSource {
    Known,
    #[default]
    Estimated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QModelSpec {
    #[default]
    Tabular,
    Zero,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NuisanceSettings {
    #[serde(default)]
    pub k_folds: Option<usize>,
    #[serde(default = "default_alpha")]
    pub smoothing_alpha: f64,
    #[serde(default)]
    pub behavior_policy: BehaviorSource,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_fraction")]
    pub fit_fraction: f64,
    #[serde(default)]
    pub q_model: QModelSpec,
}

fn default_alpha() -> f64 {
    DEFAULT_SMOOTHING_ALPHA
}

fn default_fraction() -> f64 {
    1.0
}

impl Default for NuisanceSettings {
    fn default() -> Self {
        Self {
            k_folds: None,
            smoothing_alpha: DEFAULT_SMOOTHING_ALPHA,
            behavior_policy: BehaviorSource::Estimated,
            seed: None,
            fit_fraction: 1.0,
            q_model: QModelSpec::Tabular,
        }
    }
}

impl NuisanceSettings {
    /// `known` needs the behavior policy table; pass it whenever one is configured.
    pub fn to_config(&self, known: Option<&Policy>) -> Result<NuisanceConfig> {
        let behavior = match self.behavior_policy {
            BehaviorSource::Estimated => BehaviorModel::Estimated,
            BehaviorSource::Known => BehaviorModel::Known(known.cloned().ok_or_else(|| {
                OpeError::invalid(
                    "nuisance.behavior_policy",
                    "\"known\" requires a configured behavior_policy",
                )
            })?),
        };
        let config = NuisanceConfig {
            smoothing_alpha: self.smoothing_alpha,
            behavior,
            q_model: match self.q_model {
                QModelSpec::Tabular => QModel::Tabular,
                QModelSpec::Zero => QModel::Zero,
            },
            fit_fraction: self.fit_fraction,
            oracle: None,
        };
        config.validate()?;
        Ok(config)
    }
}

// ── Ground truth ────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GroundTruthSpec {
    #[default]
    DpExact,
    OnPolicyRollout {
        rollouts: usize,
        seed: u64,
    },
}

// ── Experiment ──────────────────────────────────────────────────────────

fn default_replications() -> usize {
    100
}

fn default_folds() -> usize {
    2
}

fn default_level() -> f64 {
    DEFAULT_LEVEL
}

fn default_estimators() -> Vec<EstimatorKind> {
    EstimatorKind::ALL.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mdp: MdpSource,
    pub behavior_policy: PolicySpec,
    pub evaluation_policy: PolicySpec,
    pub n_trajectories: usize,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorKind>,
    #[serde(default = "default_folds")]
    pub k_folds: usize,
    #[serde(default)]
    pub seed: u64,
    /// Overrides the MDP's own discount.
    #[serde(default)]
    pub discount: Option<f64>,
    #[serde(default)]
    pub nuisance: NuisanceSettings,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub ground_truth: GroundTruthSpec,
    #[serde(default)]
    pub weight_clip: Option<f64>,
    #[serde(default)]
    pub self_normalize: bool,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

/// A config with its MDP and policies materialized.
#[derive(Debug, Clone)]
pub struct ResolvedExperiment {
    pub mdp: TabularMdp,
    pub behavior: Policy,
    pub evaluation: Policy,
    pub n_trajectories: usize,
    pub replications: usize,
    pub estimators: Vec<EstimatorKind>,
    pub seed: u64,
    pub ground_truth: GroundTruthSpec,
    pub estimator_config: EstimatorConfig,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| OpeError::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications < 1 {
            return Err(OpeError::invalid("replications", "must be at least 1"));
        }
        if self.k_folds < 2 {
            return Err(OpeError::FoldCount {
                k: self.k_folds,
                n: self.n_trajectories,
            });
        }
        if self.n_trajectories < self.k_folds {
            return Err(OpeError::invalid(
                "n_trajectories",
                format!(
                    "{} is smaller than k_folds = {}",
                    self.n_trajectories, self.k_folds
                ),
            ));
        }
        if self.nuisance.k_folds.is_some_and(|k| k != self.k_folds) {
            return Err(OpeError::invalid(
                "nuisance.k_folds",
                "conflicts with the top-level k_folds",
            ));
        }
        if self.nuisance.seed.is_some_and(|s| s != self.seed) {
            return Err(OpeError::invalid(
                "nuisance.seed",
                "conflicts with the top-level seed",
            ));
        }
        if self.estimators.is_empty() {
            return Err(OpeError::invalid("estimators", "list is empty"));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(OpeError::invalid("level", "must lie in (0, 1)"));
        }
        if let Some(c) = self.weight_clip {
            if c.is_nan() || c <= 0.0 {
                return Err(OpeError::invalid("weight_clip", "must be positive"));
            }
        }
        if let GroundTruthSpec::OnPolicyRollout { rollouts: 0, .. } = self.ground_truth {
            return Err(OpeError::invalid(
                "ground_truth.rollouts",
                "must be positive",
            ));
        }
        Ok(())
    }

    pub fn resolve(&self, base_dir: &Path) -> Result<ResolvedExperiment> {
        self.validate()?;
        let mut mdp = self.mdp.load(base_dir)?;
        if let Some(g) = self.discount {
            mdp = mdp.with_discount(g)?;
        }
        let dims = (mdp.num_states(), mdp.num_actions());
        let behavior = self
            .behavior_policy
            .build(Some(&mdp), dims, "behavior_policy")?;
        let evaluation = self
            .evaluation_policy
            .build(Some(&mdp), dims, "evaluation_policy")?;
        let estimator_config = EstimatorConfig {
            k_folds: self.k_folds,
            level: self.level,
            nuisance: self.nuisance.to_config(Some(&behavior))?,
            weights: WeightOptions {
                clip: self.weight_clip,
            },
            self_normalize: self.self_normalize,
        };
        let mut estimators: Vec<EstimatorKind> = Vec::with_capacity(self.estimators.len());
        for k in &self.estimators {
            if !estimators.contains(k) {
                estimators.push(*k);
            }
        }
        Ok(ResolvedExperiment {
            mdp,
            behavior,
            evaluation,
            n_trajectories: self.n_trajectories,
            replications: self.replications,
            estimators,
            seed: self.seed,
            ground_truth: self.ground_truth,
            estimator_config,
        })
    }
}
