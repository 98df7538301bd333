//! Cross-fitted doubly robust off-policy evaluation for finite-horizon tabular decision
//! problems, with exact enumeration oracles for small instances.
//!
//! The crate is organised bottom-up:
//!
//! - [`mdp`], [`trajectory`], [`enumerate`]: the data-generating process, sampling, and exact
//!   expectations over every possible trajectory.
//! - [`policies`]: epsilon-greedy, softmax, greedy and Gaussian Thompson policies.
//! - [`nuisance`]: fold partitions, tabular behavior/reward/transition models, Q recursion.
//! - [`estimators`]: DM, IPW, DR-full, DR-half and the cross-fitted DML estimator, plus the
//!   contextual-bandit efficiency bound and the numerical orthogonality check.
//! - [`experiments`]: Monte Carlo MSE studies, the relative-RMSE metric, JSONL ingestion, and
//!   report formats used by the `ope-dml` CLI.

pub mod cli;
pub mod enumerate;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod mdp;
pub mod nuisance;
pub mod policies;
pub mod table;
pub mod trajectory;

pub use error::{OpeError, Result};
pub use estimators::{EstimatorConfig, EstimatorKind, ValueEstimate};
pub use mdp::{Policy, RewardSpec, TabularMdp};
pub use nuisance::{NuisanceConfig, NuisanceEstimate};
pub use trajectory::{LoggedDataset, Step, Trajectory};
