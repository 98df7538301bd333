//! Monte Carlo studies, the relative-RMSE metric, dataset files, and reports.

pub mod config;
pub mod ingest;
pub mod metric;
pub mod mse;
pub mod report;
pub mod scenario;

pub use config::{ExperimentConfig, MdpSource, NuisanceSettings, PolicySpec, ResolvedExperiment};
pub use ingest::{ingest_jsonl, parse_jsonl, write_jsonl, LabelMaps};
pub use metric::{relative_rmse, relative_rmse_se, CampaignBatchCell, DEFAULT_SE_SIMS};
pub use mse::{run_mse_experiment, EstimatorMse, GroundTruthProvenance, MseReport};
pub use report::{reports_to_csv, EstimatorReport};
