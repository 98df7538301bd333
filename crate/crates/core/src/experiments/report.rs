//! Per-estimator reports emitted by `evaluate`.

use serde::Serialize;

use crate::error::{OpeError, Result};
use crate::estimators::{EstimatorKind, ValueEstimate};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorReport {
    pub estimator: EstimatorKind,
    pub value: f64,
    pub variance: f64,
    pub std_error: f64,
    pub ci: [f64; 2],
    pub level: f64,
    pub n: usize,
    /// Fold count, for the cross-fitted estimator only.
    pub k_folds: Option<usize>,
    pub seed: u64,
    pub config_echo: serde_json::Value,
}

impl EstimatorReport {
    pub fn new(
        estimate: &ValueEstimate,
        k_folds: usize,
        seed: u64,
        config_echo: serde_json::Value,
    ) -> Self {
        Self {
            estimator: estimate.estimator,
            value: estimate.value,
            variance: estimate.variance,
            std_error: estimate.std_error(),
            ci: [estimate.ci_low, estimate.ci_high],
            level: estimate.level,
            n: estimate.n,
            k_folds: (estimate.estimator == EstimatorKind::Dml).then_some(k_folds),
            seed,
            config_echo,
        }
    }
}

#[derive(Serialize)]
struct CsvRow<'a> {
    estimator: &'a str,
    value: f64,
    variance: f64,
    std_error: f64,
    ci_low: f64,
    ci_high: f64,
    level: f64,
    n: usize,
    k_folds: Option<usize>,
    seed: u64,
    config_echo: String,
}

/// CSV with the JSON fields flattened; `config_echo` is embedded as a JSON string.
pub fn reports_to_csv(reports: &[EstimatorReport]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for r in reports {
        writer
            .serialize(CsvRow {
                estimator: r.estimator.as_str(),
                value: r.value,
                variance: r.variance,
                std_error: r.std_error,
                ci_low: r.ci[0],
                ci_high: r.ci[1],
                level: r.level,
                n: r.n,
                k_folds: r.k_folds,
                seed: r.seed,
                config_echo: r.config_echo.to_string(),
            })
            .map_err(|e| OpeError::Config(e.to_string()))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| OpeError::Config(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| OpeError::Config(e.to_string()))
}
