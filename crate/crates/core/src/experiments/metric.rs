//! Impression-weighted relative RMSE over campaign/batch cells and its simulated standard error.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{OpeError, Result};

pub const DEFAULT_SE_SIMS: usize = 100_000;

/// One (campaign, batch) comparison between an off-policy estimate and the observed online value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CampaignBatchCell {
    pub campaign: String,
    pub batch: String,
    /// Off-policy estimate `V_hat`.
    pub estimate: f64,
    /// Observed online value `V_bar`.
    pub actual: f64,
    pub n_impressions: u64,
    #[serde(default)]
    pub ope_variance: Option<f64>,
    #[serde(default)]
    pub n_ope: Option<u64>,
    /// Per-impression variance of the online outcome. Defaults to `V_bar (1 - V_bar)` for binary rewards.
    #[serde(default)]
    pub online_variance: Option<f64>,
    #[serde(default)]
    pub binary_reward: bool,
}

impl CampaignBatchCell {
    pub fn new(
        campaign: impl Into<String>,
        batch: impl Into<String>,
        estimate: f64,
        actual: f64,
        n_impressions: u64,
    ) -> Self {
        Self {
            campaign: campaign.into(),
            batch: batch.into(),
            estimate,
            actual,
            n_impressions,
            ope_variance: None,
            n_ope: None,
            online_variance: None,
            binary_reward: false,
        }
    }

    fn online_variance(&self, index: usize) -> Result<f64> {
        match self.online_variance {
            Some(v) => Ok(v),
            None if self.binary_reward => Ok(self.actual * (1.0 - self.actual)),
            None => Err(OpeError::MissingVariance {
                index,
                field: "online_variance",
            }),
        }
    }
}

fn check_cells(cells: &[CampaignBatchCell]) -> Result<()> {
    if cells.is_empty() {
        return Err(OpeError::EmptyDataset);
    }
    for (i, c) in cells.iter().enumerate() {
        if c.n_impressions == 0 {
            return Err(OpeError::invalid(
                format!("cells[{i}].n_impressions"),
                "must be positive",
            ));
        }
        if c.actual == 0.0 {
            return Err(OpeError::ZeroActualValue { index: i });
        }
        if !c.estimate.is_finite() || !c.actual.is_finite() {
            return Err(OpeError::invalid(format!("cells[{i}]"), "non-finite value"));
        }
    }
    Ok(())
}

fn weighted_relative_rmse(pairs: impl Iterator<Item = (f64, f64, f64)>) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (estimate, actual, n) in pairs {
        let rel = (estimate - actual) / actual;
        num += n * rel * rel;
        den += n;
    }
    (num / den).sqrt()
}

/// `sqrt( sum N ((V_hat - V_bar) / V_bar)^2 / sum N )`.
pub fn relative_rmse(cells: &[CampaignBatchCell]) -> Result<f64> {
    check_cells(cells)?;
    Ok(weighted_relative_rmse(
        cells
            .iter()
            .map(|c| (c.estimate, c.actual, c.n_impressions as f64)),
    ))
}

/// Standard deviation of the relative RMSE under simulated redraws of every cell.
///
/// Each simulation draws `V_hat' ~ N(V_hat, ope_variance / n_ope)` and
/// `V_bar' ~ N(V_hat, online_variance / n_impressions)` independently per cell, both centered at
/// the estimate, and recomputes the metric. The result uses the `n - 1` divisor.
pub fn relative_rmse_se<R: Rng + ?Sized>(
    cells: &[CampaignBatchCell],
    sims: usize,
    rng: &mut R,
) -> Result<f64> {
    check_cells(cells)?;
    if sims < 2 {
        return Err(OpeError::invalid("sims", "need at least 2 simulations"));
    }
    let mut draws = Vec::with_capacity(cells.len());
    for (i, c) in cells.iter().enumerate() {
        let ope_var = c.ope_variance.ok_or(OpeError::MissingVariance {
            index: i,
            field: "ope_variance",
        })?;
        let n_ope = c.n_ope.ok_or(OpeError::MissingVariance {
            index: i,
            field: "n_ope",
        })?;
        if n_ope == 0 {
            return Err(OpeError::invalid(
                format!("cells[{i}].n_ope"),
                "must be positive",
            ));
        }
        let online_var = c.online_variance(i)?;
        let sd_ope = (ope_var / n_ope as f64).sqrt();
        let sd_online = (online_var / c.n_impressions as f64).sqrt();
        let est = Normal::new(c.estimate, sd_ope)
            .map_err(|e| OpeError::invalid(format!("cells[{i}].ope_variance"), e.to_string()))?;
        let act = Normal::new(c.estimate, sd_online)
            .map_err(|e| OpeError::invalid(format!("cells[{i}].online_variance"), e.to_string()))?;
        draws.push((est, act, c.n_impressions as f64));
    }
    // Welford accumulation; constant draws give exactly zero spread
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for k in 1..=sims {
        let v = weighted_relative_rmse(
            draws
                .iter()
                .map(|(est, act, n)| (est.sample(rng), act.sample(rng), *n)),
        );
        let delta = v - mean;
        mean += delta / k as f64;
        m2 += delta * (v - mean);
    }
    Ok((m2 / (sims as f64 - 1.0)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_prediction_is_zero() {
        let cells = vec![
            CampaignBatchCell::new("c", "1", 0.3, 0.3, 10),
            CampaignBatchCell::new("c", "2", 0.7, 0.7, 5),
        ];
        assert_eq!(relative_rmse(&cells).unwrap(), 0.0);
    }

    #[test]
    fn zero_actual_and_missing_variance_error() {
        let cells = vec![CampaignBatchCell::new("c", "1", 0.3, 0.0, 10)];
        assert!(matches!(
            relative_rmse(&cells),
            Err(OpeError::ZeroActualValue { index: 0 })
        ));
        let cells = vec![CampaignBatchCell::new("c", "1", 0.3, 0.2, 10)];
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            relative_rmse_se(&cells, 10, &mut rng),
            Err(OpeError::MissingVariance {
                field: "ope_variance",
                ..
            })
        ));
    }

    #[test]
    fn degenerate_variances_give_zero_se() {
        let mut cell = CampaignBatchCell::new("c", "1", 1.2, 1.0, 10);
        cell.ope_variance = Some(0.0);
        cell.n_ope = Some(10);
        cell.online_variance = Some(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(relative_rmse_se(&[cell], 100, &mut rng).unwrap(), 0.0);
    }
}
