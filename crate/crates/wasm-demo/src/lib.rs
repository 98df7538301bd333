//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export takes and returns JSON strings so the page needs no generated glue beyond
//! `wasm-bindgen`'s own.

use debiased_ope::estimators::{score_expectation, ScoreKind};
use debiased_ope::experiments::mse::derived_rng;
use debiased_ope::experiments::scenario::{RandomMdpSpec, RewardKind};
use debiased_ope::experiments::{
    relative_rmse, relative_rmse_se, run_mse_experiment, CampaignBatchCell, ExperimentConfig,
};
use debiased_ope::mdp::{exact_policy_value, mean_reward_table};
use debiased_ope::policies::{epsilon_greedy_policy, QTable};
use debiased_ope::table::SaTable;
use debiased_ope::{NuisanceEstimate, OpeError, Policy};
use serde_json::json;
use std::path::Path;
use wasm_bindgen::prelude::*;

fn js_err(e: OpeError) -> JsValue {
    JsValue::from_str(&e.to_string())
}

// ── Core logic (plain Rust, testable natively) ──────────────────────────

/// Exact expected DML and IPW scores along a straight path from the true nuisances to a
/// misspecified tuple, on a small random MDP.
pub fn score_curve_json(mdp_seed: u64, horizon: usize, points: usize) -> Result<String, OpeError> {
    if points < 2 {
        return Err(OpeError::Invalid {
            path: "points".into(),
            detail: "need at least 2".into(),
        });
    }
    let mdp = RandomMdpSpec {
        num_states: 3,
        num_actions: 2,
        horizon,
        discount: 0.9,
        reward: RewardKind::Binary,
        seed: mdp_seed,
    }
    .build()?;
    let mu = mean_reward_table(&mdp);
    let behavior = epsilon_greedy_policy(&mu, 0.6)?;
    let eval = epsilon_greedy_policy(&mu, 0.1)?;
    let truth = exact_policy_value(&mdp, &eval)?;
    let eta = NuisanceEstimate::oracle(&mdp, &behavior, &eval)?;
    let alt = NuisanceEstimate {
        behavior: Policy::uniform(3, 2),
        q: QTable::zeros(horizon, 3, 2),
        mean_reward: SaTable::from_fn(3, 2, |_, _| 0.5),
        transitions: eta.transitions.clone(),
    };
    let rs: Vec<f64> = (0..points)
        .map(|i| i as f64 / (points - 1) as f64)
        .collect();
    let dml = score_expectation(&mdp, &eval, &eta, &alt, ScoreKind::DmlPsi, &rs)?;
    let ipw = score_expectation(&mdp, &eval, &eta, &alt, ScoreKind::IpwPsi, &rs)?;
    Ok(json!({ "truth": truth, "r": rs, "dml": dml, "ipw": ipw }).to_string())
}

/// Runs a Monte Carlo MSE comparison. File-backed MDP sources are unavailable in the browser.
pub fn mse_experiment_json(config: &str) -> Result<String, OpeError> {
    let exp = ExperimentConfig::from_json(config)?.resolve(Path::new(""))?;
    let report = run_mse_experiment(&exp)?;
    Ok(serde_json::to_string(&report)?)
}

pub fn relative_rmse_json(cells: &str, sims: usize, seed: u64) -> Result<String, OpeError> {
    let cells: Vec<CampaignBatchCell> =
        serde_json::from_str(cells).map_err(|e| OpeError::Config(e.to_string()))?;
    let value = relative_rmse(&cells)?;
    let se = relative_rmse_se(&cells, sims, &mut derived_rng(seed, 0, 0))?;
    Ok(json!({ "relative_rmse": value, "se": se, "sims": sims }).to_string())
}

// ── Exports ─────────────────────────────────────────────────────────────

#[wasm_bindgen]
pub fn score_curve(mdp_seed: u32, horizon: u32, points: u32) -> Result<String, JsValue> {
    score_curve_json(mdp_seed as u64, horizon as usize, points as usize).map_err(js_err)
}

#[wasm_bindgen]
pub fn mse_experiment(config: &str) -> Result<String, JsValue> {
    mse_experiment_json(config).map_err(js_err)
}

#[wasm_bindgen]
pub fn rmse(cells: &str, sims: u32, seed: u32) -> Result<String, JsValue> {
    relative_rmse_json(cells, sims as usize, seed as u64).map_err(js_err)
}
