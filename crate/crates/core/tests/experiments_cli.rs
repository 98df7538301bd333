mod common;

use common::*;
use debiased_ope::cli::run_with;
use debiased_ope::experiments::mse::{run_replication, summarize};
use debiased_ope::experiments::{
    parse_jsonl, relative_rmse, relative_rmse_se, run_mse_experiment, write_jsonl,
    CampaignBatchCell, ExperimentConfig,
};
use debiased_ope::policies::epsilon_greedy_policy;
use debiased_ope::trajectory::sample_dataset;
use debiased_ope::{EstimatorKind, OpeError};
use proptest::prelude::*;
use std::path::{Path, PathBuf};

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn chain_experiment(extra: &str) -> ExperimentConfig {
    let text = format!(
        r#"{{"mdp": {{"file": "chain.json"}}, "behavior_policy": {{"kind": "uniform"}},
            "evaluation_policy": {{"kind": "epsilon_greedy", "epsilon": 0.2, "scores": "mean_reward"}},
            "n_trajectories": 200, "seed": 4 {extra}}}"#
    );
    ExperimentConfig::from_json(&text).unwrap()
}

fn cli(args: &[&str], dir: &Path) -> (i32, String, String) {
    let mut argv = vec!["ope-dml".to_string()];
    for a in args {
        let p = dir.join(a);
        // file arguments are resolved against the temp dir
        argv.push(if p.exists() {
            p.display().to_string()
        } else {
            a.to_string()
        });
    }
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run_with(argv, &mut out, &mut err);
    (
        code,
        String::from_utf8(out).unwrap(),
        String::from_utf8(err).unwrap(),
    )
}

// ── Experiment runner ───────────────────────────────────────────────────

#[test]
fn mse_decomposes_into_bias_and_variance() {
    let exp = chain_experiment(r#", "replications": 30"#)
        .resolve(&configs_dir())
        .unwrap();
    let report = run_mse_experiment(&exp).unwrap();
    assert_eq!(report.estimators.len(), EstimatorKind::ALL.len());
    for e in &report.estimators {
        assert!(
            (e.mse - (e.bias * e.bias + e.variance)).abs() < 1e-12,
            "{:?}",
            e.estimator
        );
        assert!(e.se_of_mse.is_some());
        assert_eq!(e.replications, 30);
    }
}

#[test]
fn single_replication_has_no_standard_error() {
    let exp = chain_experiment(r#", "replications": 1, "estimators": ["DML"]"#)
        .resolve(&configs_dir())
        .unwrap();
    let report = run_mse_experiment(&exp).unwrap();
    assert_eq!(report.estimators[0].se_of_mse, None);
}

#[test]
fn replications_do_not_depend_on_estimator_order_or_schedule() {
    let forward = chain_experiment(r#", "replications": 6, "estimators": ["DML", "IPW", "DM"]"#)
        .resolve(&configs_dir())
        .unwrap();
    let reversed = chain_experiment(r#", "replications": 6, "estimators": ["DM", "IPW", "DML"]"#)
        .resolve(&configs_dir())
        .unwrap();
    for rep in [5, 0, 3] {
        let a = run_replication(&forward, rep).unwrap();
        let b = run_replication(&reversed, rep).unwrap();
        for est in &a {
            let other = b.iter().find(|x| x.estimator == est.estimator).unwrap();
            assert_eq!(est, other);
        }
    }
    let full = run_mse_experiment(&forward).unwrap();
    let dml: Vec<_> = (0..6)
        .map(|r| run_replication(&forward, r).unwrap()[0].clone())
        .collect();
    let again = summarize(EstimatorKind::Dml, &dml, full.ground_truth);
    assert_eq!(&again, full.get(EstimatorKind::Dml).unwrap());
}

#[test]
fn config_validation_rejects_bad_values() {
    let cases = [
        (r#", "k_folds": 1"#, "fold count"),
        (r#", "replications": 0"#, "replications"),
        (r#", "level": 1.5"#, "level"),
        (r#", "estimators": []"#, "estimators"),
        (r#", "k_folds": 3, "nuisance": {"k_folds": 2}"#, "k_folds"),
    ];
    for (extra, field) in cases {
        let err = chain_experiment(extra).resolve(&configs_dir()).unwrap_err();
        assert!(err.is_validation(), "{extra}: {err}");
        assert!(err.to_string().contains(field), "{extra}: {err}");
    }
    assert!(ExperimentConfig::from_json(r#"{"bogus": 1}"#).is_err());
}

// ── Ingest ──────────────────────────────────────────────────────────────

#[test]
fn sampled_data_round_trips_through_jsonl() {
    let mdp = chain_mdp();
    let policy = epsilon_greedy_policy(&debiased_ope::mdp::mean_reward_table(&mdp), 0.5).unwrap();
    let data = sample_dataset(&mdp, &policy, 50, &mut rng(1)).unwrap();
    let mut bytes = Vec::new();
    write_jsonl(&data, &mut bytes).unwrap();
    let (back, _) = parse_jsonl(bytes.as_slice(), None).unwrap();
    assert_eq!(back, data);
}

#[test]
fn ragged_and_malformed_lines_are_located() {
    let text = "{\"steps\":[{\"s\":0,\"a\":1,\"r\":1.0}]}\n\n{\"steps\":[]}\n";
    let err = parse_jsonl(text.as_bytes(), None).unwrap_err();
    assert!(
        matches!(
            err,
            OpeError::RaggedHorizon {
                line: 3,
                expected: 1,
                found: 0
            }
        ),
        "{err}"
    );
    let err = parse_jsonl("{\"steps\":[{\"s\":0}]}\n".as_bytes(), None).unwrap_err();
    assert!(matches!(err, OpeError::Parse { line: 1, .. }), "{err}");
    let err = parse_jsonl("".as_bytes(), None).unwrap_err();
    assert!(matches!(err, OpeError::EmptyDataset));
}

// ── Relative RMSE ───────────────────────────────────────────────────────

fn cells_strategy() -> impl Strategy<Value = Vec<CampaignBatchCell>> {
    prop::collection::vec((0.05f64..2.0, 0.05f64..2.0, 1u64..10_000), 1..8).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (est, act, n))| CampaignBatchCell::new("c", i.to_string(), est, act, n))
            .collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn relative_rmse_ignores_per_cell_scale(cells in cells_strategy(), scale in prop::collection::vec(0.1f64..50.0, 8)) {
        let base = relative_rmse(&cells).unwrap();
        let scaled: Vec<_> = cells
            .iter()
            .zip(&scale)
            .map(|(c, k)| CampaignBatchCell::new("c", c.batch.clone(), c.estimate * k, c.actual * k, c.n_impressions))
            .collect();
        prop_assert!((relative_rmse(&scaled).unwrap() - base).abs() < 1e-9 * (1.0 + base));
    }

    #[test]
    fn relative_rmse_ignores_common_impression_factor(cells in cells_strategy(), factor in 1u64..100) {
        let base = relative_rmse(&cells).unwrap();
        let scaled: Vec<_> = cells
            .iter()
            .map(|c| CampaignBatchCell::new("c", c.batch.clone(), c.estimate, c.actual, c.n_impressions * factor))
            .collect();
        prop_assert!((relative_rmse(&scaled).unwrap() - base).abs() < 1e-9 * (1.0 + base));
    }
}

#[test]
fn rmse_se_is_seed_reproducible() {
    let mut cell = CampaignBatchCell::new("a", "1", 0.11, 0.1, 500);
    cell.ope_variance = Some(0.1);
    cell.n_ope = Some(1000);
    cell.binary_reward = true;
    let a = relative_rmse_se(&[cell.clone()], 500, &mut rng(3)).unwrap();
    let b = relative_rmse_se(&[cell], 500, &mut rng(3)).unwrap();
    assert_eq!(a, b);
    assert!(a > 0.0);
}

// ── CLI ─────────────────────────────────────────────────────────────────

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(
        configs_dir().join("chain.json"),
        dir.path().join("chain.json"),
    )
    .unwrap();
    dir
}

#[test]
fn bound_rejects_multi_step_problems() {
    let dir = workspace();
    std::fs::write(
        dir.path().join("bound.json"),
        r#"{"mdp": {"file": "chain.json"}, "behavior_policy": {"kind": "uniform"},
            "evaluation_policy": {"kind": "uniform"}}"#,
    )
    .unwrap();
    let (code, _, err) = cli(&["bound", "--config", "bound.json"], dir.path());
    assert_eq!(code, 1);
    assert!(err.contains("efficiency bound requires horizon 0"), "{err}");
}

#[test]
fn usage_and_io_errors_have_distinct_codes() {
    let dir = workspace();
    let (code, _, err) = cli(&["frobnicate"], dir.path());
    assert_eq!(code, 1);
    assert!(err.contains("Usage"), "{err}");
    let (code, _, err) = cli(&["evaluate", "--config", "missing.json"], dir.path());
    assert_eq!(code, 2);
    assert!(err.starts_with("error:"), "{err}");
    let (code, out, _) = cli(&["--help"], dir.path());
    assert_eq!(code, 0);
    assert!(out.contains("simulate"));
}

#[test]
fn experiment_reports_every_requested_estimator() {
    let dir = workspace();
    std::fs::write(
        dir.path().join("exp.json"),
        r#"{"mdp": {"file": "chain.json"}, "behavior_policy": {"kind": "uniform"},
            "evaluation_policy": {"kind": "greedy", "scores": "optimal_q"},
            "n_trajectories": 100, "replications": 5}"#,
    )
    .unwrap();
    let (code, out, err) = cli(
        &[
            "experiment",
            "--config",
            "exp.json",
            "--estimator",
            "dml",
            "--estimator",
            "ipw",
            "--folds",
            "3",
        ],
        dir.path(),
    );
    assert_eq!(code, 0, "{err}");
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let names: Vec<_> = v["estimators"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["estimator"].clone())
        .collect();
    assert_eq!(names, vec!["DML", "IPW"]);
    assert_eq!(v["k_folds"], 3);
}

#[test]
fn simulate_then_evaluate_round_trip() {
    let dir = workspace();
    let d = dir.path();
    std::fs::write(
        d.join("sim.json"),
        r#"{"mdp": {"file": "chain.json"}, "policy": {"kind": "uniform"}, "n_trajectories": 400, "seed": 2}"#,
    )
    .unwrap();
    std::fs::write(
        d.join("eval.json"),
        r#"{"data": "data.jsonl", "num_states": 3, "num_actions": 2, "discount": 0.9,
            "evaluation_policy": {"kind": "uniform"}, "estimators": ["IPW", "DML"]}"#,
    )
    .unwrap();
    let (code, data, err) = cli(&["simulate", "--config", "sim.json"], d);
    assert_eq!(code, 0, "{err}");
    assert_eq!(data.lines().count(), 400);
    std::fs::write(d.join("data.jsonl"), &data).unwrap();
    let (code, out, err) = cli(&["evaluate", "--config", "eval.json", "--format", "csv"], d);
    assert_eq!(code, 0, "{err}");
    let mut lines = out.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("estimator,value,variance"));
    let rows: Vec<_> = lines.collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("IPW,") && rows[1].starts_with("DML,"));
}
