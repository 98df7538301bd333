//! The `ope-dml` command line.
//!
//! Every subcommand reads a JSON config (`--config`) and writes its result to `--output` or
//! standard output. Exit code 0 means success, 1 a usage or validation error, 2 a runtime error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{OpeError, Result};
use crate::estimators::{
    cb_efficiency_bound, estimate, EstimatorConfig, EstimatorKind, WeightOptions, DEFAULT_LEVEL,
};
use crate::experiments::config::{MdpSource, NuisanceSettings, PolicySpec};
use crate::experiments::mse::{derived_rng, estimator_purpose};
use crate::experiments::{
    ingest_jsonl, relative_rmse, relative_rmse_se, reports_to_csv, run_mse_experiment, write_jsonl,
    CampaignBatchCell, EstimatorReport, ExperimentConfig, LabelMaps, DEFAULT_SE_SIMS,
};
use crate::mdp::{exact_policy_value, TabularMdp};
use crate::trajectory::sample_dataset;

#[derive(Debug, Parser)]
#[command(
    name = "ope-dml",
    version,
    about = "Cross-fitted doubly robust off-policy evaluation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample trajectories from an MDP under a policy and write them as JSONL.
    Simulate(CommonArgs),
    /// Estimate a policy value from a JSONL dataset.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Run a Monte Carlo MSE study.
    Experiment(CommonArgs),
    /// Semiparametric efficiency bound of a horizon-0 problem.
    Bound(CommonArgs),
    /// Relative RMSE of campaign/batch cells and its simulated standard error.
    Rmse {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = DEFAULT_SE_SIMS)]
        sims: usize,
    },
}

#[derive(Debug, Args)]
struct CommonArgs {
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    folds: Option<usize>,
    /// May be repeated; overrides the config's estimator list.
    #[arg(long = "estimator", value_name = "NAME")]
    estimators: Vec<EstimatorKind>,
    #[arg(long, value_name = "PATH")]
    output: Option<PathBuf>,
    #[arg(long)]
    level: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

impl clap::builder::ValueParserFactory for EstimatorKind {
    type Parser = clap::builder::ValueParser;

    fn value_parser() -> Self::Parser {
        clap::builder::ValueParser::new(|s: &str| {
            s.parse::<EstimatorKind>().map_err(|e| e.to_string())
        })
    }
}

// ── Subcommand configs ──────────────────────────────────────────────────

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateConfig {
    mdp: MdpSource,
    policy: PolicySpec,
    n_trajectories: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    discount: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct EvaluateConfig {
    data: PathBuf,
    #[serde(default)]
    mdp: Option<MdpSource>,
    #[serde(default)]
    num_states: Option<usize>,
    #[serde(default)]
    num_actions: Option<usize>,
    #[serde(default)]
    discount: Option<f64>,
    evaluation_policy: PolicySpec,
    #[serde(default)]
    behavior_policy: Option<PolicySpec>,
    #[serde(default)]
    nuisance: NuisanceSettings,
    #[serde(default)]
    estimators: Option<Vec<EstimatorKind>>,
    #[serde(default)]
    level: Option<f64>,
    #[serde(default)]
    labels: Option<LabelMaps>,
    #[serde(default)]
    weight_clip: Option<f64>,
    #[serde(default)]
    self_normalize: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoundConfig {
    mdp: MdpSource,
    behavior_policy: PolicySpec,
    evaluation_policy: PolicySpec,
}

#[derive(Debug, Serialize)]
struct BoundReport {
    sigma2_cb: f64,
    value: f64,
    num_states: usize,
    num_actions: usize,
}

#[derive(Debug, Serialize)]
struct RmseReport {
    relative_rmse: f64,
    se: f64,
    sims: usize,
    seed: u64,
    cells: usize,
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<(T, serde_json::Value)> {
    let text = std::fs::read_to_string(path)?;
    let raw: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| OpeError::Config(format!("{}: {e}", path.display())))?;
    let parsed = serde_json::from_value(raw.clone())
        .map_err(|e| OpeError::Config(format!("{}: {e}", path.display())))?;
    Ok((parsed, raw))
}

fn config_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn emit(bytes: &[u8], output: Option<&Path>, stdout: &mut dyn Write) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, bytes)?,
        None => stdout.write_all(bytes)?,
    }
    Ok(())
}

fn to_json<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

// ── Subcommands ─────────────────────────────────────────────────────────

fn simulate(args: &CommonArgs, stdout: &mut dyn Write) -> Result<()> {
    let (cfg, _): (SimulateConfig, _) = read_json(&args.config)?;
    let mut mdp = cfg.mdp.load(&config_dir(&args.config))?;
    if let Some(g) = cfg.discount {
        mdp = mdp.with_discount(g)?;
    }
    let dims = (mdp.num_states(), mdp.num_actions());
    let policy = cfg.policy.build(Some(&mdp), dims, "policy")?;
    if cfg.n_trajectories == 0 {
        return Err(OpeError::invalid("n_trajectories", "must be positive"));
    }
    let mut rng = derived_rng(args.seed.unwrap_or(cfg.seed), 0, 0);
    let data = sample_dataset(&mdp, &policy, cfg.n_trajectories, &mut rng)?;
    let mut bytes = Vec::new();
    write_jsonl(&data, &mut bytes)?;
    emit(&bytes, args.output.as_deref(), stdout)
}

fn evaluate(args: &CommonArgs, format: Format, stdout: &mut dyn Write) -> Result<()> {
    let (cfg, raw): (EvaluateConfig, _) = read_json(&args.config)?;
    let base = config_dir(&args.config);
    let mdp: Option<TabularMdp> = cfg.mdp.as_ref().map(|m| m.load(&base)).transpose()?;
    let (data, maps) = ingest_jsonl(base.join(&cfg.data), cfg.labels.as_ref())?;

    let dims = match (&mdp, cfg.num_states, cfg.num_actions) {
        (Some(m), _, _) => (m.num_states(), m.num_actions()),
        (None, Some(ns), Some(na)) => (ns, na),
        _ if cfg.labels.is_some() => (maps.states.len(), maps.actions.len()),
        _ => cfg.evaluation_policy.dims().ok_or_else(|| {
            OpeError::invalid(
                "num_states",
                "state and action counts are not determined by the config",
            )
        })?,
    };
    let discount = cfg
        .discount
        .or(mdp.as_ref().map(TabularMdp::discount))
        .ok_or_else(|| OpeError::invalid("discount", "required when no MDP is given"))?;
    let evaluation = cfg
        .evaluation_policy
        .build(mdp.as_ref(), dims, "evaluation_policy")?;
    let behavior = cfg
        .behavior_policy
        .as_ref()
        .map(|p| p.build(mdp.as_ref(), dims, "behavior_policy"))
        .transpose()?;

    let k_folds = args.folds.or(cfg.nuisance.k_folds).unwrap_or(2);
    let seed = args.seed.or(cfg.nuisance.seed).unwrap_or(0);
    let level = args.level.or(cfg.level).unwrap_or(DEFAULT_LEVEL);
    let estimators = if !args.estimators.is_empty() {
        args.estimators.clone()
    } else {
        cfg.estimators
            .clone()
            .unwrap_or_else(|| vec![EstimatorKind::Dml])
    };
    let config = EstimatorConfig {
        k_folds,
        level,
        nuisance: cfg.nuisance.to_config(behavior.as_ref())?,
        weights: WeightOptions {
            clip: cfg.weight_clip,
        },
        self_normalize: cfg.self_normalize,
    };
    let echo = json!({
        "config": raw,
        "k_folds": k_folds,
        "discount": discount,
        "deviations": config.deviations(),
    });

    let reports = unique(&estimators)
        .into_iter()
        .map(|kind| {
            let mut rng = derived_rng(seed, 0, estimator_purpose(kind));
            let est = estimate(kind, &data, &evaluation, discount, &config, &mut rng)?;
            Ok(EstimatorReport::new(&est, k_folds, seed, echo.clone()))
        })
        .collect::<Result<Vec<_>>>()?;
    let bytes = match format {
        Format::Json => to_json(&reports)?,
        Format::Csv => reports_to_csv(&reports)?.into_bytes(),
    };
    emit(&bytes, args.output.as_deref(), stdout)
}

fn unique(kinds: &[EstimatorKind]) -> Vec<EstimatorKind> {
    let mut out: Vec<EstimatorKind> = Vec::with_capacity(kinds.len());
    for k in kinds {
        if !out.contains(k) {
            out.push(*k);
        }
    }
    out
}

fn experiment(args: &CommonArgs, stdout: &mut dyn Write) -> Result<()> {
    let (mut cfg, _): (ExperimentConfig, _) = read_json(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
        cfg.nuisance.seed = None;
    }
    if let Some(k) = args.folds {
        cfg.k_folds = k;
        cfg.nuisance.k_folds = None;
    }
    if let Some(level) = args.level {
        cfg.level = level;
    }
    if !args.estimators.is_empty() {
        cfg.estimators = args.estimators.clone();
    }
    let resolved = cfg.resolve(&config_dir(&args.config))?;
    let report = run_mse_experiment(&resolved)?;
    let output = args.output.clone().or(cfg.output.clone());
    emit(&to_json(&report)?, output.as_deref(), stdout)
}

fn bound(args: &CommonArgs, stdout: &mut dyn Write) -> Result<()> {
    let (cfg, _): (BoundConfig, _) = read_json(&args.config)?;
    let mdp = cfg.mdp.load(&config_dir(&args.config))?;
    let dims = (mdp.num_states(), mdp.num_actions());
    let behavior = cfg
        .behavior_policy
        .build(Some(&mdp), dims, "behavior_policy")?;
    let evaluation = cfg
        .evaluation_policy
        .build(Some(&mdp), dims, "evaluation_policy")?;
    let report = BoundReport {
        sigma2_cb: cb_efficiency_bound(&mdp, &behavior, &evaluation)?,
        value: exact_policy_value(&mdp, &evaluation)?,
        num_states: dims.0,
        num_actions: dims.1,
    };
    emit(&to_json(&report)?, args.output.as_deref(), stdout)
}

fn rmse(args: &CommonArgs, sims: usize, stdout: &mut dyn Write) -> Result<()> {
    let (cells, _): (Vec<CampaignBatchCell>, _) = read_json(&args.config)?;
    let seed = args.seed.unwrap_or(0);
    let mut rng = derived_rng(seed, 0, 0);
    let report = RmseReport {
        relative_rmse: relative_rmse(&cells)?,
        se: relative_rmse_se(&cells, sims, &mut rng)?,
        sims,
        seed,
        cells: cells.len(),
    };
    emit(&to_json(&report)?, args.output.as_deref(), stdout)
}

// ── Entry points ────────────────────────────────────────────────────────

/// Runs the CLI against the given streams and returns the exit code.
pub fn run_with<I, T>(argv: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let rendered = e.render().to_string();
            return if e.use_stderr() {
                let _ = write!(stderr, "{rendered}");
                1
            } else {
                let _ = write!(stdout, "{rendered}");
                0
            };
        }
    };
    let result = match &cli.command {
        Command::Simulate(a) => simulate(a, stdout),
        Command::Evaluate { common, format } => evaluate(common, *format, stdout),
        Command::Experiment(a) => experiment(a, stdout),
        Command::Bound(a) => bound(a, stdout),
        Command::Rmse { common, sims } => rmse(common, *sims, stdout),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_validation() {
                1
            } else {
                2
            }
        }
    }
}

pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(argv, &mut stdout.lock(), &mut stderr.lock())
}
