//! Command-line arguments, the optional JSON config file, and their merge.
//! Precedence: flags, then config-file values, then defaults.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use hpr_core::selection::PenaltySize;
use hpr_core::synthetic::{GenerativeSpec, RegimeSampling};
use hpr_core::{GatingMode, VarianceMode};
use serde::Deserialize;

use crate::error::CliError;

pub const OUTPUT_DIR_ENV: &str = "HPRCLUST_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "hprclust", version, about = "Clustering and segmentation of time series with regime changes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a labeled dataset.
    Simulate(SimulateArgs),
    /// Fit a model to a dataset.
    Fit(FitArgs),
    /// Select (K, L, p) by BIC over a grid.
    Select(SelectArgs),
    /// Score fitted models against reference labels, or run a noise sweep.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelChoice {
    Hpr,
    Regmix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VarianceChoice {
    Free,
    Cluster,
    Global,
}

impl From<VarianceChoice> for VarianceMode {
    fn from(v: VarianceChoice) -> Self {
        match v {
            VarianceChoice::Free => VarianceMode::Free,
            VarianceChoice::Cluster => VarianceMode::CommonPerCluster,
            VarianceChoice::Global => VarianceMode::CommonGlobal,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GatingChoice {
    PerCluster,
    Shared,
}

impl From<GatingChoice> for GatingMode {
    fn from(v: GatingChoice) -> Self {
        match v {
            GatingChoice::PerCluster => GatingMode::PerCluster,
            GatingChoice::Shared => GatingMode::Shared,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PenaltyChoice {
    Series,
    Observations,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingChoice {
    Deterministic,
    PerPoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Table1,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory (default: $HPRCLUST_OUTPUT_DIR, else the current directory).
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Worker thread cap.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Master seed for simulation and restarts (default 0).
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct FitControlArgs {
    /// Model family (default hpr).
    #[arg(long, value_enum)]
    pub model: Option<ModelChoice>,
    /// Random restarts per fit (default 20).
    #[arg(long)]
    pub restarts: Option<usize>,
    #[arg(long, value_enum)]
    pub variance_mode: Option<VarianceChoice>,
    #[arg(long, value_enum)]
    pub gating_mode: Option<GatingChoice>,
    /// Rescale time to [0, 1] before fitting (default on).
    #[arg(long, value_enum)]
    pub normalize_time: Option<Switch>,
    /// Relative log-likelihood change that stops EM (default 1e-8).
    #[arg(long)]
    pub tol: Option<f64>,
    /// EM iteration cap (default 500).
    #[arg(long)]
    pub max_iters: Option<usize>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SimulationArgs {
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    /// Noise variance of the preset (default 1).
    #[arg(long)]
    pub sigma2: Option<f64>,
    /// Number of series to simulate.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, value_enum)]
    pub sampling: Option<SamplingChoice>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub sim: SimulationArgs,
}

#[derive(Debug, Clone, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub fit: FitControlArgs,
    /// Dataset CSV.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Number of clusters (default 2).
    #[arg(long = "K")]
    pub clusters: Option<usize>,
    /// Number of regimes per cluster (default 3).
    #[arg(long = "L")]
    pub segments: Option<usize>,
    /// Polynomial degree (default 3).
    #[arg(long = "p")]
    pub degree: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct SelectArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub fit: FitControlArgs,
    #[command(flatten)]
    pub sim: SimulationArgs,
    /// Dataset CSV (not needed in replicate mode).
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Grid upper bounds (defaults 4); K and L start at 1.
    #[arg(long = "K-max")]
    pub k_max: Option<usize>,
    #[arg(long = "L-max")]
    pub l_max: Option<usize>,
    #[arg(long = "p-max")]
    pub p_max: Option<usize>,
    /// Lowest degree on the grid (default 1).
    #[arg(long = "p-min")]
    pub p_min: Option<usize>,
    /// Sample size in the BIC penalty: series (default) or observations.
    #[arg(long, value_enum)]
    pub penalty: Option<PenaltyChoice>,
    /// Re-simulate this many datasets and report selection rates.
    #[arg(long)]
    pub replicates: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub fit: FitControlArgs,
    #[command(flatten)]
    pub sim: SimulationArgs,
    /// Dataset CSV.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Reference labels, one 1-based label per line.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Fitted model JSON; repeat to compare several.
    #[arg(long = "model-file")]
    pub model_files: Vec<PathBuf>,
    /// Comma-separated noise variances for a simulated sweep.
    #[arg(long, value_delimiter = ',')]
    pub sweep: Option<Vec<f64>>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Number of clusters (default 2).
    #[arg(long = "K")]
    pub clusters: Option<usize>,
    /// Number of regimes per cluster (default 3).
    #[arg(long = "L")]
    pub segments: Option<usize>,
    /// Polynomial degree (default 3).
    #[arg(long = "p")]
    pub degree: Option<usize>,
    /// Degree of the baseline regression mixture in sweep mode.
    #[arg(long = "baseline-p")]
    pub baseline_degree: Option<usize>,
}

/// Values accepted in the JSON config file. Every field is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub input: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    #[serde(default)]
    pub model_files: Vec<PathBuf>,
    pub model: Option<ModelChoice>,
    pub clusters: Option<usize>,
    pub segments: Option<usize>,
    pub degree: Option<usize>,
    pub baseline_degree: Option<usize>,
    pub k_max: Option<usize>,
    pub l_max: Option<usize>,
    pub p_max: Option<usize>,
    pub p_min: Option<usize>,
    pub restarts: Option<usize>,
    pub seed: Option<u64>,
    pub sigma2: Option<f64>,
    pub n: Option<usize>,
    pub variance_mode: Option<VarianceChoice>,
    pub gating_mode: Option<GatingChoice>,
    pub normalize_time: Option<Switch>,
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub threads: Option<usize>,
    pub replicates: Option<usize>,
    pub sweep: Option<Vec<f64>>,
    pub penalty: Option<PenaltyChoice>,
    pub sampling: Option<SamplingChoice>,
    pub preset: Option<Preset>,
    /// Full generative spec for `simulate`, used instead of a preset.
    pub generative: Option<GenerativeSpec>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = crate::formats::read_text(p)?;
                serde_json::from_str(&text).map_err(|e| CliError::Json { path: p.to_path_buf(), message: e.to_string() })
            }
        }
    }
}

/// Fitting controls after merging flags, config and defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitSettings {
    pub model: ModelChoice,
    pub options: hpr_core::FitOptions,
    pub variance_mode: VarianceMode,
    pub gating_mode: GatingMode,
}

pub fn fit_settings(args: &FitControlArgs, common: &CommonArgs, cfg: &ConfigFile) -> Result<FitSettings, CliError> {
    let defaults = hpr_core::FitOptions::default();
    let options = hpr_core::FitOptions {
        restarts: args.restarts.or(cfg.restarts).unwrap_or(defaults.restarts),
        max_iters: args.max_iters.or(cfg.max_iters).unwrap_or(defaults.max_iters),
        tol: args.tol.or(cfg.tol).unwrap_or(defaults.tol),
        seed: common.seed.or(cfg.seed).unwrap_or(defaults.seed),
        normalize_time: args.normalize_time.or(cfg.normalize_time).map_or(defaults.normalize_time, |s| s == Switch::On),
    };
    if options.restarts == 0 {
        return Err(CliError::Usage("--restarts must be at least 1".into()));
    }
    if !(options.tol.is_finite() && options.tol >= 0.0) {
        return Err(CliError::Usage("--tol must be a nonnegative number".into()));
    }
    Ok(FitSettings {
        model: args.model.or(cfg.model).unwrap_or(ModelChoice::Hpr),
        options,
        variance_mode: args.variance_mode.or(cfg.variance_mode).map_or(VarianceMode::Free, Into::into),
        gating_mode: args.gating_mode.or(cfg.gating_mode).map_or(GatingMode::PerCluster, Into::into),
    })
}

pub fn output_dir(common: &CommonArgs, cfg: &ConfigFile) -> PathBuf {
    common
        .output_dir
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

pub fn penalty(choice: Option<PenaltyChoice>) -> PenaltySize {
    match choice {
        Some(PenaltyChoice::Observations) => PenaltySize::Observations,
        _ => PenaltySize::Series,
    }
}

pub fn sampling(choice: Option<SamplingChoice>) -> RegimeSampling {
    match choice {
        Some(SamplingChoice::PerPoint) => RegimeSampling::PerPoint,
        _ => RegimeSampling::DeterministicMean,
    }
}
