//! Run configuration: command-line flags layered over an optional TOML file
//! layered over defaults.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ridgeshrink::experiments::Scenario;

use crate::Failure;

#[derive(Debug, Parser)]
#[command(
    name = "ridgeshrink",
    version,
    about = "Generalized ridge shrinkage estimators and their simulation studies",
    after_help = "Penalized baselines minimize (1/2n)||y - Xb||^2 + penalty on standardized predictors and a centered response; lambda values use that scaling."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Fit the shrinkage family to a CSV file (low- or high-dimensional by shape).
    Fit,
    /// Relative efficiency against GRR along a grid of sub-model violations.
    SweepDelta,
    /// Monte Carlo table for a named or configured scenario.
    Table,
    /// Exact risk and bias norm along a grid of noncentrality values.
    RiskCurve,
    /// Case-resampling evaluation on a data file or a bundled synthetic set.
    Bootstrap,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Fit => "fit",
            Command::SweepDelta => "sweep-delta",
            Command::Table => "table",
            Command::RiskCurve => "risk-curve",
            Command::Bootstrap => "bootstrap",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Synthetic {
    Pollution,
    Eye,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MetricArg {
    MseBeta,
    MseY,
}

/// Options shared by every subcommand. Each one overrides the config file.
#[derive(Debug, Default, Args)]
pub struct Flags {
    /// TOML file with any of the keys below (snake_case).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Input CSV with a header row.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Name of the response column in the input CSV.
    #[arg(long, global = true)]
    pub response: Option<String>,
    /// Columns of the candidate sub-model (names, or 0-based indices), comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub submodel: Option<Vec<String>>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub scenario: Option<String>,
    #[arg(long, global = true)]
    pub rho: Option<f64>,
    #[arg(long, global = true)]
    pub replicates: Option<usize>,
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    /// Use RSS_A / q for sigma^2 in the high-dimensional statistic.
    #[arg(long, global = true)]
    pub paper_literal_sigma: bool,
    /// Fixed omega in [0, 1]; tuned when absent.
    #[arg(long, global = true)]
    pub omega: Option<f64>,
    /// Fixed scalar ridge k > 0; Hoerl-Kennard rules when absent.
    #[arg(long, global = true)]
    pub ridge_k: Option<f64>,
    /// Largest grid value (Delta* for sweep-delta, Delta^2 for risk-curve).
    #[arg(long, global = true)]
    pub grid_max: Option<f64>,
    #[arg(long, global = true)]
    pub grid_step: Option<f64>,
    /// Estimators for risk-curve, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub kinds: Option<Vec<String>>,
    #[arg(long, global = true, value_enum)]
    pub metric: Option<MetricArg>,
    /// Bundled data set for bootstrap when no --input is given.
    #[arg(long, global = true, value_enum)]
    pub synthetic: Option<Synthetic>,
}

/// Keys accepted in the config file; every field is optional.
#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub command: Option<Command>,
    pub input: Option<PathBuf>,
    pub response: Option<String>,
    pub submodel: Option<Vec<String>>,
    pub alpha: Option<f64>,
    pub seed: Option<u64>,
    pub scenario: Option<String>,
    pub rho: Option<f64>,
    pub replicates: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub folds: Option<usize>,
    pub paper_literal_sigma: Option<bool>,
    pub omega: Option<f64>,
    pub ridge_k: Option<f64>,
    pub grid_max: Option<f64>,
    pub grid_step: Option<f64>,
    pub kinds: Option<Vec<String>>,
    pub metric: Option<MetricArg>,
    pub synthetic: Option<Synthetic>,
    /// Full simulation design for `table`, replacing the named scenario.
    pub design: Option<Scenario>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Input(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Failure::Input(format!("config {}: {e}", path.display())))
    }
}

/// Effective settings after merging. Fields left `None` fall back to the
/// per-command defaults.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub input: Option<PathBuf>,
    pub response: Option<String>,
    pub submodel: Option<Vec<String>>,
    pub alpha: f64,
    pub seed: Option<u64>,
    pub scenario: Option<String>,
    pub rho: f64,
    pub replicates: Option<usize>,
    /// Where results go; not part of the hash.
    #[serde(skip)]
    pub out_dir: PathBuf,
    pub folds: Option<usize>,
    pub paper_literal_sigma: bool,
    pub omega: Option<f64>,
    pub ridge_k: Option<f64>,
    pub grid_max: Option<f64>,
    pub grid_step: Option<f64>,
    pub kinds: Option<Vec<String>>,
    pub metric: Option<MetricArg>,
    pub synthetic: Option<Synthetic>,
    pub design: Option<Scenario>,
}

impl RunConfig {
    pub fn resolve(command: Command, flags: Flags) -> Result<Self, Failure> {
        let file = match &flags.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        if let Some(c) = file.command {
            if c != command {
                return Err(Failure::Input(format!(
                    "config file is for `{}` but `{}` was requested",
                    c.name(),
                    command.name()
                )));
            }
        }
        let cfg = Self {
            command,
            input: flags.input.or(file.input),
            response: flags.response.or(file.response),
            submodel: flags.submodel.or(file.submodel),
            alpha: flags.alpha.or(file.alpha).unwrap_or(0.05),
            seed: flags.seed.or(file.seed),
            scenario: flags.scenario.or(file.scenario),
            rho: flags.rho.or(file.rho).unwrap_or(0.5),
            replicates: flags.replicates.or(file.replicates),
            out_dir: flags.out_dir.or(file.out_dir).unwrap_or_else(|| PathBuf::from(".")),
            folds: flags.folds.or(file.folds),
            paper_literal_sigma: flags.paper_literal_sigma || file.paper_literal_sigma.unwrap_or(false),
            omega: flags.omega.or(file.omega),
            ridge_k: flags.ridge_k.or(file.ridge_k),
            grid_max: flags.grid_max.or(file.grid_max),
            grid_step: flags.grid_step.or(file.grid_step),
            kinds: flags.kinds.or(file.kinds),
            metric: flags.metric.or(file.metric),
            synthetic: flags.synthetic.or(file.synthetic),
            design: file.design,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), Failure> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Failure::Input(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if !(self.rho.abs() < 1.0) {
            return Err(Failure::Input(format!("rho must lie in (-1, 1), got {}", self.rho)));
        }
        if let Some(w) = self.omega {
            if !(0.0..=1.0).contains(&w) {
                return Err(Failure::Input(format!("omega must lie in [0, 1], got {w}")));
            }
        }
        if let Some(k) = self.ridge_k {
            if !(k > 0.0 && k.is_finite()) {
                return Err(Failure::Input(format!("ridge k must be positive, got {k}")));
            }
        }
        if matches!(self.folds, Some(f) if f < 2) {
            return Err(Failure::Input("folds must be at least 2".into()));
        }
        if matches!(self.replicates, Some(0)) {
            return Err(Failure::Input("replicates must be at least 1".into()));
        }
        if let Some(s) = self.grid_step {
            if !(s > 0.0) {
                return Err(Failure::Input("grid step must be positive".into()));
            }
        }
        if matches!(self.grid_max, Some(m) if !(m >= 0.0)) {
            return Err(Failure::Input("grid max must be nonnegative".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of the effective configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
    }
}
