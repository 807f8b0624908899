use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use manifold_plm::{Contamination, FitMode, ScoreFunction, WeightFunction};

use crate::error::{CliError, CliResult};
use crate::mapping::ColumnMapping;

#[derive(Debug, Parser)]
#[command(name = "mplm", version, about = "Robust partially linear models with manifold covariates")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the model to a CSV file and report estimates, intervals and ĝ.
    Fit(FitArgs),
    /// Cross-validate the bandwidth over a grid and report the diagnostics.
    Cv(CvArgs),
    /// Run a Monte Carlo campaign on the cylinder model.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Robust,
    Classical,
    Both,
}

impl ModeArg {
    pub fn modes(self) -> Vec<FitMode> {
        match self {
            ModeArg::Robust => vec![FitMode::Robust],
            ModeArg::Classical => vec![FitMode::Classical],
            ModeArg::Both => vec![FitMode::Robust, FitMode::Classical],
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub input: PathBuf,
    /// Column mapping, e.g. `response=y,linear=x,manifold=cylinder:angle_deg=dir,height=speed`.
    #[arg(long = "map", value_parser = parse_mapping)]
    pub mapping: ColumnMapping,
}

#[derive(Debug, Clone, Args)]
pub struct EstimatorArgs {
    #[arg(long, value_enum, default_value = "both")]
    pub mode: ModeArg,
    /// Score for the robust smoother and regression: `huber:1.345`, `bisquare:4.685` or `identity`.
    #[arg(long, default_value = "huber:1.345", value_parser = parse_score)]
    pub score: ScoreFunction<f64>,
    /// Design weight: `one`, `huber:Q95` (quantile of ‖η̂‖) or `huber:C`.
    #[arg(long, default_value = "one", value_parser = parse_weight)]
    pub w1: WeightFunction<f64>,
    /// Master seed. The data commands are deterministic and only record it.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct BandwidthArgs {
    #[arg(long, conflicts_with = "cv_grid")]
    pub bandwidth: Option<f64>,
    /// Comma-separated candidate bandwidths.
    #[arg(long, value_delimiter = ',')]
    pub cv_grid: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    #[command(flatten)]
    pub bandwidth: BandwidthArgs,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Null value(s) for the Wald test, one per linear covariate.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub null: Option<Vec<f64>>,
    /// Report path; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    /// Comma-separated candidate bandwidths; a default log grid when absent.
    #[arg(long, value_delimiter = ',')]
    pub cv_grid: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub estimator: EstimatorArgs,
    #[command(flatten)]
    pub bandwidth: BandwidthArgs,
    #[arg(long, default_value = "C0", value_parser = parse_contamination)]
    pub contamination: Contamination,
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub replications: usize,
    /// Cross-validate on replication 0 only and reuse that bandwidth.
    #[arg(long, conflicts_with = "bandwidth")]
    pub cv_once: bool,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Boxplot table (`mode,contamination,replication,beta_hat`).
    #[arg(long)]
    pub boxplot: Option<PathBuf>,
    /// CSV of replication 0's sample, for re-ingestion.
    #[arg(long)]
    pub sample_csv: Option<PathBuf>,
}

fn parse_mapping(s: &str) -> Result<ColumnMapping, String> {
    s.parse().map_err(|e: CliError| e.to_string())
}

fn number(s: &str, what: &str) -> Result<f64, String> {
    s.trim().parse().map_err(|_| format!("{what}: {s:?} is not a number"))
}

pub fn parse_score(s: &str) -> Result<ScoreFunction<f64>, String> {
    let (name, constant) = s.split_once(':').map_or((s, None), |(a, b)| (a, Some(b)));
    let score = match (name.trim().to_ascii_lowercase().as_str(), constant) {
        ("identity", None) => ScoreFunction::Identity,
        ("huber", None) => ScoreFunction::huber(),
        ("huber", Some(c)) => ScoreFunction::Huber(number(c, "huber constant")?),
        ("bisquare", None) => ScoreFunction::bisquare(),
        ("bisquare", Some(c)) => ScoreFunction::Bisquare(number(c, "bisquare constant")?),
        _ => return Err(format!("unknown score {s:?}; expected huber:C, bisquare:C or identity")),
    };
    score.validate().map_err(|e| e.to_string())?;
    Ok(score)
}

pub fn parse_weight(s: &str) -> Result<WeightFunction<f64>, String> {
    let w = match s.trim().to_ascii_lowercase().as_str() {
        "one" => WeightFunction::One,
        other => match other.strip_prefix("huber:") {
            Some(rest) => match rest.strip_prefix('q') {
                Some(pct) => WeightFunction::HuberQuantile { q: number(pct, "weight quantile")? / 100.0 },
                None => WeightFunction::Huber { c: number(rest, "weight constant")? },
            },
            None => return Err(format!("unknown weight {s:?}; expected one, huber:Q95 or huber:C")),
        },
    };
    w.validate().map_err(|e| e.to_string())?;
    Ok(w)
}

fn parse_contamination(s: &str) -> Result<Contamination, String> {
    s.parse().map_err(|e: manifold_plm::PlmError| e.to_string())
}

pub fn check_level(level: f64) -> CliResult<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(CliError::Config(format!("--level must be in (0, 1), got {level}")))
    }
}
