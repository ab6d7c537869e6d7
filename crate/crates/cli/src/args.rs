use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(name = "l2calib", version, about = "L2-projection calibration of count-output simulators")]
pub struct Cli {
    /// JSON file of default option values; flags on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn a JHU time-series CSV into a daily count series.
    Ingest(IngestArgs),
    /// Run a simulator and write its output as CSV.
    Simulate(SimulateArgs),
    /// Build an emulator of a stochastic simulator.
    Emulate(EmulateArgs),
    /// Calibrate a model to a series and write an estimate report.
    Fit(FitArgs),
    /// Run a replication study on a synthetic problem.
    Replicate(ReplicateArgs),
    /// Merge fit reports into figure-ready CSV tables.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum ModelKind {
    #[value(name = "seir-det")]
    #[serde(rename = "seir-det")]
    SeirDet,
    #[value(name = "seir-stoch")]
    #[serde(rename = "seir-stoch")]
    SeirStoch,
    #[value(name = "toy-1d")]
    #[serde(rename = "toy-1d")]
    Toy1d,
    #[value(name = "toy-3d")]
    #[serde(rename = "toy-3d")]
    Toy3d,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum StudyKind {
    #[value(name = "toy-1d")]
    #[serde(rename = "toy-1d")]
    Toy1d,
    #[value(name = "toy-3d")]
    #[serde(rename = "toy-3d")]
    Toy3d,
    #[value(name = "mle-inconsistency")]
    #[serde(rename = "mle-inconsistency")]
    MleInconsistency,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodArg {
    L2,
    Ls,
    Mle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhiArg {
    One,
    Estimated,
    Auto,
}

#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct IngestArgs {
    /// JHU global time-series CSV.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Country/Region label; province rows are summed.
    #[arg(long)]
    pub country: Option<String>,
    /// First day of the window, YYYY-MM-DD.
    #[arg(long)]
    pub start: Option<String>,
    /// Last day of the window (inclusive), YYYY-MM-DD.
    #[arg(long)]
    pub end: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// Parameter values, comma separated. SEIR takes
    /// beta,kappa,gamma,I0,E0,R0.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    #[serde(default)]
    pub theta: Vec<f64>,
    /// SEIR population size.
    #[arg(long)]
    pub population: Option<f64>,
    /// SEIR horizon in days.
    #[arg(long)]
    pub days: Option<usize>,
    /// Toy models: number of equally spaced inputs.
    #[arg(long)]
    pub points: Option<usize>,
    /// Stochastic replicates (Poisson draws for the toys).
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EmulateArgs {
    /// seir-stoch, toy-1d or toy-3d.
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// Design size: parameter settings for SEIR, (x, θ) points for toys.
    #[arg(long)]
    pub m: Option<usize>,
    /// Replicates per design point.
    #[arg(long)]
    pub a: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub population: Option<f64>,
    /// SEIR: days 0..days-1 are covered.
    #[arg(long)]
    pub days: Option<usize>,
    /// SEIR: number of design days crossed with each parameter setting.
    #[arg(long)]
    pub design_days: Option<usize>,
    /// SEIR: box of the free parameters, comma separated.
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    #[serde(default)]
    pub lower: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    #[serde(default)]
    pub upper: Vec<f64>,
    /// SEIR: hold a parameter fixed, e.g. `r0_init=0`. Repeatable.
    #[arg(long)]
    #[serde(default)]
    pub fix: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct FitArgs {
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// Series JSON from `ingest`. Toys draw synthetic data when omitted.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Emulator JSON from `emulate`; required for seir-stoch, optional for toys.
    #[arg(long)]
    pub emulator: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub method: Option<MethodArg>,
    #[arg(long)]
    pub level: Option<f64>,
    /// Dispersion multiplier of the covariance.
    #[arg(long, value_enum)]
    pub phi: Option<PhiArg>,
    #[arg(long)]
    pub population: Option<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    #[serde(default)]
    pub lower: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    #[serde(default)]
    pub upper: Vec<f64>,
    /// SEIR: hold a parameter fixed, e.g. `r0_init=0`. Repeatable.
    #[arg(long)]
    #[serde(default)]
    pub fix: Vec<String>,
    /// Toys without --data: sample size and data seed.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Label stored in the report; defaults to the series' country.
    #[arg(long)]
    pub country: Option<String>,
    /// Report JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Band CSV (x,fit,lo,hi).
    #[arg(long)]
    pub band: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ReplicateArgs {
    #[arg(long, value_enum)]
    pub study: Option<StudyKind>,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Observations per replicate.
    #[arg(long)]
    pub n: Option<usize>,
    /// Also run the emulated estimators.
    #[arg(long)]
    #[serde(default)]
    pub emulator: bool,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long)]
    pub a: Option<usize>,
    /// Interval coverage of the L2 estimators instead of MSE.
    #[arg(long)]
    #[serde(default)]
    pub coverage: bool,
    #[arg(long)]
    pub level: Option<f64>,
    /// CSV table.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Full result as JSON.
    #[arg(long)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ReportArgs {
    /// Report JSON files from `fit`, comma separated or repeated.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub reports: Vec<PathBuf>,
    /// Band CSVs in the same order as the reports.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub bands: Vec<PathBuf>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}
