//! `l2calib`: ingest case counts, simulate and emulate SEIR or the toy
//! problems, calibrate, run replication studies and render report tables.

mod args;
mod commands;
mod config;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};

/// Failure classes mapped to exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad or missing arguments: exit 2.
    Usage(String),
    /// Anything that went wrong while running: exit 1.
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Runtime(e)
    }
}

impl From<l2calib::Error> for CliError {
    fn from(e: l2calib::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Runtime(e.into())
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn init_threads() -> CliResult<()> {
    let Ok(v) = std::env::var("L2CALIB_THREADS") else {
        return Ok(());
    };
    let n: usize = v.trim().parse().map_err(|_| usage(format!("L2CALIB_THREADS must be a positive integer, got {v:?}")))?;
    if n == 0 {
        return Err(usage("L2CALIB_THREADS must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Runtime(e.into()))
}

fn run(cli: Cli) -> CliResult<()> {
    init_threads()?;
    let cfg = config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Ingest(a) => commands::ingest(config::merge(a, &cfg, "ingest")?),
        Command::Simulate(a) => commands::simulate(config::merge(a, &cfg, "simulate")?),
        Command::Emulate(a) => commands::emulate(config::merge(a, &cfg, "emulate")?),
        Command::Fit(a) => commands::fit(config::merge(a, &cfg, "fit")?),
        Command::Replicate(a) => commands::replicate(config::merge(a, &cfg, "replicate")?),
        Command::Report(a) => commands::report(config::merge(a, &cfg, "report")?),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, kind, message) = match e {
                CliError::Usage(m) => (2, "usage", m),
                CliError::Runtime(e) => (1, "runtime", format!("{e:#}")),
            };
            eprintln!("{}", serde_json::json!({ "error": kind, "message": message }));
            ExitCode::from(code)
        }
    }
}
