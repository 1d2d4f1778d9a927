//! Configuration-driven experiment runner for the `symlqr` library.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

pub use config::RunConfig;
pub use error::CliError;

use commands::Context;
use config::AlphaSpec;
use output::{OutputDir, OUT_DIR_ENV};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    SolveFh,
    SolveIh,
    Oracle,
    NoiseStudy,
    Simulate,
    CheckSymmetry,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SolveFh => "solve-fh",
            Command::SolveIh => "solve-ih",
            Command::Oracle => "oracle",
            Command::NoiseStudy => "noise-study",
            Command::Simulate => "simulate",
            Command::CheckSymmetry => "check-symmetry",
        }
    }
}

/// Contents of `summary.json`.
#[derive(Debug, Serialize)]
pub struct Summary {
    pub command: &'static str,
    /// The configuration as run, with the step size resolved to a number.
    pub config: RunConfig,
    pub alpha: Option<f64>,
    pub contraction: Option<f64>,
    pub plant_runs: u64,
    pub wall_time_s: f64,
    pub warnings: Vec<String>,
    pub error: Option<String>,
    pub details: Value,
}

/// Output directory: explicit flag, then the config, then the environment,
/// then `./symlqr-out`.
pub fn output_path(flag: Option<&Path>, config: &RunConfig) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("symlqr-out"))
}

/// Loads the config, runs one command and writes `summary.json`.
///
/// The summary is written even when the command fails after the
/// configuration was accepted; the error is returned afterwards.
pub fn run(command: Command, config_path: &Path, out: Option<&Path>) -> Result<Summary, CliError> {
    let config = RunConfig::load(config_path)?;
    run_config(command, config, out)
}

pub fn run_config(command: Command, config: RunConfig, out: Option<&Path>) -> Result<Summary, CliError> {
    let start = Instant::now();
    let dir = output_path(out, &config);
    let resolved = config.resolve()?;
    let out = OutputDir::create(dir)?;
    let mut ctx = Context::new(&resolved, &out);
    let result = match command {
        Command::SolveFh => commands::solve_fh(&mut ctx),
        Command::SolveIh => commands::solve_ih(&mut ctx),
        Command::Oracle => commands::oracle(&mut ctx),
        Command::NoiseStudy => commands::noise_study(&mut ctx),
        Command::Simulate => commands::simulate_cmd(&mut ctx),
        Command::CheckSymmetry => commands::check_symmetry(&mut ctx),
    };
    let mut config = resolved.config.clone();
    if let Some(a) = ctx.alpha {
        config.solver.alpha = AlphaSpec::Value(a);
    }
    let (details, error) = match &result {
        Ok(d) => (d.clone(), None),
        Err(e) => (Value::Null, Some(e.to_string())),
    };
    let failed_study = command == Command::NoiseStudy && details.get("passed") == Some(&Value::Bool(false));
    let summary = Summary {
        command: command.name(),
        config,
        alpha: ctx.alpha,
        contraction: ctx.contraction,
        plant_runs: ctx.plant_runs,
        wall_time_s: start.elapsed().as_secs_f64(),
        warnings: ctx.warnings,
        error,
        details,
    };
    out.json("summary.json", &summary)?;
    result?;
    if failed_study {
        return Err(CliError::Failed("noise study checks failed; see summary.json".into()));
    }
    Ok(summary)
}
