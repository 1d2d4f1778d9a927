use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use symlqr_cli::{run, Command};

/// Model-free LQR experiments on symmetric linear systems.
///
/// All physical inputs live in the TOML config; flags only pick the command,
/// config file, output directory and verbosity.
#[derive(Parser)]
#[command(name = "symlqr", version)]
struct Cli {
    /// Output directory (default: config `output_dir`, then $SYMLQR_OUT_DIR, then ./symlqr-out).
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
    /// More log output; repeat for more.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Only print errors.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Finite-horizon optimal control by the fixed-point iteration.
    SolveFh { config: PathBuf },
    /// Infinite-horizon feedback gain recovered from learned trajectories.
    SolveIh { config: PathBuf },
    /// Riccati reference solutions.
    Oracle { config: PathBuf },
    /// Monte Carlo check of unbiasedness and variance under noise.
    NoiseStudy { config: PathBuf },
    /// One plant experiment with a constant input.
    Simulate { config: PathBuf },
    /// Symmetry defects and system gains.
    CheckSymmetry { config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).format_timestamp(None).init();

    let (command, config) = match cli.command {
        Cmd::SolveFh { config } => (Command::SolveFh, config),
        Cmd::SolveIh { config } => (Command::SolveIh, config),
        Cmd::Oracle { config } => (Command::Oracle, config),
        Cmd::NoiseStudy { config } => (Command::NoiseStudy, config),
        Cmd::Simulate { config } => (Command::Simulate, config),
        Cmd::CheckSymmetry { config } => (Command::CheckSymmetry, config),
    };
    match run(command, &config, cli.out.as_deref()) {
        Ok(summary) => {
            log::info!("{} finished in {:.3} s", summary.command, summary.wall_time_s);
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
