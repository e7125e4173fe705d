//! Command-line front end for the completeness diagnostics.
//!
//! Every run reads one TOML configuration, executes a single subcommand and
//! writes its reports into an output directory. Exit codes separate the
//! three ways a run can end: `0` when the requested analysis ran and passed,
//! `1` when it ran and a diagnostic failed (an assumption is violated, a
//! verdict stays inconclusive), `2` when the run never started because the
//! configuration or invocation is unusable. Outputs carry no timestamps and
//! all parallel reductions are ordered, so a rerun with the same
//! configuration produces byte-identical files at any worker count.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;
mod config;

use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] marketspan::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// How a completed run ends: clean, or with a failed diagnostic.
pub enum Outcome {
    Clean,
    Diagnostic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Parser)]
#[command(name = "marketspan", version, about = "Completeness diagnostics for two-asset diffusion markets")]
struct Cli {
    /// Path to the TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides the configured one.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Simulation seed; overrides the configured one.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads; zero runs on the caller thread.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Report format for the summary files.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Probe the standing assumptions and the coefficient hypotheses.
    Validate,
    /// Solve the pricing equation and report the start value and residual.
    Price,
    /// Decide completeness through the rank check or the weak pairing.
    Complete,
    /// Replicate a claim with the two traded assets along simulated paths.
    Hedge {
        /// Claim to replicate: derivative, call, put, digital, forward, one.
        #[arg(long, default_value = "digital")]
        target: String,
    },
    /// Run the whole pipeline on a stochastic volatility model.
    Flagship,
}

/// Resolved run context shared by every subcommand.
pub struct Context {
    pub config: RunConfig,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub workers: usize,
    pub format: Format,
}

fn resolve_workers(cli: Option<usize>, configured: usize) -> Result<usize, CliError> {
    if let Some(w) = cli {
        return Ok(w);
    }
    match std::env::var("MARKETSPAN_WORKERS") {
        Ok(raw) => raw.parse().map_err(|_| {
            CliError::Config(format!(
                "MARKETSPAN_WORKERS={raw} is not a worker count"
            ))
        }),
        Err(_) => Ok(configured),
    }
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    let config_path = cli.config.ok_or_else(|| {
        CliError::Config("no configuration given, pass --config <file>".to_string())
    })?;
    let config = RunConfig::from_path(&config_path)?;
    let out_dir = cli.out.unwrap_or_else(|| PathBuf::from(&config.output.dir));
    std::fs::create_dir_all(&out_dir)?;
    let seed = cli.seed.unwrap_or(config.mc.seed);
    let workers = resolve_workers(cli.workers, config.mc.workers)?;
    let ctx = Context {
        config,
        out_dir,
        seed,
        workers,
        format: cli.format,
    };
    match cli.command {
        Command::Validate => commands::cmd_validate(&ctx),
        Command::Price => commands::cmd_price(&ctx),
        Command::Complete => commands::cmd_complete(&ctx),
        Command::Hedge { target } => commands::cmd_hedge(&ctx, &target),
        Command::Flagship => commands::cmd_flagship(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Clean) => ExitCode::from(0),
        Ok(Outcome::Diagnostic) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
