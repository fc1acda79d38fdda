//! Batch runner for scoring-rule, divergence, risk-estimation, and
//! bandwidth-selection experiments.
//!
//! Each subcommand reads one TOML configuration, runs deterministically
//! (fixed seeds included), and writes a comma-separated table with a
//! header row and 17-significant-digit floats, so reruns are
//! byte-identical. Exit status: 0 when every check in the requested
//! experiment passes, 1 on failed checks or computation errors, 2 on
//! configuration or usage errors.

mod config;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use run::{AppError, RunResult};

#[derive(Parser)]
#[command(
    name = "steinscore",
    about = "Scoring-rule and unbiased-risk experiment runner",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Overrides the seed from the configuration file
    #[arg(long)]
    seed: Option<u64>,
    /// Writes the table here instead of the configured path (or stdout)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Caps the compute thread count
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluates a scoring rule at listed points
    ScoreEval {
        /// Experiment configuration (TOML)
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Tabulates divergences between density pairs by every route
    DivergenceTable {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Paired Monte Carlo comparison of the risk estimate and the true risk
    SureExperiment {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Cross-validated bandwidth selection for a kernel density estimate
    Bandwidth {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Runs the built-in invariant checks and tabulates the outcomes
    CheckSuite {
        /// Optional configuration (seed, output path)
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn read_config_text(path: &PathBuf) -> Result<String, AppError> {
    std::fs::read_to_string(path)
        .map_err(|e| AppError::Config(format!("reading {}: {e}", path.display())))
}

fn load<T: serde::de::DeserializeOwned>(path: &PathBuf) -> Result<T, AppError> {
    config::parse(&read_config_text(path)?)
        .map_err(|e| AppError::Config(format!("{}: {e}", path.display())))
}

fn apply_thread_cap(common: &CommonArgs) -> Result<(), AppError> {
    if let Some(threads) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| AppError::Config(format!("--threads: {e}")))?;
    }
    Ok(())
}

fn dispatch(cli: Cli) -> RunResult {
    match cli.command {
        Command::ScoreEval { config, common } => {
            apply_thread_cap(&common)?;
            run::score_eval(load(&config)?, &common.out)
        }
        Command::DivergenceTable { config, common } => {
            apply_thread_cap(&common)?;
            run::divergence_table(load(&config)?, common.seed, &common.out)
        }
        Command::SureExperiment { config, common } => {
            apply_thread_cap(&common)?;
            run::sure_experiment(load(&config)?, common.seed, &common.out)
        }
        Command::Bandwidth { config, common } => {
            apply_thread_cap(&common)?;
            run::bandwidth(load(&config)?, common.seed, &common.out)
        }
        Command::CheckSuite { config, common } => {
            apply_thread_cap(&common)?;
            let parsed = match &config {
                Some(path) => load(path)?,
                None => config::CheckSuiteConfig::default(),
            };
            run::check_suite(parsed, common.seed, &common.out)
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(AppError::Config(message)) => {
            eprintln!("configuration error: {message}");
            ExitCode::from(2)
        }
        Err(AppError::Run(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}
