//! Command-line front end: configuration, orchestration and data files.

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub mod commands;
pub mod config;

pub use config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("run failed: {0}")]
    Runtime(String),
}

pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

/// Exit status for `failures` failed tests: 0, or `2 + failures` capped at 255
/// so that it never collides with the error codes.
pub fn test_exit_code(failures: usize) -> i32 {
    if failures == 0 {
        0
    } else {
        (2 + failures).min(255) as i32
    }
}

#[derive(Debug, Parser)]
#[command(name = "essf", version, about = "Simulate and check fragmentations of marked partitions")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides `output.dir`.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for replicates (defaults to all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Overrides `h_grid`.
    #[arg(long = "h-grid", global = true)]
    pub h_grid: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate genealogies and write snapshots and tree dumps.
    Simulate,
    /// Tabulate cumulants and martingale means.
    Diagnose,
    /// Run statistical checks of the simulator.
    Test,
}

/// Loads the configuration named by `cli` and applies command-line overrides.
pub fn load_config(cli: &Cli) -> Result<RunConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Validation("--config is required".into()))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("reading {}: {e}", path.display())))?;
    let mut config = RunConfig::from_toml_str(&text)?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(dir) = &cli.out {
        config.output.dir = dir.clone();
    }
    if let Some(h) = cli.h_grid {
        config.h_grid = h;
    }
    config.validate()?;
    Ok(config)
}

/// Runs `cli` and returns the process exit code.
pub fn run(cli: &Cli) -> Result<i32, CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Validation("--jobs must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let config = load_config(cli)?;
    match cli.command {
        Command::Simulate => commands::simulate(&config).map(|()| 0),
        Command::Diagnose => commands::diagnose(&config).map(|()| 0),
        Command::Test => commands::test(&config).map(test_exit_code),
    }
}
