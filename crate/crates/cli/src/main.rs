//! `trigger-codesign`: solve, sweep, simulate and cross-check event-trigger /
//! estimator co-design problems described by a TOML config.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use trigger_codesign::Error;

#[derive(Parser, Debug)]
#[command(name = "trigger-codesign", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (TOML).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, global = true, value_name = "DIR", default_value = ".")]
    out: PathBuf,
    /// Monte Carlo seed; overrides `mc.seed`.
    #[arg(long, global = true, value_name = "U64")]
    seed: Option<u64>,
    /// Monte Carlo path count; overrides `mc.samples`.
    #[arg(long, global = true, value_name = "N")]
    samples: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the alternating design and write solution.json plus threshold tables.
    Solve,
    /// Compare symmetric and iterative costs over the `[sweep] mu` list.
    Sweep,
    /// Monte Carlo check of a solved design.
    Simulate {
        /// Solution record; defaults to `<out>/solution.json`.
        #[arg(long, value_name = "PATH")]
        solution: Option<PathBuf>,
    },
    /// Trigger optimized for the zero-bias predictor.
    Baseline,
    /// Reference solutions for small instances.
    Oracle,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Io(String),
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Io(m) => write!(f, "i/o error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Domain(_) | Error::InvalidSpec(_) | Error::OracleLimit(_) => {
                CliError::Config(e.to_string())
            }
            _ => CliError::Numerical(e.to_string()),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| CliError::Io(format!("{}: {e}", cli.out.display())))?;
    let config = match &cli.config {
        Some(path) => Some(config::ExperimentConfig::load(path)?),
        None => None,
    };
    let require = || {
        config
            .as_ref()
            .ok_or_else(|| CliError::Config("--config PATH is required".into()))
    };
    let mut mc = config.as_ref().map(|c| c.mc).unwrap_or_default();
    if let Some(seed) = cli.seed {
        mc.seed = seed;
    }
    if let Some(samples) = cli.samples {
        mc.samples = samples;
    }
    match &cli.command {
        Command::Solve => commands::solve(require()?, &cli.out),
        Command::Sweep => commands::sweep(require()?, &cli.out),
        Command::Simulate { solution } => {
            let path = solution
                .clone()
                .unwrap_or_else(|| cli.out.join("solution.json"));
            commands::simulate(&path, &mc, &cli.out)
        }
        Command::Baseline => commands::baseline(require()?, &cli.out),
        Command::Oracle => commands::oracle(require()?, &cli.out),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("trigger-codesign: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
