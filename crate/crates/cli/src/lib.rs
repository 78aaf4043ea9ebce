//! `scencov`: batch front end for coverage fitting, meta model fitting,
//! acquisition planning and synthetic data.
//!
//! Exit codes: 0 success, 1 output failure, 2 input or contract error,
//! 3 fit non-convergence (files still written), 4 infeasible plan (report
//! still written).

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

pub mod commands;
pub mod config;
pub mod io;

#[derive(Debug, Parser)]
#[command(name = "scencov", version, about = "Scenario coverage and acquisition planning")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the seed of the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Bootstrap coverage fit of a scenario set.
    Coverage {
        /// Parameter-set CSV.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Generation meta model from mined scenarios and a generator.
    Metamodel {
        /// Mined parameter-set CSV.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Cost-optimal acquisition plan and optional sensitivity sweep.
    Plan {
        /// Mining meta model JSON.
        #[arg(long)]
        mining: Option<PathBuf>,
        /// Generation meta model JSON.
        #[arg(long)]
        generation: Option<PathBuf>,
    },
    /// Synthetic parameter sets.
    Synth {
        /// Seed data for the degradable source.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Overrides `[synth] count`.
        #[arg(long)]
        count: Option<usize>,
    },
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    /// No model could be fitted at all.
    #[error("{0}")]
    NotConverged(String),
    #[error("cannot write {path}: {message}")]
    Output { path: PathBuf, message: String },
}

impl CliError {
    pub fn input(msg: impl Into<String>) -> Self {
        CliError::Input(msg.into())
    }

    pub fn output(path: &Path, err: impl std::fmt::Display) -> Self {
        CliError::Output {
            path: path.to_path_buf(),
            message: err.to_string(),
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::NotConverged(_) => 3,
            CliError::Output { .. } => 1,
        }
    }
}

impl From<scenario_coverage::Error> for CliError {
    fn from(e: scenario_coverage::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

/// How a command that wrote its outputs ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    NotConverged,
    Infeasible,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Success => 0,
            Outcome::NotConverged => 3,
            Outcome::Infeasible => 4,
        }
    }
}

pub fn run(cli: Cli) -> Result<Outcome, CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::input("--threads must be positive"));
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            tracing::warn!(%e, "thread pool already initialized");
        }
    }
    let config_path = cli.config.ok_or_else(|| CliError::input("missing --config <path>"))?;
    let cfg = config::load(&config_path, cli.seed)?;
    let out = cli
        .out
        .or_else(|| cfg.raw.paths.out.clone())
        .unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out).map_err(|e| CliError::output(&out, e))?;
    let pick = |flag: Option<PathBuf>, fallback: &Option<PathBuf>, what: &str| {
        flag.or_else(|| fallback.clone())
            .ok_or_else(|| CliError::input(format!("missing {what}")))
    };
    let paths = cfg.raw.paths.clone();
    match cli.command {
        Command::Coverage { input } => commands::coverage(&cfg, &pick(input, &paths.input, "--input <csv>")?, &out),
        Command::Metamodel { input } => commands::metamodel(&cfg, &pick(input, &paths.input, "--input <csv>")?, &out),
        Command::Plan { mining, generation } => commands::plan(
            &cfg,
            &pick(mining, &paths.mining, "--mining <json>")?,
            &pick(generation, &paths.generation, "--generation <json>")?,
            &out,
        ),
        Command::Synth { input, count } => commands::synth(&cfg, input.or(paths.input).as_deref(), count, &out),
    }
}

/// Runs and maps the result to a process exit code, reporting errors on
/// stderr.
pub fn main_with(cli: Cli) -> ExitCode {
    match run(cli) {
        Ok(outcome) => ExitCode::from(outcome.exit_code()),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
