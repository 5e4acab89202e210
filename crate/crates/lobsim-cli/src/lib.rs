//! Command-line pipeline over the `lobsim` library.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 missing or
//! malformed data, 3 a violated internal invariant.

pub mod commands;
pub mod config;
pub mod svg;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use thiserror::Error;

use crate::commands::Ctx;
use crate::config::{ConfigError, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Data(String),
    #[error("missing artifact {0}; run the upstream stage first")]
    MissingArtifact(PathBuf),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Config(_) => 1,
            CliError::Data(_) | CliError::MissingArtifact(_) | CliError::Io(_) => 2,
            CliError::Invariant(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "lobsim", version, about = "Limit order book fill and reversal laboratory")]
pub struct Cli {
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Artifact directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for the threshold sweep.
    #[arg(long, global = true, default_value_t = 1)]
    pub threads: usize,
    #[command(subcommand)]
    pub cmd: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Generate a synthetic event log.
    Synth,
    /// Replay the log with one probe order per side.
    Experiment,
    /// Fill-probability surface and plane fit.
    FitSurface,
    /// Markout table and fill-frequency curve.
    Markouts,
    /// Baseline maker and taker strategies.
    Backtest,
    /// Reversal classifier.
    Train,
    /// Reversal-gated strategies over a threshold grid.
    Sweep,
    /// Figures and tables.
    Report,
    /// Every stage in order.
    All,
}

fn dispatch(cmd: Command, ctx: &Ctx) -> Result<(), CliError> {
    use commands as c;
    match cmd {
        Command::Synth => c::synth(ctx),
        Command::Experiment => c::experiment(ctx),
        Command::FitSurface => c::fit_surface(ctx),
        Command::Markouts => c::markouts(ctx),
        Command::Backtest => c::backtest(ctx),
        Command::Train => c::train(ctx),
        Command::Sweep => c::sweep(ctx),
        Command::Report => c::report(ctx),
        Command::All => {
            if ctx.cfg.input.is_none() {
                c::synth(ctx)?;
            }
            c::experiment(ctx)?;
            c::fit_surface(ctx)?;
            c::markouts(ctx)?;
            c::backtest(ctx)?;
            c::train(ctx)?;
            c::sweep(ctx)?;
            c::report(ctx)
        }
    }
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if cli.threads == 0 {
        return Err(CliError::Usage("--threads must be at least 1".into()));
    }
    let ctx = Ctx {
        cfg,
        out: cli.out,
        threads: cli.threads,
    };
    std::fs::create_dir_all(&ctx.out)?;
    dispatch(cli.cmd, &ctx)
}

/// Parses arguments, runs, and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
