//! Command-line front end: generate configurations, run geometry scans,
//! corrector solves, path simulations, and scaling experiments.
//!
//! Exit codes: 0 success, 2 configuration/validation error, 3 runtime
//! failure, 4 check failure under `--check`.

mod artifacts;
mod commands;
mod runconfig;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use artifacts::ArtifactMeta;
use commands::{
    cmd_corrector, cmd_generate, cmd_geometry, cmd_qip, cmd_report, cmd_simulate, Ctx, Outcome,
};
use percohom::Error;
use runconfig::RunConfig;

#[derive(Parser)]
#[command(
    name = "percohom",
    version,
    about = "Percolation cluster homogenization toolkit"
)]
struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override the seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Evaluate configured pass criteria and exit 4 on failure.
    #[arg(long, global = true)]
    check: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a point configuration and write it to disk.
    Generate,
    /// Volume-regularity and isoperimetric diagnostics.
    Geometry,
    /// Solve harmonic coordinates and the effective matrix.
    Corrector,
    /// Simulate diffusion paths.
    Simulate,
    /// Run the full diffusive-scaling experiment.
    Qip,
    /// Summarize artifacts already in the output directory.
    Report,
}

fn run() -> Result<Outcome, CliError> {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    let config_path = cli
        .config
        .ok_or_else(|| CliError::Config("--config <file> is required".into()))?;
    let raw = std::fs::read(&config_path)
        .map_err(|e| CliError::Config(format!("{}: {e}", config_path.display())))?;
    let text = String::from_utf8_lossy(&raw);
    let mut cfg = RunConfig::parse(&text).map_err(CliError::Config)?;
    if let Some(seed) = cli.seed {
        cfg.process.seed = seed;
    }
    let meta = ArtifactMeta::new(&raw, cfg.process.seed, cfg.resolved_toml());
    let ctx = Ctx {
        cfg: &cfg,
        out_dir: PathBuf::from(&cfg.output.dir),
        meta,
        check: cli.check,
    };
    let dim = cfg.process.dim;
    let dispatch = |ctx: &Ctx| -> Result<Outcome, Error> {
        match (&cli.command, dim) {
            (Command::Generate, 2) => cmd_generate::<2>(ctx),
            (Command::Generate, 3) => cmd_generate::<3>(ctx),
            (Command::Geometry, 2) => cmd_geometry::<2>(ctx),
            (Command::Geometry, 3) => cmd_geometry::<3>(ctx),
            (Command::Corrector, 2) => cmd_corrector::<2>(ctx),
            (Command::Corrector, 3) => cmd_corrector::<3>(ctx),
            (Command::Simulate, 2) => cmd_simulate::<2>(ctx),
            (Command::Simulate, 3) => cmd_simulate::<3>(ctx),
            (Command::Qip, 2) => cmd_qip::<2>(ctx),
            (Command::Qip, 3) => cmd_qip::<3>(ctx),
            (Command::Report, _) => cmd_report(ctx),
            (_, d) => Err(Error::invalid(format!("unsupported dimension {d}"))),
        }
    };
    dispatch(&ctx).map_err(|e| match e {
        Error::InvalidParameter(_) | Error::Parse { .. } => CliError::Config(e.to_string()),
        other => CliError::Runtime(other.to_string()),
    })
}

enum CliError {
    Config(String),
    Runtime(String),
}

fn main() -> ExitCode {
    match run() {
        Ok(outcome) => {
            if outcome.check_failures.is_empty() {
                ExitCode::SUCCESS
            } else {
                for f in &outcome.check_failures {
                    eprintln!("check failed: {f}");
                }
                ExitCode::from(4)
            }
        }
        Err(CliError::Config(msg)) => {
            eprintln!("configuration error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("runtime error: {msg}");
            ExitCode::from(3)
        }
    }
}
