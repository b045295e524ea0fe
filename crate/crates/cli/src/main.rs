mod commands;
mod config;
mod plot;
mod reproduce;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use config::ConfigError;

/// Homodyne steering witnesses: sweeps, binned optimization, sampling and
/// estimation from data.
#[derive(Parser)]
#[command(name = "steerlab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Continuum witnesses over a state sweep (witness.csv).
    Witness(Common),
    /// Optimized binned witnesses with a continuum reference (binned.csv).
    Binned(Common),
    /// Rejection-sampled qq/pp homodyne datasets (samples.csv index).
    Sample(Common),
    /// Data-driven witnesses from dataset pairs (estimate.csv).
    Estimate(Common),
    /// Canned figure sweep (fig<id>.csv and fig<id>.svg).
    Reproduce(Common),
}

#[derive(Args)]
struct Common {
    /// JSON configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

fn run(cli: Cli) -> Result<()> {
    let (command, common) = match &cli.command {
        Command::Witness(c) => ("witness", c),
        Command::Binned(c) => ("binned", c),
        Command::Sample(c) => ("sample", c),
        Command::Estimate(c) => ("estimate", c),
        Command::Reproduce(c) => ("reproduce", c),
    };
    let plan = config::load(&common.config, common.seed)?;
    if let Some(k) = common.threads {
        if k == 0 {
            return Err(ConfigError("--threads must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new().num_threads(k).build_global()?;
    }
    std::fs::create_dir_all(&common.out)
        .map_err(|e| ConfigError(format!("cannot create {}: {e}", common.out.display())))?;
    let out = &common.out;
    match command {
        "witness" => commands::witness(&plan, out),
        "binned" => commands::binned(&plan, out),
        "sample" => commands::sample(&plan, out),
        "estimate" => commands::estimate(&plan, out),
        _ => reproduce::run(&plan, out),
    }
    .with_context(|| format!("{command} failed"))
}

/// 2 for configuration and input problems, 3 for numerical failures.
fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<ConfigError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<steerlab::Error>() {
            return match e {
                steerlab::Error::Io(_) | steerlab::Error::Parse { .. } => 2,
                _ => 3,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
