//! `mpsntk`: command-line harness exposing every experiment as a
//! config-driven subcommand with deterministic outputs.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical abort,
//! 1 anything else (I/O). The environment variable `MPSNTK_SEED`
//! overrides the config's base seed.

mod config;
mod experiments;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{load_config, ExperimentKind};
use mpsntk_core::error::Error;

#[derive(Parser)]
#[command(name = "mpsntk", version, about = "Tensor-chain learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config file (flat `key = value` text).
    #[arg(long)]
    config: PathBuf,
    /// Worker threads for seeded-trial parallelism (default sequential).
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Overwrite an existing run directory.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Empirical-vs-analytic kernel error across bond dimensions.
    NtkConverge(RunArgs),
    /// Smallest eigenvalue of the analytic kernel on random datasets.
    PdCheck(RunArgs),
    /// Train one chain by gradient flow on a squared-error task.
    RmseFlow(RunArgs),
    /// Parameter sup-drift during training across bond dimensions.
    LazyTrain(RunArgs),
    /// Born machine likelihood flow over binary strings.
    BornFlow(RunArgs),
    /// Partition-function distribution study.
    ZDist(RunArgs),
    /// Response distribution against the limit law.
    GpTest(RunArgs),
    /// Linear-network ensemble expansion against direct contraction.
    EnsembleCheck(RunArgs),
    /// Schema and guard checks only; prints one diagnostic per line.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            let code = match &e {
                Error::Config(_) | Error::Shape(_) | Error::Capacity(_) | Error::Domain(_)
                | Error::Input(_) | Error::Format(_) => 2u8,
                Error::Numerical(_) | Error::Singular(_) => 3u8,
                Error::Io(_) => 1u8,
            };
            eprintln!("error: {e}");
            ExitCode::from(code)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, Error> {
    let (kind, args) = match cli.command {
        Command::NtkConverge(a) => (ExperimentKind::NtkConverge, a),
        Command::PdCheck(a) => (ExperimentKind::PdCheck, a),
        Command::RmseFlow(a) => (ExperimentKind::RmseFlow, a),
        Command::LazyTrain(a) => (ExperimentKind::LazyTrain, a),
        Command::BornFlow(a) => (ExperimentKind::BornFlow, a),
        Command::ZDist(a) => (ExperimentKind::ZDist, a),
        Command::GpTest(a) => (ExperimentKind::GpTest, a),
        Command::EnsembleCheck(a) => (ExperimentKind::EnsembleCheck, a),
        Command::Validate { config } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", config.display())))?;
            return match load_config(&text, None, std::env::var("MPSNTK_SEED").ok().as_deref()) {
                Ok(_) => Ok(ExitCode::SUCCESS),
                Err(diags) => {
                    for d in diags {
                        println!("{d}");
                    }
                    Ok(ExitCode::from(2))
                }
            };
        }
    };

    let text = std::fs::read_to_string(&args.config)
        .map_err(|e| Error::Config(format!("cannot read {}: {e}", args.config.display())))?;
    let cfg = match load_config(&text, Some(kind), std::env::var("MPSNTK_SEED").ok().as_deref()) {
        Ok(cfg) => cfg,
        Err(diags) => {
            let first = diags.first().map(|d| d.to_string()).unwrap_or_default();
            return Err(Error::Config(format!("{} ({} problem(s) total)", first, diags.len())));
        }
    };

    if args.threads == 0 {
        return Err(Error::Config("threads: must be >= 1".into()));
    }
    // Trials run in parallel only when more than one worker is requested;
    // results are reduced in trial order either way.
    rayon::ThreadPoolBuilder::new()
        .num_threads(args.threads)
        .build_global()
        .map_err(|e| Error::Config(format!("threads: cannot build worker pool: {e}")))?;

    let outcome = experiments::run(&cfg, args.force)?;
    println!("wrote {} artifact(s) to {}", outcome.artifacts.len(), outcome.dir.display());
    Ok(ExitCode::SUCCESS)
}
