//! `covertseq`: thresholds, covert probabilities, throughput optima and
//! figure data for covert communication against sequential detectors.

mod commands;
mod config;
mod error;
mod figure;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use covertseq::optimizer::Method;

use crate::commands::OptimizeOptions;
use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::figure::FigureId;

#[derive(Debug, Parser)]
#[command(name = "covertseq", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON experiment configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    experiment: ExperimentConfig,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig, CliError> {
        ExperimentConfig::load(self.config.as_deref(), &self.experiment)
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Detector thresholds for a target run length to false alarm.
    Calibrate {
        #[command(flatten)]
        common: Common,
        /// Check the run length to false alarm by simulation.
        #[arg(long)]
        verify: bool,
    },
    /// Covert probability per (test, q, L, ν) as CSV.
    Covert {
        #[command(flatten)]
        common: Common,
    },
    /// Throughput-optimal power and duration.
    Optimize {
        #[command(flatten)]
        common: Common,
        /// Default: exhaustive for shewhart, algorithm1 otherwise.
        #[arg(long)]
        method: Option<Method>,
        /// Write every evaluated (q, L, Q, I) point to this CSV file.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Report throughput in bits instead of nats.
        #[arg(long)]
        bits: bool,
    },
    /// Data for one figure, one CSV per test in the output directory.
    Figure {
        #[arg(value_enum)]
        id: FigureId,
        #[command(flatten)]
        common: Common,
        /// Report throughput in bits instead of nats.
        #[arg(long)]
        bits: bool,
    },
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("COVERTSEQ_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Config(format!("COVERTSEQ_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("cannot size the thread pool: {e}")))
}

fn run(cli: Cli) -> Result<(), CliError> {
    configure_threads()?;
    match cli.command {
        Command::Calibrate { common, verify } => commands::calibrate(&common.load()?, verify),
        Command::Covert { common } => commands::covert(&common.load()?),
        Command::Optimize {
            common,
            method,
            trace,
            bits,
        } => commands::optimize(
            &common.load()?,
            &OptimizeOptions {
                method,
                trace: trace.as_deref(),
                bits,
            },
        ),
        Command::Figure { id, common, bits } => {
            for p in figure::figure(&common.load()?, id, bits)? {
                println!("{}", p.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
