//! `spa`: batch frontend for probability-of-agreement studies.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod error;
mod output;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Run;
use crate::config::RunConfig;
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "spa", version, about = "Probability of agreement for spatial and spatiotemporal fields")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed for simulation; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 uses every core).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate replicate fields from [model] on [grid].
    Simulate {
        #[arg(long)]
        replicates: Option<usize>,
    },
    /// Fit a spatiotemporal model to each field file and summarize.
    Fit {
        /// Field file or directory; overrides [fit].input.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Evaluate probability-of-agreement curves.
    Pa,
    /// Test H0: psi = psi0.
    Test,
    /// Turn a directory of images into a G_cc field.
    Gcc,
    /// Detrend a field and compute its empirical variogram.
    Variogram {
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> CliResult<String> {
    let cfg = RunConfig::load(cli.config.as_deref())?;
    let run = Run::new(cfg, cli.seed, cli.jobs, cli.out)?;
    match cli.command {
        Command::Simulate { replicates } => commands::simulate(&run, replicates),
        Command::Fit { input } => commands::fit_fields(&run, input),
        Command::Pa => commands::pa(&run),
        Command::Test => commands::test(&run),
        Command::Gcc => commands::gcc(&run),
        Command::Variogram { input } => commands::variogram(&run, input),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(report) => {
            println!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
