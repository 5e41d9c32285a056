use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vl_intent_cli::{commands, Common};

#[derive(Debug, Parser)]
#[command(
    name = "vl-intent",
    version,
    about = "Intent-aware target tracking with virtual-leader models"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a ground-truth track and noisy measurements.
    Simulate {
        #[command(flatten)]
        common: Common,
    },
    /// Filter a measurement file and write per-step estimates.
    Track {
        #[command(flatten)]
        common: Common,
    },
    /// Score methods on simulated realisations.
    Benchmark {
        #[command(flatten)]
        common: Common,
        /// Comma-separated method names.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
        #[arg(long)]
        realisations: Option<usize>,
    },
    /// Probability that the destination lies in each region, per step.
    QueryRegion {
        #[command(flatten)]
        common: Common,
    },
    /// Destination density at each point, per step.
    QueryPoint {
        #[command(flatten)]
        common: Common,
    },
}

fn run(cli: Cli) -> Result<(), vl_intent_cli::CliError> {
    match cli.command {
        Command::Simulate { common } => commands::simulate(&common),
        Command::Track { common } => commands::track(&common, commands::QueryMode::Configured),
        Command::Benchmark {
            common,
            methods,
            realisations,
        } => commands::benchmark(&common, &methods, realisations),
        Command::QueryRegion { common } => commands::track(&common, commands::QueryMode::Regions),
        Command::QueryPoint { common } => commands::track(&common, commands::QueryMode::Points),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
