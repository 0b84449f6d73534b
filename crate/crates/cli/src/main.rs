//! `locload` command-line front end.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

use config::{CheckFailed, Usage};

#[derive(Debug, Parser)]
#[command(name = "locload", version, about = "Locality-aware data loading toolkit")]
struct Cli {
    /// Seed for every random stream of the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Flat TOML file with parameter values; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Write the fully resolved parameters to this TOML file.
    #[arg(long, global = true)]
    save_config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Epoch cost table from the analytical model.
    Model(commands::model::Args),
    /// Balancing traffic of locality-aware batches.
    Imbalance(commands::imbalance::Args),
    /// Transfer schedules for per-learner sample counts.
    Balance(commands::balance::Args),
    /// Loader throughput over a grid of workers and threads.
    Bench(commands::bench::Args),
    /// Compare training trajectories across distribution schemes.
    Equiv(commands::equiv::Args),
    /// Write a synthetic file-per-sample dataset.
    GenData(commands::gen_data::Args),
    /// Epoch cost curves with simulated balancing traffic.
    Simulate(commands::simulate::Args),
}

pub struct Common {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub config: Option<PathBuf>,
    pub save_config: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = Common {
        seed: cli.seed,
        out: cli.out,
        config: cli.config,
        save_config: cli.save_config,
    };
    let result = match cli.command {
        Command::Model(a) => commands::model::run(&common, a),
        Command::Imbalance(a) => commands::imbalance::run(&common, a),
        Command::Balance(a) => commands::balance::run(&common, a),
        Command::Bench(a) => commands::bench::run(&common, a),
        Command::Equiv(a) => commands::equiv::run(&common, a),
        Command::GenData(a) => commands::gen_data::run(&common, a),
        Command::Simulate(a) => commands::simulate::run(&common, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<CheckFailed>().is_some() {
        3
    } else if err.downcast_ref::<Usage>().is_some()
        || err
            .downcast_ref::<locload::Error>()
            .is_some_and(locload::Error::is_invalid_input)
    {
        2
    } else {
        1
    }
}
