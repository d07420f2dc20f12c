use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] otl_core::Error),
}

impl CliError {
    /// 2 config, 3 statistical invalidation, 4 numerical failure.
    pub fn exit_code(&self) -> u8 {
        use otl_core::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(E::InvalidArgument(_) | E::Io(_)) => 2,
            CliError::Core(E::Invalidated(_)) => 3,
            CliError::Core(E::NotConverged { .. } | E::NumericalFailure(_)) => 4,
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "otl", version, about = "Transport-map transfer learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample-complexity sweep: rates.csv and summary.json.
    Rates(RunArgs),
    /// Classification sweep: metrics.csv, improvement.csv and summary.json.
    Classify(RunArgs),
    /// Fit 1-D and d-D maps on a Gaussian pair and compare to the closed form.
    OtDemo(RunArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Rates(a) => commands::rates(&a.config, a.out.as_deref(), a.seed),
        Command::Classify(a) => commands::classify(&a.config, a.out.as_deref(), a.seed),
        Command::OtDemo(a) => commands::ot_demo(&a.config, a.out.as_deref(), a.seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("otl: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
