use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use leafwise::experiment;

#[derive(Parser)]
#[command(version, about = "Batch runner for leafwise Lyapunov estimators")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Overrides run.seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List models, cocycle kinds, estimators and which combinations run.
    Catalog,
    /// Print a minimal config for a model, cocycle and estimator.
    Template {
        #[arg(long)]
        model: String,
        #[arg(long)]
        cocycle: String,
        #[arg(long)]
        estimator: String,
    },
}

fn main() -> ExitCode {
    let result = match Cli::parse().command {
        Command::Run { config, seed } => experiment::run(&config, seed).map(|r| {
            for w in &r.outcome.warnings {
                eprintln!("warning: {w}");
            }
            println!("{}", r.output.display());
        }),
        Command::Catalog => {
            print!("{}", experiment::catalog());
            Ok(())
        }
        Command::Template { model, cocycle, estimator } => experiment::minimal_config(&model, &cocycle, &estimator).map(|t| print!("{t}")),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
