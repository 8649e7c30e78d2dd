use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use clinagent_cli::config::Overrides;
use clinagent_cli::{cmd_replay, cmd_run, cmd_validate, CliError};
use clinagent_core::evalkit::DatasetKind;

#[derive(Parser)]
#[command(name = "clinagent", version, about = "Run and inspect medical multi-agent pipeline benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a pipeline as described by a run config.
    Run {
        config: PathBuf,
        #[arg(long)]
        sample_seed: Option<u64>,
        #[arg(long)]
        fold_seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Print a persisted transcript as a dialogue.
    Replay { path: PathBuf },
    /// Check a dataset file without running anything.
    Validate {
        path: PathBuf,
        #[arg(long, value_parser = parse_kind)]
        kind: DatasetKind,
    },
}

fn parse_kind(s: &str) -> Result<DatasetKind, String> {
    s.parse()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut stdout = io::stdout().lock();
    let result: Result<(), CliError> = match cli.command {
        Command::Run {
            config,
            sample_seed,
            fold_seed,
            workers,
            output_dir,
        } => {
            let overrides = Overrides {
                sample_seed,
                fold_seed,
                workers,
                output_dir,
            };
            cmd_run(&config, &overrides, &mut stdout).map(drop)
        }
        Command::Replay { path } => cmd_replay(&path, &mut stdout),
        Command::Validate { path, kind } => cmd_validate(&path, kind, &mut stdout).map(drop),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
