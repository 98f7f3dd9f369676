use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tensorse_cli::commands::{self, Global};
use tensorse_cli::CliError;

#[derive(Parser)]
#[command(name = "tensorse", version, about = "Tensor-completion state estimation experiments")]
struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's base seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Fit schemes that fail the identifiability check.
    #[arg(long, global = true)]
    override_identifiability: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the feeder and write the state tensor, metadata and CSV.
    Simulate,
    /// Certify the configured sampling scheme(s); exit 2 when violated.
    Check,
    /// Write the scheme and observation mask of one run.
    Sample {
        #[arg(long, default_value_t = 0)]
        run: usize,
    },
    /// Fit one run and write the fit record.
    Fit {
        #[arg(long, default_value_t = 0)]
        run: usize,
    },
    /// Score the fit written by `fit`.
    Evaluate,
    /// Relative error of full-data fits for ranks 1..=k_max.
    SweepRank {
        #[arg(long)]
        k_max: Option<usize>,
    },
    /// Run every scenario of the config and write tables and curves.
    Run,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let g = Global {
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
        override_identifiability: cli.override_identifiability,
    };
    let result: Result<(), CliError> = match cli.command {
        Command::Simulate => commands::simulate(&g),
        Command::Check => commands::check(&g),
        Command::Sample { run } => commands::sample(&g, run),
        Command::Fit { run } => commands::fit(&g, run),
        Command::Evaluate => commands::evaluate(&g),
        Command::SweepRank { k_max } => commands::sweep_rank(&g, k_max),
        Command::Run => commands::run(&g).map(|_| ()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
