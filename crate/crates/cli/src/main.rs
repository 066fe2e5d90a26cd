//! `effsel`: selective inference for effect modification from the command line.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 numerical failure.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod analyze;
mod output;
mod perturb;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use effsel::Error;

use output::Run;

#[derive(Debug, Parser)]
#[command(name = "effsel", version, about = "Selective inference for treatment effect modification")]
struct Cli {
    /// Master seed for nuisance fits, sample splits, λ draws and simulations.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for replication-level parallelism.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Directory receiving reports and the run manifest.
    #[arg(long, global = true, default_value = "effsel-out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Analyze a CSV file with one or more of the five methods.
    Analyze(analyze::AnalyzeArgs),
    /// Run simulation settings from a JSON config or a preset.
    Simulate(simulate::SimulateArgs),
    /// Perturbed linear-model experiment: false coverage against nuisance error rate.
    Perturb(perturb::PerturbArgs),
}

fn exit_code(e: &Error) -> u8 {
    if e.is_validation() {
        2
    } else {
        3
    }
}

fn execute(cli: &Cli) -> effsel::Result<PathBuf> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(Error::invalid("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| Error::invalid(format!("cannot start {jobs} workers: {e}")))?;
    }
    let (name, seed) = match &cli.command {
        Command::Analyze(_) => ("analyze", cli.seed.unwrap_or(0)),
        Command::Simulate(_) => ("simulate", cli.seed.unwrap_or(0)),
        Command::Perturb(_) => ("perturb", cli.seed.unwrap_or(0)),
    };
    let mut run = Run::start(name, &cli.out_dir, seed)?;
    match &cli.command {
        Command::Analyze(args) => analyze::run(args, seed, &mut run)?,
        Command::Simulate(args) => simulate::run(args, cli.seed, &mut run)?,
        Command::Perturb(args) => perturb::run(args, cli.seed, &mut run)?,
    }
    run.finish()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(manifest) => {
            eprintln!("wrote {}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
