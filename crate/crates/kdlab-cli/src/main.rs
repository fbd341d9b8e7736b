//! `kdlab` command line: dataset generation, training and distillation,
//! experiment harnesses, diagnostics, and SVG plots.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 input-data error,
//! 3 runtime failure.

mod commands;
mod config;

use clap::{Args, Parser, Subcommand};
use commands::Context;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "kdlab", version, about = "Knowledge-distillation laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config for this subcommand.
    #[arg(long)]
    config: PathBuf,
    /// Directory for generated files.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Override the config's primary seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct ParallelArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of runs to execute in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic Gaussian-mixture dataset CSV.
    GenData(CommonArgs),
    /// Train a classifier with cross-entropy (no teacher).
    Train(CommonArgs),
    /// Distill a student from teacher checkpoint(s).
    Distill(CommonArgs),
    /// Run a chain of stages where students become teachers.
    Sequential(CommonArgs),
    /// Train one student per (alpha, tau) grid cell.
    Sweep(ParallelArgs),
    /// Label-noise study: noisy teacher plus students per temperature.
    Noisy(ParallelArgs),
    /// TLD-quantile bundle: CE and distilled students on a data subset.
    Bundles(CommonArgs),
    /// Emit diagnostic CSVs for a checkpoint over a dataset.
    Diagnose(CommonArgs),
    /// Render a CSV as an SVG figure.
    Plot(CommonArgs),
}

fn context(common: &CommonArgs, jobs: usize) -> Context {
    Context {
        out_dir: common.out.clone(),
        seed_override: common.seed,
        jobs,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version are not errors.
            if e.use_stderr() {
                eprintln!("kdlab: {e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };

    let result = match &cli.command {
        Command::GenData(c) => commands::gen_data(&context(c, 1), &c.config),
        Command::Train(c) => commands::train_cmd(&context(c, 1), &c.config, false),
        Command::Distill(c) => commands::train_cmd(&context(c, 1), &c.config, true),
        Command::Sequential(c) => commands::sequential_cmd(&context(c, 1), &c.config),
        Command::Sweep(p) => commands::sweep_cmd(&context(&p.common, p.jobs), &p.common.config),
        Command::Noisy(p) => commands::noisy_cmd(&context(&p.common, p.jobs), &p.common.config),
        Command::Bundles(c) => commands::bundles_cmd(&context(c, 1), &c.config),
        Command::Diagnose(c) => commands::diagnose_cmd(&context(c, 1), &c.config),
        Command::Plot(c) => commands::plot_cmd(&context(c, 1), &c.config),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("kdlab: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
