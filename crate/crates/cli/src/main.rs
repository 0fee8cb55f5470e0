//! Command-line driver: configuration parsing, run orchestration, and file
//! emission for the solver, the continuation sweep, saved-field diagnostics,
//! and the built-in self checks.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::commands::Ctx;
use crate::config::Config;

#[derive(Parser)]
#[command(name = "qtensor-lab", version, about = "Landau-de Gennes Q-tensor laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Minimize a single field at fixed coupling and save it
    Solve(RunArgs),
    /// Continuation sweep with rate certificates and reports
    Sweep(RunArgs),
    /// Diagnostics on a previously saved field
    Diagnose(RunArgs),
    /// Built-in self checks (closed forms, gradients, trivial fields)
    Verify(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Key=value configuration file
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if absent
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
    /// Pin the run as a reproducibility reference. Reductions are
    /// index-ordered, so results are bit-identical either way; the flag is
    /// recorded with the run.
    #[arg(long)]
    deterministic: bool,
    /// Increase log verbosity (repeatable)
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

fn run(args: &RunArgs, f: fn(&Ctx) -> Result<i32>) -> Result<i32> {
    if let Some(threads) = args.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("thread pool")?;
    }
    let text = std::fs::read_to_string(&args.config)
        .with_context(|| format!("reading config {}", args.config.display()))?;
    let config = Config::parse(&text)?;
    std::fs::create_dir_all(&args.out)
        .with_context(|| format!("creating output directory {}", args.out.display()))?;
    let ctx = Ctx {
        config: &config,
        out: &args.out,
        deterministic: args.deterministic,
        verbose: args.verbose,
    };
    f(&ctx)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (args, f): (&RunArgs, fn(&Ctx) -> Result<i32>) = match &cli.command {
        Command::Solve(a) => (a, commands::cmd_solve),
        Command::Sweep(a) => (a, commands::cmd_sweep),
        Command::Diagnose(a) => (a, commands::cmd_diagnose),
        Command::Verify(a) => (a, commands::cmd_verify),
    };
    match run(args, f) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
