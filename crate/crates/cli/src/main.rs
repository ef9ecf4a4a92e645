//! Command-line front end: run scenarios, benchmark suites, replay traces.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use push_mppi::scenarios::TraceLevel;

#[derive(Parser, Debug)]
#[command(
    name = "push-mppi",
    version,
    about = "Sampling-based MPC for planar pushing and navigation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run episodes of one scenario and write traces plus a summary.
    Run(RunArgs),
    /// Run several scenarios and write a machine-readable report.
    Bench(BenchArgs),
    /// Recompute metrics from saved traces and compare with the summary.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    n_runs: u64,
    /// Worker threads; overridden by PUSH_MPPI_THREADS.
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// off, ticks or full.
    #[arg(long, default_value = "ticks")]
    trace_level: TraceLevel,
    /// Pace episodes at the control rate and refuse scenarios whose solver is too slow for it.
    #[arg(long)]
    real_time: bool,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Scenario files; repeat the flag for several.
    #[arg(long, required = true, num_args = 1..)]
    scenario: Vec<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
pub struct ReplayArgs {
    /// Output directory of an earlier `run` or `bench`.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => commands::run(&a.scenario, &a.common),
        Command::Bench(a) => commands::bench(&a.scenario, &a.common),
        Command::Replay(a) => commands::replay(&a.out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code())
        }
    }
}
