//! `bmw`: runs, sweeps, capacity queries and the validation suite.
//!
//! Exit codes: 0 ok, 1 usage or configuration error, 2 diverged runs
//! present, 3 validation failure.

mod commands;
mod config;
mod validate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Format;

#[derive(Debug, Parser)]
#[command(name = "bmw", version, about = "Scheduling simulator for multi-queue systems with switching overhead")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one configuration under one or more policies.
    Run(RunArgs),
    /// Simulate a configuration over a list of alpha, beta_star or T_s values.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Axis to sweep: alpha, beta_star or T_s.
        #[arg(long)]
        axis: Option<String>,
        /// Comma-separated axis values.
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
    },
    /// Print the utilization factor and the schedule time shares.
    Capacity(SystemArgs),
    /// Run the invariant suites and print a JSON report.
    Validate {
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Slots simulated per trace-level check.
        #[arg(long, default_value_t = 200_000)]
        horizon: u64,
        /// Corrupt the interval log before checking it.
        #[arg(long)]
        negative_control: bool,
    },
}

#[derive(Debug, Clone, Args)]
pub struct SystemArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset name, S1 to S8.
    #[arg(long)]
    scenario: Option<String>,
    /// Target utilization factor (presets S3 to S8, or inline Bernoulli systems).
    #[arg(long)]
    beta_star: Option<f64>,
    /// Switching overhead T_s in slots.
    #[arg(long)]
    ts: Option<u32>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    system: SystemArgs,
    /// Comma-separated policies, each optionally with `:alpha`
    /// (e.g. `qbmw:0.001,vfmw:0.99,maxweight`).
    #[arg(long, value_delimiter = ',')]
    policy: Option<Vec<String>>,
    /// Alpha for policies given without one.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    horizon: Option<u64>,
    #[arg(long)]
    warmup: Option<u64>,
    /// Number of seeds, starting at --base-seed.
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    base_seed: Option<u64>,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run(args) => commands::run(&args, None),
        Command::Sweep { run, axis, values } => commands::run(&run, Some((axis, values))),
        Command::Capacity(args) => commands::capacity(&args),
        Command::Validate { seed, horizon, negative_control } => validate::run(seed, horizon, negative_control),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
