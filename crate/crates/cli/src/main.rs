//! `guild`: run single trials, benchmarks, environment export and sample
//! heatmaps.
//!
//! Exit status: 0 on success, 1 on bad input or internal failure, 2 when a
//! single run finds no solution within its budget.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use crate::config::{RunConfig, OUTPUT_DIR_VAR};

#[derive(Debug, Parser)]
#[command(name = "guild", version, about = "Guided incremental local densification planner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one trial and stream cost improvements.
    Run(RunArgs),
    /// Run a trials x selectors grid and summarize sample efficiency.
    Bench(BenchArgs),
    /// Write a builtin environment to a file.
    Env(EnvArgs),
    /// Run one trial and write sample heatmap snapshots.
    Heatmap(RunArgs),
}

/// Flags shared by every trial-running command; each overrides the
/// corresponding config field.
#[derive(Debug, Args)]
struct TrialArgs {
    /// TOML config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Builtin environment: Forest, TwoWall, Trap, SE2Maze, ClutterR2..ClutterR7.
    #[arg(long)]
    env: Option<String>,
    /// Environment file, instead of a builtin.
    #[arg(long, conflicts_with = "env")]
    env_file: Option<PathBuf>,
    #[arg(long)]
    env_seed: Option<u64>,
    #[arg(long)]
    beacons: Option<usize>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    batch: Option<usize>,
    /// Sample budget per trial.
    #[arg(long)]
    samples: Option<usize>,
    /// Wall-clock budget per trial in seconds.
    #[arg(long)]
    seconds: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the effective config as TOML and exit.
    #[arg(long)]
    print_config: bool,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    trial: TrialArgs,
    /// Beacon selector: InformedSet, Uniform, Greedy or Bandit.
    #[arg(long)]
    selector: Option<String>,
    /// Planner seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Write heatmap snapshots.
    #[arg(long)]
    heatmap: bool,
    /// Samples between heatmap snapshots.
    #[arg(long)]
    snapshot_every: Option<usize>,
}

#[derive(Debug, Args)]
struct BenchArgs {
    #[command(flatten)]
    trial: TrialArgs,
    /// Trials per selector, seeds 0..trials.
    #[arg(long)]
    trials: Option<u64>,
    /// Comma-separated selectors.
    #[arg(long, value_delimiter = ',')]
    selectors: Option<Vec<String>>,
    /// Worker threads; 0 uses every core.
    #[arg(long)]
    threads: Option<usize>,
    /// Wall-clock budget for computing the reference cost.
    #[arg(long)]
    reference_seconds: Option<f64>,
    /// Spacing of the sample grid for the summary curves.
    #[arg(long)]
    grid_step: Option<usize>,
    /// End each trial once it reaches the reference cost.
    #[arg(long)]
    stop_on_convergence: bool,
}

#[derive(Debug, Args)]
struct EnvArgs {
    /// Builtin environment name.
    name: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
}

fn apply_trial_args(args: &TrialArgs) -> Result<RunConfig> {
    let mut c = match &args.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = std::env::var_os(OUTPUT_DIR_VAR) {
        c.output.directory = PathBuf::from(dir);
    }
    if let Some(name) = &args.env {
        c.environment.builtin = Some(name.clone());
        c.environment.file = None;
    }
    if let Some(path) = &args.env_file {
        c.environment.file = Some(path.clone());
        c.environment.builtin = None;
    }
    if let Some(v) = args.env_seed {
        c.environment.seed = v;
    }
    if let Some(v) = args.beacons {
        c.selector.beacons = v;
    }
    if let Some(v) = args.gamma {
        c.selector.gamma = v;
    }
    if let Some(v) = args.batch {
        c.planner.batch = v;
    }
    if let Some(v) = args.samples {
        c.planner.sample_budget = v;
    }
    if let Some(v) = args.seconds {
        c.planner.time_budget_seconds = Some(v);
    }
    if let Some(v) = &args.out {
        c.output.directory = v.clone();
    }
    Ok(c)
}

fn run_config(args: &RunArgs) -> Result<RunConfig> {
    let mut c = apply_trial_args(&args.trial)?;
    if let Some(v) = &args.selector {
        c.selector.kind = v.clone();
    }
    if let Some(v) = args.seed {
        c.planner.seed = v;
    }
    if args.heatmap {
        c.output.heatmap = true;
    }
    if let Some(v) = args.snapshot_every {
        c.output.snapshot_every = v;
    }
    Ok(c)
}

fn bench_config(args: &BenchArgs) -> Result<RunConfig> {
    let mut c = apply_trial_args(&args.trial)?;
    if let Some(v) = args.trials {
        c.bench.trials = v;
    }
    if let Some(v) = &args.selectors {
        c.bench.selectors = v.clone();
    }
    if let Some(v) = args.threads {
        c.bench.threads = v;
    }
    if let Some(v) = args.reference_seconds {
        c.bench.reference_seconds = v;
    }
    if let Some(v) = args.grid_step {
        c.bench.grid_step = v;
    }
    if args.stop_on_convergence {
        c.bench.stop_on_convergence = true;
    }
    Ok(c)
}

fn print_config(config: &RunConfig) -> Result<ExitCode> {
    config.validate()?;
    print!("{}", config.to_toml()?);
    Ok(ExitCode::SUCCESS)
}

fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run(args) | Command::Heatmap(args) if args.trial.print_config => print_config(&run_config(&args)?),
        Command::Bench(args) if args.trial.print_config => print_config(&bench_config(&args)?),
        Command::Run(args) => commands::run(&run_config(&args)?, false),
        Command::Heatmap(args) => commands::run(&run_config(&args)?, true),
        Command::Bench(args) => commands::bench(&bench_config(&args)?),
        Command::Env(args) => commands::env(&args.name, args.seed, &args.out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
