//! `topoid`: simulate networks, estimate Markov parameters, check
//! identifiability, reconstruct the interconnection matrix and evaluate it.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::{Context, EvaluateArgs};
use crate::config::ExperimentConfig;
use crate::error::CliError;

#[derive(Parser)]
#[command(name = "topoid", version, about = "Topology identification for networks of linear systems")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides every seed in the configuration
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Solve row blocks in parallel (blockwise solver)
    #[arg(long, global = true)]
    parallel: bool,
    /// Output directory; overrides `output_dir` in the configuration
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the network; writes trajectory.csv and network.json
    Simulate,
    /// Estimate Markov parameters from data; writes markov.json
    EstimateMarkov,
    /// Run the identifiability tests; writes check.json
    Check,
    /// Reconstruct Q; writes solve_report.json and the topology
    Identify,
    /// Compare an estimate with the true network; writes metrics.json, heatmap.csv and sweep.csv
    Evaluate {
        /// Network JSON with the true Q
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Solve report JSON produced by `identify`
        #[arg(long)]
        estimate: Option<PathBuf>,
        /// Threshold for the estimated topology
        #[arg(long)]
        gamma: Option<f64>,
    },
}

fn load_config(common: &Common) -> Result<Option<ExperimentConfig>, CliError> {
    let Some(path) = &common.config else { return Ok(None) };
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = common.seed {
        cfg.override_seed(seed);
    }
    Ok(Some(cfg))
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let cfg = load_config(&cli.common)?;
    let output = cli
        .common
        .output
        .clone()
        .or_else(|| cfg.as_ref().map(|c| c.output_dir.clone()))
        .unwrap_or_else(|| PathBuf::from("out"));
    let ctx = Context { output, parallel: cli.common.parallel };
    let required = || cfg.as_ref().ok_or_else(|| CliError::Usage("--config is required for this command".into()));
    match cli.command {
        Command::Simulate => commands::simulate_cmd(required()?, &ctx),
        Command::EstimateMarkov => commands::estimate_markov_cmd(required()?, &ctx),
        Command::Check => commands::check_cmd(required()?, &ctx),
        Command::Identify => commands::identify_cmd(required()?, &ctx),
        Command::Evaluate { truth, estimate, gamma } => {
            commands::evaluate_cmd(cfg.as_ref(), &EvaluateArgs { truth, estimate, gamma }, &ctx)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(written) => {
            let _ = commands::print_written(&written, &mut std::io::stdout().lock());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
