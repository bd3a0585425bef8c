//! `missdiag`: missing-modality protocols and modality-level diagnostics.

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// `println!` that ignores a closed stdout, e.g. when piped into `head`.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

mod commands;
mod common;

use common::{CliError, Overrides};

#[derive(Parser)]
#[command(name = "missdiag", version, about = "Missing-modality protocols and modality-level diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate or inspect mask matrices.
    #[command(subcommand)]
    Mask(MaskCommand),
    /// Mean matching and pattern-distribution divergences.
    #[command(subcommand)]
    Protocol(ProtocolCommand),
    /// MEI from ablation tables, MLI from gradient traces.
    #[command(subcommand)]
    Metrics(MetricsCommand),
    /// Run the toy multimodal trainer.
    #[command(subcommand)]
    Simulate(SimulateCommand),
    /// Combine report files.
    #[command(subcommand)]
    Report(ReportCommand),
}

#[derive(Subcommand)]
enum MaskCommand {
    /// Sample a `maskmatrix-v1` file from the configured protocol.
    Generate(commands::mask::GenerateArgs),
    /// Empirical rates and pattern counts of a mask file.
    Stats(commands::mask::StatsArgs),
}

#[derive(Subcommand)]
enum ProtocolCommand {
    /// Shared rate matching an IMR vector, and the divergence between them.
    MeanMatch(commands::protocol::MeanMatchArgs),
    /// Divergence between the pattern distributions of two rate vectors.
    Divergence(commands::protocol::DivergenceArgs),
}

#[derive(Subcommand)]
enum MetricsCommand {
    /// Modality Equity Index of every metric in an `abltable-v1` file.
    Mei(commands::metrics::MeiArgs),
    /// Modality Learning Index of a `gradtrace-v1` or `gradagg-v1` file.
    Mli(commands::metrics::MliArgs),
}

#[derive(Subcommand)]
enum SimulateCommand {
    /// Train, write artifacts and the diagnostics report.
    Run(commands::simulate::RunArgs),
}

#[derive(Subcommand)]
enum ReportCommand {
    /// Merge report files into one.
    Merge(commands::report::MergeArgs),
}

/// Flags shared by every command that reads a configuration file.
#[derive(Args, Debug, Clone)]
pub struct ConfigArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    pub config: std::path::PathBuf,
    /// Override the seed (takes precedence over MISSDIAG_SEED and the file).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override a field by dotted path, e.g. `--set simulation.train.epochs=5`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    pub sets: Vec<String>,
}

impl ConfigArgs {
    pub fn overrides(&self) -> Result<Overrides, CliError> {
        common::overrides(self.seed, &self.sets)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Mask(MaskCommand::Generate(a)) => commands::mask::generate(a),
        Command::Mask(MaskCommand::Stats(a)) => commands::mask::stats(a),
        Command::Protocol(ProtocolCommand::MeanMatch(a)) => commands::protocol::mean_match(a),
        Command::Protocol(ProtocolCommand::Divergence(a)) => commands::protocol::divergence(a),
        Command::Metrics(MetricsCommand::Mei(a)) => commands::metrics::mei(a),
        Command::Metrics(MetricsCommand::Mli(a)) => commands::metrics::mli(a),
        Command::Simulate(SimulateCommand::Run(a)) => commands::simulate::run(a),
        Command::Report(ReportCommand::Merge(a)) => commands::report::merge(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
