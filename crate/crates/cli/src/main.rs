//! `hddm`: kernels, forward noising, DAE encoding, sampling and metrics from
//! the command line.
//!
//! Exit codes: 0 success, 1 validation failure, 2 I/O or configuration error.

mod checks;
mod commands;
mod config;
mod model;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{emit, ConfigFile, Failure, Outcome};

#[derive(Debug, Parser)]
#[command(
    name = "hddm",
    version,
    about = "Hierarchical discrete diffusion over molecular graphs"
)]
struct Cli {
    /// JSON object of option values keyed by flag name; flags take precedence
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Numerical self-checks of the transition kernels
    Kernels {
        #[command(subcommand)]
        action: KernelsAction,
    },
    /// Noise molecules to time t
    Forward(commands::ForwardArgs),
    /// SMILES to graph states
    Encode(commands::EncodeArgs),
    /// Graph states to SMILES
    Decode(commands::DecodeArgs),
    /// Generate molecules by reverse diffusion
    Sample(commands::SampleArgs),
    /// Evaluate generated molecules
    Metrics(commands::MetricsArgs),
    /// Discrete and continuous bounds on a toy problem
    Nelbo(commands::NelboArgs),
    /// Grow molecules around fixed scaffolds
    ScaffoldExtend(commands::ScaffoldArgs),
    /// Serve a built-in denoiser over stdin/stdout
    DenoiseServe(commands::ServeArgs),
}

#[derive(Debug, Subcommand)]
enum KernelsAction {
    /// Chapman-Kolmogorov, posterior and NELBO checks
    Check(checks::CheckArgs),
}

fn kernels_check(args: checks::CheckArgs, config: &ConfigFile) -> Outcome<()> {
    let out = args.out.clone();
    let report = checks::run(args, config)?;
    let mut text = serde_json::to_string_pretty(&report).map_err(|e| Failure::Config(e.to_string()))?;
    text.push('\n');
    emit(out.as_deref(), &text)?;
    if report.pass {
        Ok(())
    } else {
        Err(Failure::Invalid("kernel checks exceeded tolerance".into()))
    }
}

fn run(cli: Cli) -> Outcome<()> {
    let config = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    match cli.command {
        Command::Kernels {
            action: KernelsAction::Check(a),
        } => kernels_check(a, &config),
        Command::Forward(a) => commands::forward(a, &config),
        Command::Encode(a) => commands::encode(a, &config),
        Command::Decode(a) => commands::decode(a, &config),
        Command::Sample(a) => commands::sample(a, &config),
        Command::Metrics(a) => commands::metrics(a, &config),
        Command::Nelbo(a) => commands::nelbo(a, &config),
        Command::ScaffoldExtend(a) => commands::scaffold_extend(a, &config),
        Command::DenoiseServe(a) => commands::denoise_serve(a, &config),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("hddm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
