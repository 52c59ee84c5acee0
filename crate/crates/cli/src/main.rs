use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use noisespec_cli::{execute, Command, Overrides};

#[derive(Parser)]
#[command(name = "noisespec", version, about = "Fisher-information and Chernoff-exponent scans for squeezed-probe noise spectroscopy")]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Fisher informations per BT over a theta scan
    FisherScan(Common),
    /// Chernoff exponents per BT over a phi scan
    ChernoffScan(Common),
    /// Monte Carlo MLE mean-square error against the Cramer-Rao bound
    McEstimate(Common),
    /// Monte Carlo detection error probabilities against the exponent bounds
    McDetect(Common),
    /// Spectra and information integrands on a frequency grid
    SpectraDump(Common),
}

#[derive(Args)]
struct Common {
    /// TOML run configuration
    #[arg(short, long)]
    config: PathBuf,
    /// Master seed (overrides monte_carlo.seed)
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path (overrides output.path; stdout when neither is set)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Quadrature relative tolerance (overrides numerics.rel_tol)
    #[arg(long)]
    tol: Option<f64>,
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> anyhow::Result<()> {
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Sub::FisherScan(c) => (Command::FisherScan, c),
        Sub::ChernoffScan(c) => (Command::ChernoffScan, c),
        Sub::McEstimate(c) => (Command::McEstimate, c),
        Sub::McDetect(c) => (Command::McDetect, c),
        Sub::SpectraDump(c) => (Command::SpectraDump, c),
    };
    let overrides = Overrides {
        seed: common.seed,
        out: common.out,
        tol: common.tol,
    };
    let (csv, out) = execute(command, &common.config, &overrides)
        .with_context(|| format!("{} failed", command.name()))?;
    match out {
        Some(path) => std::fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().lock().write_all(csv.as_bytes())?,
    }
    Ok(())
}
