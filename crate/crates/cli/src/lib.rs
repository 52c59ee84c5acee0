//! Configuration-driven scans and Monte Carlo campaigns with CSV output.

pub mod config;
pub mod run;

use std::path::PathBuf;

pub use config::{Overrides, RunConfig};
pub use run::{run, Table};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Command {
    FisherScan,
    ChernoffScan,
    McEstimate,
    McDetect,
    SpectraDump,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::FisherScan => "fisher-scan",
            Command::ChernoffScan => "chernoff-scan",
            Command::McEstimate => "mc-estimate",
            Command::McDetect => "mc-detect",
            Command::SpectraDump => "spectra-dump",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}: {}", .0.display(), .1)]
    Io(PathBuf, String),

    #[error(transparent)]
    Core(#[from] noisespec::Error),
}

/// Loads `config`, applies overrides, runs `command` and returns the CSV
/// text together with the configured output path.
pub fn execute(
    command: Command,
    config: &std::path::Path,
    overrides: &Overrides,
) -> Result<(String, Option<PathBuf>), CliError> {
    let mut cfg = RunConfig::load(config)?;
    cfg.apply(overrides);
    let table = run(command, &cfg)?;
    Ok((table.to_csv(), cfg.output.path.clone()))
}
