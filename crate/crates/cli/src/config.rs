//! TOML run configuration.
//!
//! ```toml
//! [model]
//! kind = "flat-band"        # "flat-band", "lorentzian" or "tabulated"
//! bandwidth = 1.0           # B in Hz; the band is |omega| <= 2 pi B
//! probe_level = 1.0         # S_k inside the band
//!
//! [grid]
//! duration = 1.0            # T in seconds
//! # modes = 1000            # default floor(B T)
//!
//! [scan]
//! spacing = "log"           # "log" or "linear"
//! start = 0.01
//! stop = 10.0
//! points = 50
//! # values = [0.1, 1.0, 10.0]   # explicit list, overrides the range
//!
//! [monte_carlo]
//! trials = 10000
//! seed = 1
//! method = "uspc"           # "uspc" or "homodyne"
//! estimator = "plain"       # "plain" or "tilted" (homodyne detection)
//! threshold = 0.0
//!
//! [numerics]
//! rel_tol = 1e-10
//! max_subdivisions = 500
//!
//! [dump]
//! theta = 1.0
//! points = 401
//! # omega_max = 9.42
//!
//! [output]
//! path = "fisher.csv"      # relative to this file; stdout when absent
//! ```
//!
//! `lorentzian` takes `half_width`, `peak` and `probe_level`; `tabulated`
//! takes `path` (two columns `omega, R(omega)`, resolved relative to the
//! config file), `probe_level` and an optional `bandwidth` used for the `BT`
//! normalization (default: largest tabulated frequency over `2 pi`).

use std::path::{Path, PathBuf};

use noisespec::inference::{DetectionEstimator, Measurement};
use noisespec::spectral_models::{make_flat_band, FlatBandConfig, NoiseSpectrumModel, ProbeProfile, SpectralShape, TabulatedSpectrum};
use noisespec::stochastic_sim::ModeGrid;
use noisespec::QuadratureSpec;
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ModelConfig {
    FlatBand {
        bandwidth: f64,
        probe_level: f64,
    },
    Lorentzian {
        half_width: f64,
        peak: f64,
        probe_level: f64,
    },
    Tabulated {
        path: PathBuf,
        probe_level: f64,
        bandwidth: Option<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "one")]
    pub duration: f64,
    pub modes: Option<usize>,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            duration: 1.0,
            modes: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Spacing {
    #[default]
    Log,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    #[serde(default)]
    pub spacing: Spacing,
    pub start: Option<f64>,
    pub stop: Option<f64>,
    pub points: Option<usize>,
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum MethodConfig {
    #[default]
    Uspc,
    Homodyne,
}

impl From<MethodConfig> for Measurement {
    fn from(m: MethodConfig) -> Self {
        match m {
            MethodConfig::Uspc => Measurement::Uspc,
            MethodConfig::Homodyne => Measurement::Homodyne,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorConfig {
    #[default]
    Plain,
    Tilted,
}

impl From<EstimatorConfig> for DetectionEstimator {
    fn from(e: EstimatorConfig) -> Self {
        match e {
            EstimatorConfig::Plain => DetectionEstimator::Plain,
            EstimatorConfig::Tilted => DetectionEstimator::Tilted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub method: MethodConfig,
    #[serde(default)]
    pub estimator: EstimatorConfig,
    #[serde(default)]
    pub threshold: f64,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            trials: default_trials(),
            seed: 0,
            method: MethodConfig::Uspc,
            estimator: EstimatorConfig::Plain,
            threshold: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsConfig {
    #[serde(default = "default_rel_tol")]
    pub rel_tol: f64,
    #[serde(default = "default_subdivisions")]
    pub max_subdivisions: usize,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        Self {
            rel_tol: default_rel_tol(),
            max_subdivisions: default_subdivisions(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DumpConfig {
    #[serde(default = "one")]
    pub theta: f64,
    #[serde(default = "default_dump_points")]
    pub points: usize,
    pub omega_max: Option<f64>,
}

impl Default for DumpConfig {
    fn default() -> Self {
        Self {
            theta: 1.0,
            points: default_dump_points(),
            omega_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub scan: ScanConfig,
    #[serde(default)]
    pub monte_carlo: MonteCarloConfig,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub dump: DumpConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Directory that relative paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

fn one() -> f64 {
    1.0
}

fn default_trials() -> usize {
    1000
}

fn default_rel_tol() -> f64 {
    1e-10
}

fn default_subdivisions() -> usize {
    500
}

fn default_dump_points() -> usize {
    401
}

/// Command-line overrides; set fields win over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub tol: Option<f64>,
}

/// Model, probe and normalization bandwidth built from a [`ModelConfig`].
#[derive(Debug, Clone)]
pub struct BuiltModel {
    pub model: NoiseSpectrumModel<f64>,
    pub profile: ProbeProfile<f64>,
    pub bandwidth: f64,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e.to_string()))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if let Some(out) = cfg.output.path.take() {
            cfg.output.path = Some(cfg.base_dir.join(out));
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, overrides: &Overrides) {
        if let Some(seed) = overrides.seed {
            self.monte_carlo.seed = seed;
        }
        if let Some(out) = &overrides.out {
            self.output.path = Some(out.clone());
        }
        if let Some(tol) = overrides.tol {
            self.numerics.rel_tol = tol;
        }
    }

    pub fn quadrature(&self) -> Result<QuadratureSpec, CliError> {
        Ok(QuadratureSpec::new(self.numerics.rel_tol, self.numerics.max_subdivisions)?)
    }

    pub fn build_model(&self) -> Result<BuiltModel, CliError> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(v)
            } else {
                Err(CliError::Config(format!("model.{name} must be positive, got {v}")))
            }
        };
        match &self.model {
            ModelConfig::FlatBand {
                bandwidth,
                probe_level,
            } => {
                let cfg = FlatBandConfig::new(*bandwidth, *probe_level, 1.0)?;
                let (model, profile) = make_flat_band(&cfg)?;
                Ok(BuiltModel {
                    model,
                    profile,
                    bandwidth: *bandwidth,
                })
            }
            ModelConfig::Lorentzian {
                half_width,
                peak,
                probe_level,
            } => {
                let shape = SpectralShape::Lorentzian {
                    half_width: positive("half_width", *half_width)?,
                    peak: positive("peak", *peak)?,
                };
                Ok(BuiltModel {
                    model: NoiseSpectrumModel::magnitude_squared(shape)?,
                    profile: ProbeProfile::coherent(positive("probe_level", *probe_level)?)?,
                    bandwidth: half_width / std::f64::consts::TAU,
                })
            }
            ModelConfig::Tabulated {
                path,
                probe_level,
                bandwidth,
            } => {
                let table = TabulatedSpectrum::load(self.base_dir.join(path))?;
                let b = match bandwidth {
                    Some(b) => positive("bandwidth", *b)?,
                    None => table.max_frequency() / std::f64::consts::TAU,
                };
                Ok(BuiltModel {
                    model: NoiseSpectrumModel::magnitude_squared(SpectralShape::Tabulated(table))?,
                    profile: ProbeProfile::coherent(positive("probe_level", *probe_level)?)?,
                    bandwidth: b,
                })
            }
        }
    }

    pub fn mode_grid(&self, bandwidth: f64) -> Result<ModeGrid<f64>, CliError> {
        let t = self.grid.duration;
        Ok(match self.grid.modes {
            Some(m) => ModeGrid::new(t, m)?,
            None => ModeGrid::for_flat_band(&FlatBandConfig::new(bandwidth, 1.0, 1.0)?, t)?,
        })
    }

    /// Scan points in order.
    pub fn scan_points(&self) -> Result<Vec<f64>, CliError> {
        let scan = &self.scan;
        let points = if let Some(values) = &scan.values {
            values.clone()
        } else {
            let (start, stop, n) = match (scan.start, scan.stop, scan.points) {
                (Some(a), Some(b), Some(n)) => (a, b, n),
                _ => {
                    return Err(CliError::Config(
                        "scan needs either `values` or `start`, `stop` and `points`".into(),
                    ))
                }
            };
            if n == 0 {
                return Err(CliError::Config("scan.points must be at least 1".into()));
            }
            if !(start.is_finite() && stop.is_finite() && start <= stop) {
                return Err(CliError::Config(format!("invalid scan range [{start}, {stop}]")));
            }
            if n == 1 {
                vec![start]
            } else {
                let last = (n - 1) as f64;
                match scan.spacing {
                    Spacing::Linear => (0..n)
                        .map(|i| if i == n - 1 { stop } else { start + (stop - start) * i as f64 / last })
                        .collect(),
                    Spacing::Log => {
                        if start <= 0.0 {
                            return Err(CliError::Config("log-spaced scans need start > 0".into()));
                        }
                        let ratio = (stop / start).ln();
                        (0..n)
                            .map(|i| if i == n - 1 { stop } else { start * (ratio * i as f64 / last).exp() })
                            .collect()
                    }
                }
            }
        };
        if points.is_empty() {
            return Err(CliError::Config("scan is empty".into()));
        }
        if let Some(bad) = points.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(CliError::Config(format!("scan value {bad} must be finite and nonnegative")));
        }
        Ok(points)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.numerics.rel_tol > 0.0 && self.numerics.rel_tol.is_finite()) {
            return Err(CliError::Config(format!(
                "numerics.rel_tol must be positive, got {}",
                self.numerics.rel_tol
            )));
        }
        if !(self.grid.duration > 0.0 && self.grid.duration.is_finite()) {
            return Err(CliError::Config(format!(
                "grid.duration must be positive, got {}",
                self.grid.duration
            )));
        }
        Ok(())
    }
}
