//! Subcommand runners. Each produces a [`Table`] in deterministic row order.

use std::fmt::Write as _;

use noisespec::detection_bounds::{chernoff_homodyne, chernoff_low_snr, chernoff_uspc, quantum_chernoff};
use noisespec::inference::{mc_detection, mc_estimation, McDetectionConfig, McEstimationConfig};
use noisespec::info_bounds::{
    fisher_homodyne, fisher_low_snr, fisher_uspc_continuum, homodyne_integrand, quantum_fisher_bound,
    quantum_integrand, uspc_integrand,
};
use noisespec::spectral_models::Support;
use noisespec::stochastic_sim::SeedSpec;

use crate::config::RunConfig;
use crate::{CliError, Command};

pub const FISHER_HEADER: [&str; 6] = [
    "theta",
    "j_uspc_per_bt",
    "j_hom_per_bt",
    "k_bound_per_bt",
    "j_uspc_low_snr_per_bt",
    "j_hom_low_snr_per_bt",
];

pub const CHERNOFF_HEADER: [&str; 7] = [
    "phi",
    "xi_uspc_per_bt",
    "xi_hom_per_bt",
    "s_star",
    "zeta_per_bt",
    "xi_uspc_low_snr_per_bt",
    "xi_hom_low_snr_per_bt",
];

pub const MC_ESTIMATE_HEADER: [&str; 13] = [
    "method",
    "theta",
    "modes",
    "trials",
    "mean_estimate",
    "bias",
    "bias_stderr",
    "mse",
    "mse_stderr",
    "crb",
    "information",
    "efficiency",
    "boundary_hits",
];

pub const MC_DETECT_HEADER: [&str; 18] = [
    "method",
    "estimator",
    "phi",
    "modes",
    "trials",
    "false_alarm",
    "false_alarm_stderr",
    "miss",
    "miss_stderr",
    "p_error",
    "p_error_stderr",
    "xi",
    "exp_neg_xi",
    "s_star",
    "zeta",
    "lower_bound",
    "upper_bound",
    "within_bounds",
];

pub const SPECTRA_HEADER: [&str; 7] = [
    "omega",
    "s_x",
    "s_k",
    "s_eta",
    "quantum_integrand",
    "uspc_integrand",
    "homodyne_integrand",
];

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(u64),
    Text(String),
    Bool(bool),
    Missing,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Num)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Bool(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Column by header name, as numbers (`NaN` for non-numeric cells).
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.header.iter().position(|h| *h == name)?;
        Some(
            self.rows
                .iter()
                .map(|r| match &r[idx] {
                    Cell::Num(v) => *v,
                    Cell::Int(v) => *v as f64,
                    _ => f64::NAN,
                })
                .collect(),
        )
    }

    /// CSV with 17 significant digits for reals; missing values are empty.
    pub fn to_csv(&self) -> String {
        let mut out = self.header.join(",");
        out.push('\n');
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                match cell {
                    Cell::Num(v) => write!(out, "{v:.16e}"),
                    Cell::Int(v) => write!(out, "{v}"),
                    Cell::Text(s) => write!(out, "{s}"),
                    Cell::Bool(b) => write!(out, "{b}"),
                    Cell::Missing => Ok(()),
                }
                .expect("write to string");
            }
            out.push('\n');
        }
        out
    }
}

pub fn run(command: Command, cfg: &RunConfig) -> Result<Table, CliError> {
    cfg.validate()?;
    match command {
        Command::FisherScan => fisher_scan(cfg),
        Command::ChernoffScan => chernoff_scan(cfg),
        Command::McEstimate => mc_estimate(cfg),
        Command::McDetect => mc_detect(cfg),
        Command::SpectraDump => spectra_dump(cfg),
    }
}

pub fn fisher_scan(cfg: &RunConfig) -> Result<Table, CliError> {
    let built = cfg.build_model()?;
    let spec = cfg.quadrature()?;
    let t = cfg.grid.duration;
    let bt = built.bandwidth * t;
    let (m, p) = (&built.model, &built.profile);
    let mut table = Table::new(&FISHER_HEADER);
    for theta in cfg.scan_points()? {
        let u = fisher_uspc_continuum(m, p, theta, t, &spec)?.value;
        let h = fisher_homodyne(m, p, theta, t, &spec)?.value;
        let k = quantum_fisher_bound(m, p, theta, t, &spec)?.value;
        let (lu, lh) = fisher_low_snr(m, p, theta, t, &spec)?;
        table.push(vec![
            theta.into(),
            (u / bt).into(),
            (h / bt).into(),
            (k / bt).into(),
            (lu.value / bt).into(),
            (lh.value / bt).into(),
        ]);
    }
    Ok(table)
}

pub fn chernoff_scan(cfg: &RunConfig) -> Result<Table, CliError> {
    let built = cfg.build_model()?;
    let spec = cfg.quadrature()?;
    let t = cfg.grid.duration;
    let bt = built.bandwidth * t;
    let (m, p) = (&built.model, &built.profile);
    let mut table = Table::new(&CHERNOFF_HEADER);
    for phi in cfg.scan_points()? {
        let u = chernoff_uspc(m, phi, p, t, &spec)?.value;
        let h = chernoff_homodyne(m, phi, p, t, &spec)?;
        let z = quantum_chernoff(m, phi, p, t, &spec)?.value;
        let (lu, lh) = chernoff_low_snr(m, phi, p, t, &spec)?;
        table.push(vec![
            phi.into(),
            (u / bt).into(),
            (h.value / bt).into(),
            h.s_star.into(),
            (z / bt).into(),
            (lu.value / bt).into(),
            (lh.value / bt).into(),
        ]);
    }
    Ok(table)
}

fn check_trials(cfg: &RunConfig) -> Result<(), CliError> {
    if cfg.monte_carlo.trials == 0 {
        Err(CliError::Config("monte_carlo.trials must be at least 1".into()))
    } else {
        Ok(())
    }
}

pub fn mc_estimate(cfg: &RunConfig) -> Result<Table, CliError> {
    check_trials(cfg)?;
    let built = cfg.build_model()?;
    let grid = cfg.mode_grid(built.bandwidth)?;
    let mc = &cfg.monte_carlo;
    let mut table = Table::new(&MC_ESTIMATE_HEADER);
    for theta in cfg.scan_points()? {
        let r = mc_estimation(&McEstimationConfig {
            model: &built.model,
            profile: &built.profile,
            grid,
            theta_true: theta,
            trials: mc.trials,
            seed: SeedSpec::new(mc.seed),
            method: mc.method.into(),
            bracket: None,
        })?;
        table.push(vec![
            r.method.tag().into(),
            theta.into(),
            grid.modes().into(),
            r.trials.into(),
            r.mean_estimate.into(),
            r.bias.into(),
            r.bias_std_error.into(),
            r.mse.into(),
            r.mse_std_error.into(),
            r.crb.into(),
            r.information.into(),
            r.efficiency.into(),
            r.boundary_hits.into(),
        ]);
    }
    Ok(table)
}

pub fn mc_detect(cfg: &RunConfig) -> Result<Table, CliError> {
    check_trials(cfg)?;
    let built = cfg.build_model()?;
    let grid = cfg.mode_grid(built.bandwidth)?;
    let mc = &cfg.monte_carlo;
    let mut table = Table::new(&MC_DETECT_HEADER);
    for phi in cfg.scan_points()? {
        let r = mc_detection(&McDetectionConfig {
            model: &built.model,
            theta1: phi,
            profile: &built.profile,
            grid,
            trials: mc.trials,
            seed: SeedSpec::new(mc.seed),
            method: mc.method.into(),
            estimator: mc.estimator.into(),
            threshold: mc.threshold,
        })?;
        table.push(vec![
            r.method.tag().into(),
            r.estimator.tag().into(),
            phi.into(),
            grid.modes().into(),
            r.trials.into(),
            r.false_alarm.value.into(),
            r.false_alarm.std_error.into(),
            r.miss.value.into(),
            r.miss.std_error.into(),
            r.error_probability.value.into(),
            r.error_probability.std_error.into(),
            r.exponent.into(),
            (-r.exponent).exp().into(),
            r.s_star.into(),
            r.quantum_exponent.into(),
            r.bounds.0.into(),
            r.bounds.1.into(),
            r.within_bounds().into(),
        ]);
    }
    Ok(table)
}

/// Frequency nodes on `[-omega_max, omega_max]`. Support breakpoints inside
/// the range are bracketed by two nodes a relative `1e-9` apart so that a
/// trapezoid sum over the rows resolves band edges.
fn dump_frequencies(cfg: &RunConfig, support: &Support<f64>) -> Result<Vec<f64>, CliError> {
    let edge = match support {
        Support::Bounded(bp) => bp.iter().fold(0.0f64, |a, b| a.max(b.abs())),
        Support::Unbounded => 0.0,
    };
    let omega_max = match (cfg.dump.omega_max, support) {
        (Some(w), _) => w,
        (None, Support::Bounded(_)) => 1.5 * edge,
        (None, Support::Unbounded) => {
            return Err(CliError::Config("dump.omega_max is required for unbounded spectra".into()))
        }
    };
    if !(omega_max > 0.0 && omega_max.is_finite()) {
        return Err(CliError::Config(format!("dump.omega_max must be positive, got {omega_max}")));
    }
    let n = cfg.dump.points;
    if n < 2 {
        return Err(CliError::Config("dump.points must be at least 2".into()));
    }
    let mut nodes: Vec<f64> = (0..n)
        .map(|i| -omega_max + 2.0 * omega_max * i as f64 / (n - 1) as f64)
        .collect();
    if let Support::Bounded(bp) = support {
        for &b in bp {
            if b.abs() < omega_max {
                let d = 1e-9 * b.abs().max(1.0);
                nodes.push(b - d);
                nodes.push(b + d);
            }
        }
    }
    nodes.sort_by(f64::total_cmp);
    nodes.dedup();
    Ok(nodes)
}

pub fn spectra_dump(cfg: &RunConfig) -> Result<Table, CliError> {
    let built = cfg.build_model()?;
    let (m, p) = (&built.model, &built.profile);
    let theta = cfg.dump.theta;
    let inv_tau = 1.0 / std::f64::consts::TAU;
    let mut table = Table::new(&SPECTRA_HEADER);
    for w in dump_frequencies(cfg, &m.support())? {
        let pt = m.point(w, theta)?;
        let s_k = p.probe_psd(w);
        let s_eta = p.phase_psd(w)?;
        let flux = p.flux() * p.antisqueezing_gain(w);
        table.push(vec![
            w.into(),
            pt.psd.into(),
            s_k.into(),
            s_eta.into(),
            (quantum_integrand(&pt, s_k) * inv_tau).into(),
            (uspc_integrand(&pt, flux) * inv_tau).into(),
            (homodyne_integrand(&pt, s_eta) * inv_tau).into(),
        ]);
    }
    Ok(table)
}
