//! Maximum-likelihood estimation, likelihood-ratio detection and Monte Carlo
//! harnesses for the USPC and homodyne records.
//!
//! For magnitude-squared models the per-mode means are `theta^2 c_m` (USPC)
//! or `S_eta,m + theta^2 c_m` (homodyne), so modes sharing the same
//! coefficients are pooled and the likelihood only sees per-group count
//! totals. This makes the flat-band USPC likelihood an exact function of the
//! total count.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;

use crate::detection_bounds::{chernoff_homodyne_discrete, chernoff_uspc_discrete, error_prob_bounds, fidelity_discrete};
use crate::error::{domain, Error, Result};
use crate::info_bounds::{fisher_homodyne_discrete, fisher_uspc_discrete};
use crate::numerics::try_maximize_1d;
use crate::scalar::Scalar;
use crate::spectral_models::{NoiseSpectrumModel, ProbeProfile};
use crate::stochastic_sim::{
    homodyne_mode_means, sample_counts_from_means, sample_periodogram_from_means, uspc_mode_means,
    HomodynePeriodogram, ModeGrid, PhotonCountRecord, Purpose, SeedSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Measurement {
    Uspc,
    Homodyne,
}

impl Measurement {
    pub fn tag(self) -> &'static str {
        match self {
            Measurement::Uspc => "uspc",
            Measurement::Homodyne => "homodyne",
        }
    }
}

impl fmt::Display for Measurement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleResult<T> {
    pub estimate: T,
    pub log_likelihood: T,
    /// False when the optimizer had to fall back to a dense grid scan.
    pub converged: bool,
    /// The estimate sits on a bracket endpoint.
    pub at_boundary: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct ModeGroup<T> {
    noise: T,
    coef: T,
    members: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
enum Structure<T> {
    Grouped(Vec<ModeGroup<T>>),
    General,
}

fn group_modes<T: Scalar>(keys: impl Iterator<Item = (T, T)>) -> Vec<ModeGroup<T>> {
    let mut map: BTreeMap<(u64, u64), ModeGroup<T>> = BTreeMap::new();
    for (m, (noise, coef)) in keys.enumerate() {
        map.entry((noise.as_f64().to_bits(), coef.as_f64().to_bits()))
            .or_insert_with(|| ModeGroup {
                noise,
                coef,
                members: Vec::new(),
            })
            .members
            .push(m);
    }
    map.into_values().collect()
}

fn check_record_len(len: usize, grid: usize) -> Result<()> {
    if len == grid {
        Ok(())
    } else {
        Err(domain(format!("record has {len} modes but the grid has {grid}")))
    }
}

fn check_bracket<T: Scalar>(model: &NoiseSpectrumModel<T>, grid: &ModeGrid<T>, bracket: (T, T)) -> Result<()> {
    let (lo, hi) = bracket;
    if !(lo < hi && lo.is_finite() && hi.is_finite()) {
        return Err(domain(format!("invalid search bracket [{lo}, {hi}]")));
    }
    let w = grid.frequency(1);
    model.psd(w, lo)?;
    model.psd(w, hi)?;
    Ok(())
}

fn mle<T: Scalar>(f: impl FnMut(T) -> Result<T>, bracket: (T, T)) -> Result<MleResult<T>> {
    let (lo, hi) = bracket;
    let tol = T::lit(1e-10).max(T::epsilon().sqrt()) * hi.abs().max(T::one());
    let best = try_maximize_1d(f, lo, hi, tol)?;
    Ok(MleResult {
        estimate: best.argmax,
        log_likelihood: best.value,
        converged: !best.grid_fallback,
        at_boundary: best.argmax == lo || best.argmax == hi,
    })
}

/// Default search bracket `[0, 10 max(theta, 1)]`.
pub fn default_bracket<T: Scalar>(theta: T) -> (T, T) {
    (T::zero(), T::lit(10.0) * theta.abs().max(T::one()))
}

/// `n ln(N/(1+N)) - ln(1+N)`, with the `N = 0` cases resolved exactly.
fn bose_einstein_log_pmf<T: Scalar>(n: T, mean: T) -> T {
    if mean == T::zero() {
        return if n == T::zero() { T::zero() } else { T::neg_infinity() };
    }
    let l1p = mean.ln_1p();
    if n == T::zero() {
        -l1p
    } else {
        n * (mean.ln() - l1p) - l1p
    }
}

/// Bose-Einstein product likelihood of USPC records for a fixed model, probe
/// and grid.
#[derive(Debug, Clone)]
pub struct UspcLikelihood<'a, T> {
    model: &'a NoiseSpectrumModel<T>,
    profile: &'a ProbeProfile<T>,
    grid: ModeGrid<T>,
    structure: Structure<T>,
}

impl<'a, T: Scalar> UspcLikelihood<'a, T> {
    pub fn new(model: &'a NoiseSpectrumModel<T>, profile: &'a ProbeProfile<T>, grid: &ModeGrid<T>) -> Self {
        let structure = match model.shape() {
            Some(shape) => Structure::Grouped(group_modes(
                grid.frequencies()
                    .map(|w| (T::zero(), T::lit(2.0) * profile.probe_psd(w) * shape.eval(w))),
            )),
            None => Structure::General,
        };
        Self {
            model,
            profile,
            grid: *grid,
            structure,
        }
    }

    /// Log-likelihood; `-inf` when a mode with zero mean has counts.
    pub fn log_likelihood(&self, counts: &PhotonCountRecord, theta: T) -> Result<T> {
        check_record_len(counts.counts.len(), self.grid.modes())?;
        match &self.structure {
            Structure::Grouped(groups) => {
                let t2 = theta * theta;
                Ok(groups
                    .iter()
                    .map(|g| {
                        let total: u64 = g.members.iter().map(|&m| counts.counts[m]).sum();
                        let mean = t2 * g.coef;
                        let size = T::from_count(g.members.len());
                        if mean == T::zero() {
                            return if total == 0 { T::zero() } else { T::neg_infinity() };
                        }
                        let l1p = mean.ln_1p();
                        T::lit(total as f64) * (mean.ln() - l1p) - size * l1p
                    })
                    .sum())
            }
            Structure::General => {
                let means = uspc_mode_means(self.model, theta, self.profile, &self.grid)?;
                Ok(counts
                    .counts
                    .iter()
                    .zip(&means)
                    .map(|(&n, &mean)| bose_einstein_log_pmf(T::lit(n as f64), mean))
                    .sum())
            }
        }
    }

    pub fn mle(&self, counts: &PhotonCountRecord, bracket: (T, T)) -> Result<MleResult<T>> {
        check_bracket(self.model, &self.grid, bracket)?;
        check_record_len(counts.counts.len(), self.grid.modes())?;
        mle(|t| self.log_likelihood(counts, t), bracket)
    }
}

/// Whittle likelihood of homodyne periodograms: independent exponentials
/// with means `S_eta + S_X`.
#[derive(Debug, Clone)]
pub struct HomodyneLikelihood<'a, T> {
    model: &'a NoiseSpectrumModel<T>,
    profile: &'a ProbeProfile<T>,
    grid: ModeGrid<T>,
    structure: Structure<T>,
}

impl<'a, T: Scalar> HomodyneLikelihood<'a, T> {
    pub fn new(
        model: &'a NoiseSpectrumModel<T>,
        profile: &'a ProbeProfile<T>,
        grid: &ModeGrid<T>,
    ) -> Result<Self> {
        let structure = match model.shape() {
            Some(shape) => {
                let keys = grid
                    .frequencies()
                    .map(|w| Ok((profile.phase_psd(w)?, shape.eval(w))))
                    .collect::<Result<Vec<_>>>()?;
                Structure::Grouped(group_modes(keys.into_iter()))
            }
            None => Structure::General,
        };
        Ok(Self {
            model,
            profile,
            grid: *grid,
            structure,
        })
    }

    fn pooled(&self, periodogram: &HomodynePeriodogram<T>) -> Vec<(T, T, T, T)> {
        match &self.structure {
            Structure::Grouped(groups) => groups
                .iter()
                .map(|g| {
                    let total: T = g.members.iter().map(|&m| periodogram.values[m]).sum();
                    (g.noise, g.coef, total, T::from_count(g.members.len()))
                })
                .collect(),
            Structure::General => Vec::new(),
        }
    }

    fn pooled_log_likelihood(pooled: &[(T, T, T, T)], theta: T) -> T {
        let t2 = theta * theta;
        pooled
            .iter()
            .map(|&(noise, coef, total, size)| {
                let mean = noise + t2 * coef;
                -size * mean.ln() - total / mean
            })
            .sum()
    }

    pub fn log_likelihood(&self, periodogram: &HomodynePeriodogram<T>, theta: T) -> Result<T> {
        check_record_len(periodogram.values.len(), self.grid.modes())?;
        match &self.structure {
            Structure::Grouped(_) => Ok(Self::pooled_log_likelihood(&self.pooled(periodogram), theta)),
            Structure::General => {
                let means = homodyne_mode_means(self.model, theta, self.profile, &self.grid)?;
                Ok(periodogram
                    .values
                    .iter()
                    .zip(&means)
                    .map(|(&i, &mean)| -mean.ln() - i / mean)
                    .sum())
            }
        }
    }

    pub fn mle(&self, periodogram: &HomodynePeriodogram<T>, bracket: (T, T)) -> Result<MleResult<T>> {
        check_bracket(self.model, &self.grid, bracket)?;
        check_record_len(periodogram.values.len(), self.grid.modes())?;
        match &self.structure {
            Structure::Grouped(_) => {
                let pooled = self.pooled(periodogram);
                mle(|t| Ok(Self::pooled_log_likelihood(&pooled, t)), bracket)
            }
            Structure::General => mle(|t| self.log_likelihood(periodogram, t), bracket),
        }
    }
}

/// USPC log-likelihood `sum_m [n_m ln(N_m/(1+N_m)) - ln(1+N_m)]`; returns
/// `-inf` when a zero-mean mode has counts.
pub fn loglik_uspc<T: Scalar>(
    counts: &PhotonCountRecord,
    model: &NoiseSpectrumModel<T>,
    profile: &ProbeProfile<T>,
    grid: &ModeGrid<T>,
    theta: T,
) -> Result<T> {
    UspcLikelihood::new(model, profile, grid).log_likelihood(counts, theta)
}

/// Log-likelihood of raw counts against explicit per-mode means.
pub fn loglik_uspc_from_means<T: Scalar>(counts: &PhotonCountRecord, means: &[T]) -> Result<T> {
    check_record_len(counts.counts.len(), means.len())?;
    Ok(counts
        .counts
        .iter()
        .zip(means)
        .map(|(&n, &mean)| bose_einstein_log_pmf(T::lit(n as f64), mean))
        .sum())
}

pub fn mle_uspc<T: Scalar>(
    counts: &PhotonCountRecord,
    model: &NoiseSpectrumModel<T>,
    profile: &ProbeProfile<T>,
    grid: &ModeGrid<T>,
    bracket: (T, T),
) -> Result<MleResult<T>> {
    UspcLikelihood::new(model, profile, grid).mle(counts, bracket)
}

/// Whittle log-likelihood `sum_m [-ln(S_eta + S_X) - I_m/(S_eta + S_X)]`.
pub fn loglik_homodyne<T: Scalar>(
    periodogram: &HomodynePeriodogram<T>,
    model: &NoiseSpectrumModel<T>,
    profile: &ProbeProfile<T>,
    grid: &ModeGrid<T>,
    theta: T,
) -> Result<T> {
    HomodyneLikelihood::new(model, profile, grid)?.log_likelihood(periodogram, theta)
}

pub fn mle_homodyne<T: Scalar>(
    periodogram: &HomodynePeriodogram<T>,
    model: &NoiseSpectrumModel<T>,
    profile: &ProbeProfile<T>,
    grid: &ModeGrid<T>,
    bracket: (T, T),
) -> Result<MleResult<T>> {
    HomodyneLikelihood::new(model, profile, grid)?.mle(periodogram, bracket)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    H0,
    H1,
}

/// The USPC likelihood-ratio test: `H0` predicts the all-zero record with
/// certainty, so any detected photon decides `H1`.
pub fn lrt_detect_uspc(counts: &PhotonCountRecord) -> Decision {
    if counts.all_zero() {
        Decision::H0
    } else {
        Decision::H1
    }
}

/// Homodyne log-likelihood-ratio statistic
/// `sum_m I_m (1/S_eta - 1/(S_eta + S_X)) - sum_m ln(1 + S_X/S_eta)`.
#[derive(Debug, Clone, PartialEq)]
pub struct HomodyneLrt<T> {
    weights: Vec<T>,
    offset: T,
}

impl<T: Scalar> HomodyneLrt<T> {
    pub fn new(
        model: &NoiseSpectrumModel<T>,
        theta1: T,
        profile: &ProbeProfile<T>,
        grid: &ModeGrid<T>,
    ) -> Result<Self> {
        let mut weights = Vec::with_capacity(grid.modes());
        let mut offset = T::zero();
        for w in grid.frequencies() {
            let noise = profile.phase_psd(w)?;
            let s = model.psd(w, theta1)?;
            weights.push(T::one() / noise - T::one() / (noise + s));
            offset = offset + (s / noise).ln_1p();
        }
        Ok(Self { weights, offset })
    }

    pub fn statistic(&self, periodogram: &HomodynePeriodogram<T>) -> Result<T> {
        check_record_len(periodogram.values.len(), self.weights.len())?;
        let weighted: T = periodogram.values.iter().zip(&self.weights).map(|(&i, &w)| i * w).sum();
        Ok(weighted - self.offset)
    }

    pub fn decide(&self, periodogram: &HomodynePeriodogram<T>, threshold: T) -> Result<Decision> {
        Ok(if self.statistic(periodogram)? >= threshold {
            Decision::H1
        } else {
            Decision::H0
        })
    }
}

/// Decides `H1` iff the log-likelihood ratio reaches `threshold` (`0` for
/// equal priors).
pub fn lrt_detect_homodyne<T: Scalar>(
    periodogram: &HomodynePeriodogram<T>,
    model: &NoiseSpectrumModel<T>,
    theta1: T,
    profile: &ProbeProfile<T>,
    grid: &ModeGrid<T>,
    threshold: T,
) -> Result<Decision> {
    HomodyneLrt::new(model, theta1, profile, grid)?.decide(periodogram, threshold)
}

/// Jackknife standard error of a sample mean; `None` below two samples.
pub fn jackknife_mean_se(values: &[f64]) -> Option<f64> {
    let n = values.len();
    if n < 2 {
        return None;
    }
    let nf = n as f64;
    let total: f64 = values.iter().sum();
    let loo: Vec<f64> = values.iter().map(|v| (total - v) / (nf - 1.0)).collect();
    let loo_mean = loo.iter().sum::<f64>() / nf;
    let ss: f64 = loo.iter().map(|v| (v - loo_mean).powi(2)).sum();
    Some(((nf - 1.0) / nf * ss).sqrt())
}

#[derive(Debug, Clone)]
pub struct McEstimationConfig<'a, T> {
    pub model: &'a NoiseSpectrumModel<T>,
    pub profile: &'a ProbeProfile<T>,
    pub grid: ModeGrid<T>,
    pub theta_true: T,
    pub trials: usize,
    pub seed: SeedSpec,
    pub method: Measurement,
    /// Defaults to [`default_bracket`].
    pub bracket: Option<(T, T)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimationResult<T> {
    pub method: Measurement,
    pub trials: usize,
    pub theta_true: T,
    pub mean_estimate: T,
    pub bias: T,
    pub bias_std_error: Option<T>,
    pub mse: T,
    pub mse_std_error: Option<T>,
    /// Finite-mode Fisher information of the simulated record.
    pub information: T,
    /// `1 / information`.
    pub crb: T,
    /// `mse * information`.
    pub efficiency: T,
    pub boundary_hits: usize,
}

/// Empirical MSE of the MLE over seeded trials, against the finite-mode
/// Cramer-Rao bound.
pub fn mc_estimation<T: Scalar>(config: &McEstimationConfig<'_, T>) -> Result<McEstimationResult<T>> {
    if config.trials < 1 {
        return Err(Error::Validation("Monte Carlo needs at least one trial".into()));
    }
    let (model, profile, grid, theta) = (config.model, config.profile, &config.grid, config.theta_true);
    let bracket = config.bracket.unwrap_or_else(|| default_bracket(theta));
    let trials = 0..config.trials as u64;
    let (information, fits): (T, Vec<MleResult<T>>) = match config.method {
        Measurement::Uspc => {
            let j = fisher_uspc_discrete(model, profile, theta, grid)?.value;
            let means = uspc_mode_means(model, theta, profile, grid)?;
            let lik = UspcLikelihood::new(model, profile, grid);
            let fits = trials
                .into_par_iter()
                .map(|i| {
                    let counts = sample_counts_from_means(&means, config.seed.trial(i))?;
                    lik.mle(&counts, bracket)
                })
                .collect::<Result<_>>()?;
            (j, fits)
        }
        Measurement::Homodyne => {
            let j = fisher_homodyne_discrete(model, profile, theta, grid)?.value;
            let means = homodyne_mode_means(model, theta, profile, grid)?;
            let lik = HomodyneLikelihood::new(model, profile, grid)?;
            let fits = trials
                .into_par_iter()
                .map(|i| {
                    let record =
                        sample_periodogram_from_means(&means, config.seed.trial(i), Purpose::HomodynePeriodogram);
                    lik.mle(&record, bracket)
                })
                .collect::<Result<_>>()?;
            (j, fits)
        }
    };
    let theta_f = theta.as_f64();
    let errors: Vec<f64> = fits.iter().map(|f| f.estimate.as_f64() - theta_f).collect();
    let squared: Vec<f64> = errors.iter().map(|e| e * e).collect();
    let n = errors.len() as f64;
    let bias = errors.iter().sum::<f64>() / n;
    let mse = squared.iter().sum::<f64>() / n;
    Ok(McEstimationResult {
        method: config.method,
        trials: config.trials,
        theta_true: theta,
        mean_estimate: T::lit(theta_f + bias),
        bias: T::lit(bias),
        bias_std_error: jackknife_mean_se(&errors).map(T::lit),
        mse: T::lit(mse),
        mse_std_error: jackknife_mean_se(&squared).map(T::lit),
        information,
        crb: T::one() / information,
        efficiency: T::lit(mse) * information,
        boundary_hits: fits.iter().filter(|f| f.at_boundary).count(),
    })
}

/// How homodyne error probabilities are estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum DetectionEstimator {
    /// Direct simulation under each hypothesis.
    #[default]
    Plain,
    /// Importance sampling from the exponentially tilted law at the Chernoff
    /// optimum `s*`, reweighted to each hypothesis. Resolves error
    /// probabilities far below `1 / trials`.
    Tilted,
}

impl DetectionEstimator {
    pub fn tag(self) -> &'static str {
        match self {
            DetectionEstimator::Plain => "plain",
            DetectionEstimator::Tilted => "tilted",
        }
    }
}

#[derive(Debug, Clone)]
pub struct McDetectionConfig<'a, T> {
    pub model: &'a NoiseSpectrumModel<T>,
    /// Parameter of the `H1` spectrum.
    pub theta1: T,
    pub profile: &'a ProbeProfile<T>,
    pub grid: ModeGrid<T>,
    pub trials: usize,
    pub seed: SeedSpec,
    pub method: Measurement,
    pub estimator: DetectionEstimator,
    /// Log-likelihood-ratio threshold for homodyne (`0` for equal priors).
    pub threshold: T,
}

/// A probability estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbabilityEstimate {
    pub value: f64,
    pub std_error: f64,
}

impl ProbabilityEstimate {
    fn binomial(hits: usize, trials: usize) -> Self {
        let n = trials as f64;
        let p = hits as f64 / n;
        Self {
            value: p,
            std_error: (p * (1.0 - p) / n).sqrt(),
        }
    }

    fn sample_mean(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self {
            value: mean,
            std_error: (var / n).sqrt(),
        }
    }

    /// Whether `target` lies within `k` standard errors.
    pub fn within(&self, target: f64, k: f64) -> bool {
        (self.value - target).abs() <= k * self.std_error
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McDetectionResult {
    pub method: Measurement,
    pub estimator: DetectionEstimator,
    pub trials: usize,
    pub false_alarm: ProbabilityEstimate,
    pub miss: ProbabilityEstimate,
    /// Equal-prior average `(false_alarm + miss) / 2`.
    pub error_probability: ProbabilityEstimate,
    /// Finite-mode Chernoff exponent of the measurement.
    pub exponent: f64,
    /// Chernoff parameter used (tilt point for the importance sampler).
    pub s_star: f64,
    /// Finite-mode quantum exponent `zeta`.
    pub quantum_exponent: f64,
    /// `((1 - sqrt(1 - F^2)) / 2, exp(-xi) / 2)` with `F = exp(-zeta/2)`.
    pub bounds: (f64, f64),
}

impl McDetectionResult {
    pub fn within_bounds(&self) -> bool {
        let p = self.error_probability.value;
        p >= self.bounds.0 && p <= self.bounds.1
    }
}

fn exponential_log_pdf(x: f64, mean: f64) -> f64 {
    -mean.ln() - x / mean
}

/// Empirical error probabilities of the likelihood-ratio tests.
pub fn mc_detection<T: Scalar>(config: &McDetectionConfig<'_, T>) -> Result<McDetectionResult> {
    if config.trials < 1 {
        return Err(Error::Validation("Monte Carlo needs at least one trial".into()));
    }
    let (model, profile, grid, theta1) = (config.model, config.profile, &config.grid, config.theta1);
    let n = config.trials;
    let fidelity = fidelity_discrete(model, theta1, profile, grid)?;
    let zeta = (-2.0 * fidelity.as_f64().ln()).max(0.0);
    let trials = 0..n as u64;

    let (false_alarm, miss, error_probability, exponent, s_star) = match config.method {
        Measurement::Uspc => {
            let xi = chernoff_uspc_discrete(model, theta1, profile, grid)?.value.as_f64();
            let means1 = uspc_mode_means(model, theta1, profile, grid)?;
            let zeros = vec![T::zero(); grid.modes()];
            let outcomes = trials
                .into_par_iter()
                .map(|i| {
                    let seed = config.seed.trial(i);
                    let h0 = sample_counts_from_means(&zeros, seed.substream(0))?;
                    let h1 = sample_counts_from_means(&means1, seed.substream(1))?;
                    Ok((
                        lrt_detect_uspc(&h0) == Decision::H1,
                        lrt_detect_uspc(&h1) == Decision::H0,
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            let fa = ProbabilityEstimate::binomial(outcomes.iter().filter(|o| o.0).count(), n);
            let ms = ProbabilityEstimate::binomial(outcomes.iter().filter(|o| o.1).count(), n);
            let pe = average(fa, ms);
            (fa, ms, pe, xi, 1.0)
        }
        Measurement::Homodyne => {
            let hom = chernoff_homodyne_discrete(model, theta1, profile, grid)?;
            let xi = hom.value.as_f64();
            let s = hom.s_star.map_or(0.5, |s| s.as_f64());
            let lrt = HomodyneLrt::new(model, theta1, profile, grid)?;
            let mean0 = grid.frequencies().map(|w| profile.phase_psd(w)).collect::<Result<Vec<_>>>()?;
            let mean1 = homodyne_mode_means(model, theta1, profile, grid)?;
            let thr = config.threshold;
            match config.estimator {
                DetectionEstimator::Plain => {
                    let outcomes = trials
                        .into_par_iter()
                        .map(|i| {
                            let seed = config.seed.trial(i);
                            let r0 = sample_periodogram_from_means(&mean0, seed.substream(0), Purpose::HomodynePeriodogram);
                            let r1 = sample_periodogram_from_means(&mean1, seed.substream(1), Purpose::HomodynePeriodogram);
                            Ok((
                                lrt.decide(&r0, thr)? == Decision::H1,
                                lrt.decide(&r1, thr)? == Decision::H0,
                            ))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let fa = ProbabilityEstimate::binomial(outcomes.iter().filter(|o| o.0).count(), n);
                    let ms = ProbabilityEstimate::binomial(outcomes.iter().filter(|o| o.1).count(), n);
                    (fa, ms, average(fa, ms), xi, s)
                }
                DetectionEstimator::Tilted => {
                    let a: Vec<f64> = mean0.iter().map(|v| v.as_f64()).collect();
                    let b: Vec<f64> = mean1.iter().map(|v| v.as_f64()).collect();
                    let tilted: Vec<f64> = a
                        .iter()
                        .zip(&b)
                        .map(|(&a, &b)| 1.0 / ((1.0 - s) / a + s / b))
                        .collect();
                    let tilted_t: Vec<T> = tilted.iter().map(|&v| T::lit(v)).collect();
                    let samples = trials
                        .into_par_iter()
                        .map(|i| {
                            let rec = sample_periodogram_from_means(
                                &tilted_t,
                                config.seed.trial(i),
                                Purpose::TiltedPeriodogram,
                            );
                            let (mut lw0, mut lw1) = (0.0, 0.0);
                            for (k, &x) in rec.values.iter().enumerate() {
                                let x = x.as_f64();
                                let ls = exponential_log_pdf(x, tilted[k]);
                                lw0 += exponential_log_pdf(x, a[k]) - ls;
                                lw1 += exponential_log_pdf(x, b[k]) - ls;
                            }
                            let h1 = lrt.decide(&rec, thr)? == Decision::H1;
                            let fa = if h1 { lw0.exp() } else { 0.0 };
                            let ms = if h1 { 0.0 } else { lw1.exp() };
                            Ok((fa, ms))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    let fa: Vec<f64> = samples.iter().map(|v| v.0).collect();
                    let ms: Vec<f64> = samples.iter().map(|v| v.1).collect();
                    let pe: Vec<f64> = samples.iter().map(|v| 0.5 * (v.0 + v.1)).collect();
                    (
                        ProbabilityEstimate::sample_mean(&fa),
                        ProbabilityEstimate::sample_mean(&ms),
                        ProbabilityEstimate::sample_mean(&pe),
                        xi,
                        s,
                    )
                }
            }
        }
    };
    let (lower, upper) = error_prob_bounds(fidelity.as_f64().clamp(0.0, 1.0), exponent)?;
    Ok(McDetectionResult {
        method: config.method,
        estimator: if config.method == Measurement::Uspc {
            DetectionEstimator::Plain
        } else {
            config.estimator
        },
        trials: n,
        false_alarm,
        miss,
        error_probability,
        exponent,
        s_star,
        quantum_exponent: zeta,
        bounds: (lower, upper),
    })
}

fn average(a: ProbabilityEstimate, b: ProbabilityEstimate) -> ProbabilityEstimate {
    ProbabilityEstimate {
        value: 0.5 * (a.value + b.value),
        std_error: 0.5 * (a.std_error.powi(2) + b.std_error.powi(2)).sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral_models::{make_flat_band, FlatBandConfig, GeneralSpectrum, Support};
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn flat(level: f64) -> (NoiseSpectrumModel<f64>, ProbeProfile<f64>) {
        make_flat_band(&FlatBandConfig::new(1.0, level, 1.0).unwrap()).unwrap()
    }

    /// Same spectrum as the unit flat band, through the general-model path.
    fn general_flat() -> NoiseSpectrumModel<f64> {
        let cutoff = 2.0 * std::f64::consts::PI;
        let inside = move |w: f64| w.abs() <= cutoff * (1.0 + 8.0 * f64::EPSILON);
        let g = GeneralSpectrum::new(
            move |w: f64, t: f64| if inside(w) { 0.25 * t * t } else { 0.0 },
            Support::symmetric_band(cutoff),
            (0.0, 1e6),
        )
        .with_derivative(move |w, t| if inside(w) { 0.5 * t } else { 0.0 });
        NoiseSpectrumModel::General(g)
    }

    fn record(counts: &[u64]) -> PhotonCountRecord {
        PhotonCountRecord {
            counts: counts.to_vec(),
        }
    }

    #[test]
    fn loglik_examples() {
        let (m, p) = flat(1.0);
        let g = ModeGrid::new(3.0, 3).unwrap();
        assert_eq!(loglik_uspc(&record(&[0, 0, 0]), &m, &p, &g, 0.0).unwrap(), 0.0);
        assert_eq!(loglik_uspc(&record(&[0, 2, 0]), &m, &p, &g, 0.0).unwrap(), f64::NEG_INFINITY);
        let one = ModeGrid::new(1.0, 1).unwrap();
        // N = theta^2 / 2 = 1
        let v = loglik_uspc(&record(&[1]), &m, &p, &one, 2f64.sqrt()).unwrap();
        assert!((v + 2.0 * LN_2).abs() < 1e-15);
        assert!((loglik_uspc_from_means(&record(&[1]), &[1.0]).unwrap() + 2.0 * LN_2).abs() < 1e-15);
        assert!(loglik_uspc(&record(&[1, 2]), &m, &p, &g, 1.0).is_err());
    }

    #[test]
    fn general_path_matches_grouped_path() {
        let (m, p) = flat(1.0);
        let gm = general_flat();
        let g = ModeGrid::new(5.0, 5).unwrap();
        let c = record(&[0, 1, 0, 2, 1]);
        for theta in [0.3, 1.0, 2.5] {
            let a = loglik_uspc(&c, &m, &p, &g, theta).unwrap();
            let b = loglik_uspc(&c, &gm, &p, &g, theta).unwrap();
            assert!((a - b).abs() < 1e-12 * a.abs());
        }
        let a = mle_uspc(&c, &m, &p, &g, (0.0, 10.0)).unwrap();
        let b = mle_uspc(&c, &gm, &p, &g, (0.0, 10.0)).unwrap();
        assert!((a.estimate - b.estimate).abs() < 1e-7);
        let h = HomodynePeriodogram {
            values: vec![0.3, 0.9, 0.1, 0.6, 0.7],
        };
        let a = mle_homodyne(&h, &m, &p, &g, (0.0, 10.0)).unwrap();
        let b = mle_homodyne(&h, &gm, &p, &g, (0.0, 10.0)).unwrap();
        assert!((a.estimate - b.estimate).abs() < 1e-7);
        let la = loglik_homodyne(&h, &m, &p, &g, 1.3).unwrap();
        let lb = loglik_homodyne(&h, &gm, &p, &g, 1.3).unwrap();
        assert!((la - lb).abs() < 1e-12 * la.abs());
    }

    #[test]
    fn uspc_mle_closed_form() {
        let (m, p) = flat(1.0);
        let g = ModeGrid::new(5.0, 5).unwrap();
        let r = mle_uspc(&record(&[0, 1, 0, 2, 1]), &m, &p, &g, (0.0, 10.0)).unwrap();
        assert!((r.estimate - 1.6f64.sqrt()).abs() < 1e-6);
        assert!((r.estimate - 1.264_911).abs() < 1e-6);
        assert!(r.converged && !r.at_boundary);
        let z = mle_uspc(&record(&[0; 5]), &m, &p, &g, (0.0, 10.0)).unwrap();
        assert_eq!(z.estimate, 0.0);
        assert!(z.at_boundary);
        let z = mle_uspc(&record(&[0; 5]), &m, &p, &g, (0.5, 10.0)).unwrap();
        assert_eq!(z.estimate, 0.5);
        assert!(mle_uspc(&record(&[0; 5]), &m, &p, &g, (1.0, 0.5)).is_err());
        assert!(mle_uspc(&record(&[0; 5]), &m, &p, &g, (-1.0, 0.5)).is_err());
    }

    #[test]
    fn homodyne_mle_closed_form() {
        let (m, p) = flat(1.0);
        let g = ModeGrid::new(4.0, 4).unwrap();
        let h = HomodynePeriodogram {
            values: vec![0.2, 0.8, 0.5, 0.5],
        };
        let r = mle_homodyne(&h, &m, &p, &g, (0.0, 10.0)).unwrap();
        assert!((r.estimate - 1.0).abs() < 1e-6);
        let low = HomodynePeriodogram {
            values: vec![0.1, 0.3, 0.2, 0.25],
        };
        let r = mle_homodyne(&low, &m, &p, &g, (0.0, 10.0)).unwrap();
        assert_eq!(r.estimate, 0.0);
        assert!(r.at_boundary);
    }

    #[test]
    fn random_records_match_closed_forms() {
        let (m, p) = flat(1.0);
        let g = ModeGrid::new(50.0, 50).unwrap();
        let seeds = SeedSpec::new(17);
        for i in 0..100 {
            let theta = 0.2 + 0.03 * i as f64;
            let bracket = default_bracket(theta);
            let counts = crate::stochastic_sim::sample_uspc_counts(&m, theta, &p, &g, seeds.trial(i)).unwrap();
            let nbar = counts.total() as f64 / 50.0;
            let r = mle_uspc(&counts, &m, &p, &g, bracket).unwrap();
            assert!((r.estimate - (2.0 * nbar).sqrt()).abs() < 1e-6, "{i}");
            let per = crate::stochastic_sim::sample_homodyne_periodogram(&m, theta, &p, &g, seeds.trial(i)).unwrap();
            let ibar = per.values.iter().sum::<f64>() / 50.0;
            let r = mle_homodyne(&per, &m, &p, &g, bracket).unwrap();
            assert!((r.estimate - (ibar / 0.25 - 1.0).max(0.0).sqrt()).abs() < 1e-6, "{i}");
        }
    }

    #[test]
    fn uspc_detection_rule() {
        assert_eq!(lrt_detect_uspc(&record(&[0, 0, 0])), Decision::H0);
        assert_eq!(lrt_detect_uspc(&record(&[0, 1, 0])), Decision::H1);
    }

    #[test]
    fn homodyne_detection_rule() {
        let (m, p) = flat(1.0);
        let g = ModeGrid::new(3.0, 3).unwrap();
        let zero = HomodynePeriodogram { values: vec![0.0; 3] };
        let lrt = HomodyneLrt::new(&m, 1.0, &p, &g).unwrap();
        assert!((lrt.statistic(&zero).unwrap() + 3.0 * LN_2).abs() < 1e-14);
        assert_eq!(lrt_detect_homodyne(&zero, &m, 1.0, &p, &g, 0.0).unwrap(), Decision::H0);
        let big = HomodynePeriodogram { values: vec![1e3; 3] };
        assert_eq!(lrt_detect_homodyne(&big, &m, 1.0, &p, &g, 0.0).unwrap(), Decision::H1);
        // flat band: statistic is an increasing affine function of the mean
        let mut last = f64::NEG_INFINITY;
        for k in 0..50 {
            let v = 0.05 * k as f64;
            let s = lrt.statistic(&HomodynePeriodogram { values: vec![v; 3] }).unwrap();
            assert!(s > last);
            last = s;
        }
    }

    #[test]
    fn jackknife_matches_standard_error() {
        let xs = [1.0, 4.0, 2.5, 3.0, 0.5, 7.0];
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((jackknife_mean_se(&xs).unwrap() - sd / n.sqrt()).abs() < 1e-14);
        assert_eq!(jackknife_mean_se(&[1.0]), None);
    }

    fn estimation_config<'a>(
        m: &'a NoiseSpectrumModel<f64>,
        p: &'a ProbeProfile<f64>,
        modes: usize,
        trials: usize,
        method: Measurement,
    ) -> McEstimationConfig<'a, f64> {
        McEstimationConfig {
            model: m,
            profile: p,
            grid: ModeGrid::new(modes as f64, modes).unwrap(),
            theta_true: 1.0,
            trials,
            seed: SeedSpec::new(2),
            method,
            bracket: None,
        }
    }

    #[test]
    fn estimation_harness() {
        let (m, p) = flat(1.0);
        for method in [Measurement::Uspc, Measurement::Homodyne] {
            let r = mc_estimation(&estimation_config(&m, &p, 200, 2000, method)).unwrap();
            assert!(r.efficiency > 0.85 && r.efficiency < 1.15, "{method}: {}", r.efficiency);
            assert!(r.mse_std_error.unwrap() > 0.0);
            let again = mc_estimation(&estimation_config(&m, &p, 200, 2000, method)).unwrap();
            assert_eq!(r, again);
        }
        let one = mc_estimation(&estimation_config(&m, &p, 20, 1, Measurement::Uspc)).unwrap();
        assert_eq!(one.mse_std_error, None);
        assert_eq!(one.mse, one.bias * one.bias);
        assert!(mc_estimation(&estimation_config(&m, &p, 20, 0, Measurement::Uspc)).is_err());
    }

    fn detection_config<'a>(
        m: &'a NoiseSpectrumModel<f64>,
        p: &'a ProbeProfile<f64>,
        theta1: f64,
        modes: usize,
        trials: usize,
        method: Measurement,
        estimator: DetectionEstimator,
    ) -> McDetectionConfig<'a, f64> {
        McDetectionConfig {
            model: m,
            theta1,
            profile: p,
            grid: ModeGrid::new(modes as f64, modes).unwrap(),
            trials,
            seed: SeedSpec::new(5),
            method,
            estimator,
            threshold: 0.0,
        }
    }

    #[test]
    fn uspc_miss_is_exact() {
        let (m, p) = flat(1.0);
        let r = mc_detection(&detection_config(&m, &p, 1.0, 10, 20_000, Measurement::Uspc, DetectionEstimator::Plain))
            .unwrap();
        assert_eq!(r.false_alarm.value, 0.0);
        let exact = 1.5f64.powi(-10);
        assert!((r.exponent - 10.0 * 1.5f64.ln()).abs() < 1e-12);
        assert!(r.miss.within(exact, 3.0), "{:?}", r.miss);
    }

    #[test]
    fn indistinguishable_hypotheses() {
        let (m, p) = flat(1.0);
        for est in [DetectionEstimator::Plain, DetectionEstimator::Tilted] {
            let r = mc_detection(&detection_config(&m, &p, 0.0, 5, 1000, Measurement::Homodyne, est)).unwrap();
            assert_eq!(r.error_probability.value, 0.5);
            assert_eq!(r.bounds, (0.5, 0.5));
        }
    }

    #[test]
    fn tilted_agrees_with_plain() {
        let (m, p) = flat(1.0);
        let plain = mc_detection(&detection_config(&m, &p, 1.0, 20, 20_000, Measurement::Homodyne, DetectionEstimator::Plain))
            .unwrap();
        let tilted =
            mc_detection(&detection_config(&m, &p, 1.0, 20, 20_000, Measurement::Homodyne, DetectionEstimator::Tilted))
                .unwrap();
        let diff = (plain.error_probability.value - tilted.error_probability.value).abs();
        let se = plain.error_probability.std_error.hypot(tilted.error_probability.std_error);
        assert!(diff < 4.0 * se, "{:?} vs {:?}", plain.error_probability, tilted.error_probability);
        assert!(tilted.within_bounds());
        let again =
            mc_detection(&detection_config(&m, &p, 1.0, 20, 20_000, Measurement::Homodyne, DetectionEstimator::Tilted))
                .unwrap();
        assert_eq!(tilted, again);
    }

    proptest! {
        #[test]
        fn uspc_likelihood_is_permutation_invariant(
            counts in proptest::collection::vec(0u64..20, 2..30),
            theta in 0.01f64..5.0,
            seed in any::<u64>(),
        ) {
            let (m, p) = flat(1.0);
            let g = ModeGrid::new(counts.len() as f64, counts.len()).unwrap();
            let mut shuffled = counts.clone();
            let k = (seed as usize) % shuffled.len();
            shuffled.rotate_left(k);
            shuffled.reverse();
            let a = record(&counts);
            let b = record(&shuffled);
            prop_assert_eq!(
                loglik_uspc(&a, &m, &p, &g, theta).unwrap(),
                loglik_uspc(&b, &m, &p, &g, theta).unwrap()
            );
            prop_assert_eq!(
                mle_uspc(&a, &m, &p, &g, (0.0, 10.0)).unwrap(),
                mle_uspc(&b, &m, &p, &g, (0.0, 10.0)).unwrap()
            );
        }
    }
}
