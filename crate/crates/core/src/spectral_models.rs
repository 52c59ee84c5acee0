//! Noise-spectrum families, probe (squeezing) profiles and the flat-band
//! configuration.
//!
//! All spectra are two-sided and even in frequency. Units follow the usual
//! dimensionless convention: only products such as `S_k * S_X`,
//! `S_X / S_eta` and `B * T` carry physical meaning.

use std::cell::Cell;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use crate::error::{domain, Error, Result};
use crate::numerics::{integrate, integrate_piecewise, Integral, QuadratureSpec};
use crate::scalar::Scalar;

/// Frequency support of a spectrum.
#[derive(Debug, Clone, PartialEq)]
pub enum Support<T> {
    /// Sorted breakpoints; the support is `[first, last]` and the integrand
    /// is smooth between consecutive breakpoints.
    Bounded(Vec<T>),
    /// The whole real line (spectra with fast-decaying tails).
    Unbounded,
}

impl<T: Scalar> Support<T> {
    pub fn symmetric_band(cutoff: T) -> Self {
        Support::Bounded(vec![-cutoff, cutoff])
    }

    /// Adds extra breakpoints that fall inside a bounded support.
    fn refined(&self, extra: &[T]) -> Self {
        match self {
            Support::Unbounded => Support::Unbounded,
            Support::Bounded(bp) if bp.len() < 2 => self.clone(),
            Support::Bounded(bp) => {
                let (lo, hi) = (bp[0], bp[bp.len() - 1]);
                let mut all: Vec<T> = bp
                    .iter()
                    .copied()
                    .chain(extra.iter().copied().filter(|&x| x > lo && x < hi))
                    .collect();
                all.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
                all.dedup();
                Support::Bounded(all)
            }
        }
    }
}

/// Piecewise-linear spectrum sampled on a frequency grid symmetric about 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TabulatedSpectrum<T> {
    omega: Vec<T>,
    values: Vec<T>,
}

impl<T: Scalar> TabulatedSpectrum<T> {
    /// Builds a table from `(omega, value)` samples.
    ///
    /// One-sided tables (all `omega >= 0`) are mirrored. Two-sided tables must
    /// already be symmetric; their negative half is replaced by the exact
    /// mirror image of the positive half.
    pub fn new(omega: Vec<T>, values: Vec<T>) -> Result<Self> {
        if omega.len() != values.len() {
            return Err(Error::Validation("omega and value columns differ in length".into()));
        }
        if omega.len() < 2 {
            return Err(Error::Validation("a tabulated spectrum needs at least two samples".into()));
        }
        if omega.iter().chain(values.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Validation("tabulated spectrum contains non-finite samples".into()));
        }
        if values.iter().any(|&v| v < T::zero()) {
            return Err(Error::Validation("spectral samples must be nonnegative".into()));
        }
        if omega.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Validation("frequency samples must be strictly increasing".into()));
        }

        if omega[0] >= T::zero() {
            let start = usize::from(omega[0] == T::zero());
            let mut w: Vec<T> = omega[start..].iter().rev().map(|&x| -x).collect();
            let mut v: Vec<T> = values[start..].iter().rev().copied().collect();
            w.extend_from_slice(&omega);
            v.extend_from_slice(&values);
            return Ok(Self { omega: w, values: v });
        }

        let n = omega.len();
        let scale = omega[n - 1].abs().max(omega[0].abs());
        let vscale = values.iter().copied().fold(T::zero(), T::max);
        let tol = T::lit(1e-9);
        for i in 0..n / 2 {
            let j = n - 1 - i;
            if (omega[i] + omega[j]).abs() > tol * scale {
                return Err(Error::Validation(format!(
                    "frequency grid is not symmetric about 0 ({} vs {})",
                    omega[i], omega[j]
                )));
            }
            if (values[i] - values[j]).abs() > tol * vscale {
                return Err(Error::Validation(format!(
                    "tabulated spectrum is not even (value at {} differs from its mirror)",
                    omega[j]
                )));
            }
        }
        if n % 2 == 1 && omega[n / 2].abs() > tol * scale {
            return Err(Error::Validation("odd-length grid must contain omega = 0".into()));
        }

        let mut w = omega;
        let mut v = values;
        for i in 0..n / 2 {
            let j = n - 1 - i;
            w[i] = -w[j];
            v[i] = v[j];
        }
        if n % 2 == 1 {
            w[n / 2] = T::zero();
        }
        Ok(Self { omega: w, values: v })
    }

    /// Parses the two-column text format: `omega value` per line (whitespace
    /// or comma separated), `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut omega = Vec::new();
        let mut values = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .collect();
            if fields.len() != 2 {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected 2 columns, found {}", fields.len()),
                });
            }
            let parse = |s: &str| -> Result<T> {
                s.parse::<f64>().map(T::lit).map_err(|e| Error::Parse {
                    line: idx + 1,
                    message: format!("invalid number {s:?}: {e}"),
                })
            };
            omega.push(parse(fields[0])?);
            values.push(parse(fields[1])?);
        }
        Self::new(omega, values)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn nodes(&self) -> &[T] {
        &self.omega
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn max_frequency(&self) -> T {
        self.omega[self.omega.len() - 1]
    }

    /// Linear interpolation; `None` outside the sampled range. The table is
    /// exactly symmetric, so negative frequencies are folded onto positive.
    pub fn interpolate(&self, w: T) -> Option<T> {
        let w = w.abs();
        let n = self.omega.len();
        if !(w >= self.omega[0] && w <= self.omega[n - 1]) {
            return None;
        }
        let i = self.omega.partition_point(|&x| x <= w).clamp(1, n - 1);
        let (x0, x1) = (self.omega[i - 1], self.omega[i]);
        let (y0, y1) = (self.values[i - 1], self.values[i]);
        let t = (w - x0) / (x1 - x0);
        Some(y0 + t * (y1 - y0))
    }

    /// Interpolation that holds the edge value outside the sampled range.
    pub fn interpolate_clamped(&self, w: T) -> T {
        let n = self.omega.len();
        if w.abs() >= self.omega[n - 1] {
            self.values[n - 1]
        } else {
            self.interpolate(w).unwrap_or(self.values[0])
        }
    }
}

/// Known spectral shape `R(omega)` of the magnitude-squared family.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectralShape<T> {
    /// `level` for `|omega| <= cutoff`, 0 outside.
    Band { cutoff: T, level: T },
    /// `peak / (1 + (omega / half_width)^2)`.
    Lorentzian { half_width: T, peak: T },
    /// Linear interpolation of samples, 0 outside the table.
    Tabulated(TabulatedSpectrum<T>),
}

impl<T: Scalar> SpectralShape<T> {
    pub fn eval(&self, w: T) -> T {
        match self {
            SpectralShape::Band { cutoff, level } => {
                // closed band edge, with a few ulps of slack so that mode
                // frequencies 2*pi*m/T computed at the edge stay inside
                let edge = *cutoff * (T::one() + T::lit(8.0) * T::epsilon());
                if w.abs() <= edge {
                    *level
                } else {
                    T::zero()
                }
            }
            SpectralShape::Lorentzian { half_width, peak } => {
                let x = w / *half_width;
                *peak / (T::one() + x * x)
            }
            SpectralShape::Tabulated(table) => table.interpolate(w).unwrap_or_else(T::zero),
        }
    }

    pub fn support(&self) -> Support<T> {
        match self {
            SpectralShape::Band { cutoff, .. } => Support::symmetric_band(*cutoff),
            SpectralShape::Lorentzian { .. } => Support::Unbounded,
            SpectralShape::Tabulated(table) => Support::Bounded(table.nodes().to_vec()),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            SpectralShape::Band { cutoff, level } => {
                if !(*cutoff > T::zero() && cutoff.is_finite()) {
                    return Err(Error::Validation(format!("band cutoff must be positive, got {cutoff}")));
                }
                if !(*level >= T::zero() && level.is_finite()) {
                    return Err(Error::Validation(format!("band level must be nonnegative, got {level}")));
                }
            }
            SpectralShape::Lorentzian { half_width, peak } => {
                if !(*half_width > T::zero() && half_width.is_finite()) {
                    return Err(Error::Validation("Lorentzian half width must be positive".into()));
                }
                if !(*peak >= T::zero() && peak.is_finite()) {
                    return Err(Error::Validation("Lorentzian peak must be nonnegative".into()));
                }
            }
            SpectralShape::Tabulated(_) => {}
        }
        Ok(())
    }
}

type PsdFn<T> = Arc<dyn Fn(T, T) -> T + Send + Sync>;

/// User-supplied `S_X(omega | theta)` with an optional analytic derivative.
#[derive(Clone)]
pub struct GeneralSpectrum<T> {
    psd: PsdFn<T>,
    dpsd: Option<PsdFn<T>>,
    support: Support<T>,
    theta_range: (T, T),
}

impl<T: Scalar> GeneralSpectrum<T> {
    pub fn new(
        psd: impl Fn(T, T) -> T + Send + Sync + 'static,
        support: Support<T>,
        theta_range: (T, T),
    ) -> Self {
        Self {
            psd: Arc::new(psd),
            dpsd: None,
            support,
            theta_range,
        }
    }

    pub fn with_derivative(mut self, dpsd: impl Fn(T, T) -> T + Send + Sync + 'static) -> Self {
        self.dpsd = Some(Arc::new(dpsd));
        self
    }
}

impl<T: fmt::Debug> fmt::Debug for GeneralSpectrum<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GeneralSpectrum")
            .field("has_derivative", &self.dpsd.is_some())
            .field("support", &self.support)
            .field("theta_range", &self.theta_range)
            .finish()
    }
}

/// Parametric family `S_X(omega | theta)` of displacement spectra.
#[derive(Debug, Clone)]
pub enum NoiseSpectrumModel<T> {
    /// `S_X = theta^2 R(omega)`, admissible for `theta >= 0`.
    MagnitudeSquared(SpectralShape<T>),
    General(GeneralSpectrum<T>),
}

/// Spectrum value, its theta-derivative and the Fisher weight
/// `(dS_X)^2 / S_X` at one frequency.
///
/// The weight stays finite where `S_X -> 0` (it equals `4 R` for the
/// magnitude-squared family) so every information integrand can be written
/// without dividing by `S_X`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PsdPoint<T> {
    pub psd: T,
    pub dpsd: T,
    pub fisher_weight: T,
}

impl<T: Scalar> NoiseSpectrumModel<T> {
    pub fn magnitude_squared(shape: SpectralShape<T>) -> Result<Self> {
        shape.validate()?;
        Ok(Self::MagnitudeSquared(shape))
    }

    fn check_theta(&self, theta: T) -> Result<()> {
        let (lo, hi) = match self {
            Self::MagnitudeSquared(_) => (T::zero(), T::infinity()),
            Self::General(g) => g.theta_range,
        };
        if theta.is_finite() && theta >= lo && theta <= hi {
            Ok(())
        } else {
            Err(domain(format!("theta = {theta} outside admissible range [{lo}, {hi}]")))
        }
    }

    /// `S_X(omega | theta)`.
    pub fn psd(&self, w: T, theta: T) -> Result<T> {
        self.check_theta(theta)?;
        match self {
            Self::MagnitudeSquared(shape) => Ok(theta * theta * shape.eval(w)),
            Self::General(g) => {
                let v = (g.psd)(w, theta);
                if v >= T::zero() && v.is_finite() {
                    Ok(v)
                } else {
                    Err(domain(format!("S_X({w} | {theta}) = {v} is not a valid PSD value")))
                }
            }
        }
    }

    /// `dS_X / dtheta`.
    pub fn psd_dtheta(&self, w: T, theta: T) -> Result<T> {
        self.check_theta(theta)?;
        match self {
            Self::MagnitudeSquared(shape) => Ok(T::lit(2.0) * theta * shape.eval(w)),
            Self::General(g) => match &g.dpsd {
                Some(d) => Ok(d(w, theta)),
                None => Err(Error::Config(
                    "general spectrum model has no analytic theta-derivative".into(),
                )),
            },
        }
    }

    pub fn point(&self, w: T, theta: T) -> Result<PsdPoint<T>> {
        match self {
            Self::MagnitudeSquared(shape) => {
                self.check_theta(theta)?;
                let r = shape.eval(w);
                Ok(PsdPoint {
                    psd: theta * theta * r,
                    dpsd: T::lit(2.0) * theta * r,
                    fisher_weight: T::lit(4.0) * r,
                })
            }
            Self::General(_) => {
                let psd = self.psd(w, theta)?;
                let dpsd = self.psd_dtheta(w, theta)?;
                let fisher_weight = if psd > T::zero() {
                    dpsd * dpsd / psd
                } else if dpsd == T::zero() {
                    T::zero()
                } else {
                    return Err(domain(format!(
                        "dS_X = {dpsd} where S_X = 0 at omega = {w}: support varies with theta"
                    )));
                };
                Ok(PsdPoint {
                    psd,
                    dpsd,
                    fisher_weight,
                })
            }
        }
    }

    pub fn support(&self) -> Support<T> {
        match self {
            Self::MagnitudeSquared(shape) => shape.support(),
            Self::General(g) => g.support.clone(),
        }
    }

    /// The shape `R` when the model is in the magnitude-squared family.
    pub fn shape(&self) -> Option<&SpectralShape<T>> {
        match self {
            Self::MagnitudeSquared(s) => Some(s),
            Self::General(_) => None,
        }
    }
}

type GainFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// Antisqueezing power gain `|g(omega)|^2`.
#[derive(Clone)]
pub enum GainProfile<T> {
    Constant(T),
    /// Held at the edge values outside the table.
    Tabulated(TabulatedSpectrum<T>),
    Custom(GainFn<T>),
}

impl<T: fmt::Debug> fmt::Debug for GainProfile<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GainProfile::Constant(g) => f.debug_tuple("Constant").field(g).finish(),
            GainProfile::Tabulated(t) => f.debug_tuple("Tabulated").field(t).finish(),
            GainProfile::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// Squeezed probe: mean photon flux `|alpha|^2` and antisqueezing gain.
#[derive(Debug, Clone)]
pub struct ProbeProfile<T> {
    flux: T,
    gain: GainProfile<T>,
}

impl<T: Scalar> ProbeProfile<T> {
    pub fn new(flux: T, gain: GainProfile<T>) -> Result<Self> {
        if !(flux > T::zero() && flux.is_finite()) {
            return Err(Error::Validation(format!("mean photon flux must be positive, got {flux}")));
        }
        match &gain {
            GainProfile::Constant(g) if !(*g > T::zero() && g.is_finite()) => {
                return Err(Error::Validation(format!("gain must be positive, got {g}")));
            }
            GainProfile::Tabulated(t) if t.values().iter().any(|&g| g <= T::zero()) => {
                return Err(Error::Validation("tabulated gain must be positive".into()));
            }
            _ => {}
        }
        Ok(Self { flux, gain })
    }

    /// Coherent-state probe (`|g|^2 = 1`).
    pub fn coherent(flux: T) -> Result<Self> {
        Self::new(flux, GainProfile::Constant(T::one()))
    }

    pub fn custom_gain(flux: T, gain: impl Fn(T) -> T + Send + Sync + 'static) -> Result<Self> {
        Self::new(flux, GainProfile::Custom(Arc::new(gain)))
    }

    pub fn flux(&self) -> T {
        self.flux
    }

    /// `|g(omega)|^2`.
    pub fn antisqueezing_gain(&self, w: T) -> T {
        match &self.gain {
            GainProfile::Constant(g) => *g,
            GainProfile::Tabulated(t) => t.interpolate_clamped(w),
            GainProfile::Custom(f) => f(w),
        }
    }

    /// `|h(omega)|^2 = 1 / |g(omega)|^2`.
    pub fn squeezing_gain(&self, w: T) -> T {
        T::one() / self.antisqueezing_gain(w)
    }

    /// Intensity-quadrature spectrum `S_k = |alpha g|^2`.
    pub fn probe_psd(&self, w: T) -> T {
        self.flux * self.antisqueezing_gain(w)
    }

    /// Quantum-limited phase-quadrature spectrum `S_eta = 1 / (4 S_k)`.
    pub fn phase_psd(&self, w: T) -> Result<T> {
        let sk = self.probe_psd(w);
        if sk > T::zero() && sk.is_finite() {
            Ok(T::lit(0.25) / sk)
        } else {
            Err(domain(format!("S_k({w}) = {sk}: phase spectrum is singular")))
        }
    }

    fn breakpoints(&self) -> Vec<T> {
        match &self.gain {
            GainProfile::Tabulated(t) => t.nodes().to_vec(),
            _ => Vec::new(),
        }
    }
}

/// Flat-band example: `S_k` and `R` constant for `|omega| <= 2 pi B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatBandConfig<T> {
    /// Band limit `B` in Hz.
    pub bandwidth: T,
    /// `S_k(0)`.
    pub probe_level: T,
    /// Square root of the spectral SNR (`theta` or `phi`).
    pub snr_sqrt: T,
}

impl<T: Scalar> FlatBandConfig<T> {
    pub fn new(bandwidth: T, probe_level: T, snr_sqrt: T) -> Result<Self> {
        let c = Self {
            bandwidth,
            probe_level,
            snr_sqrt,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > T::zero() && self.bandwidth.is_finite()) {
            return Err(Error::Validation(format!("bandwidth must be positive, got {}", self.bandwidth)));
        }
        if !(self.probe_level > T::zero() && self.probe_level.is_finite()) {
            return Err(Error::Validation(format!(
                "probe level S_k(0) must be positive, got {}",
                self.probe_level
            )));
        }
        if !(self.snr_sqrt >= T::zero() && self.snr_sqrt.is_finite()) {
            return Err(Error::Validation(format!("theta must be nonnegative, got {}", self.snr_sqrt)));
        }
        Ok(())
    }

    /// Band edge `2 pi B` in rad/s.
    pub fn cutoff(&self) -> T {
        T::TAU() * self.bandwidth
    }
}

/// Builds the flat-band model `R = S_eta(0) = 1 / (4 S_k(0))` inside the band
/// and the matching constant probe, so that `S_X / S_eta = theta^2`.
pub fn make_flat_band<T: Scalar>(
    config: &FlatBandConfig<T>,
) -> Result<(NoiseSpectrumModel<T>, ProbeProfile<T>)> {
    config.validate()?;
    let level = T::lit(0.25) / config.probe_level;
    let model = NoiseSpectrumModel::magnitude_squared(SpectralShape::Band {
        cutoff: config.cutoff(),
        level,
    })?;
    let profile = ProbeProfile::coherent(config.probe_level)?;
    Ok((model, profile))
}

/// Integrates `f(omega, point, S_k)` over the support of the model (merged
/// with the probe's breakpoints). Outside the support every information
/// integrand is zero.
pub(crate) fn spectral_integral<T, F>(
    model: &NoiseSpectrumModel<T>,
    profile: &ProbeProfile<T>,
    theta: T,
    spec: &QuadratureSpec<T>,
    mut f: F,
) -> Result<Integral<T>>
where
    T: Scalar,
    F: FnMut(T, PsdPoint<T>, T) -> Result<T>,
{
    model.check_theta(theta)?;
    integrate_over_support(model, profile, spec, |w| {
        model.point(w, theta).and_then(|p| f(w, p, profile.probe_psd(w)))
    })
}

/// Like [`spectral_integral`] but only needs `S_X`, not its derivative.
pub(crate) fn psd_integral<T, F>(
    model: &NoiseSpectrumModel<T>,
    profile: &ProbeProfile<T>,
    theta: T,
    spec: &QuadratureSpec<T>,
    mut f: F,
) -> Result<Integral<T>>
where
    T: Scalar,
    F: FnMut(T, T, T) -> Result<T>,
{
    model.check_theta(theta)?;
    integrate_over_support(model, profile, spec, |w| {
        model.psd(w, theta).and_then(|s| f(w, s, profile.probe_psd(w)))
    })
}

fn integrate_over_support<T, F>(
    model: &NoiseSpectrumModel<T>,
    profile: &ProbeProfile<T>,
    spec: &QuadratureSpec<T>,
    mut g: F,
) -> Result<Integral<T>>
where
    T: Scalar,
    F: FnMut(T) -> Result<T>,
{
    let failure: Cell<Option<Error>> = Cell::new(None);
    let mut integrand = |w: T| -> T {
        match g(w) {
            Ok(v) => v,
            Err(e) => {
                let prev = failure.take();
                failure.set(Some(prev.unwrap_or(e)));
                T::zero()
            }
        }
    };
    let result = match model.support().refined(&profile.breakpoints()) {
        Support::Bounded(bp) => integrate_piecewise(&mut integrand, &bp, spec),
        Support::Unbounded => integrate(&mut integrand, T::neg_infinity(), T::infinity(), spec),
    };
    if let Some(e) = failure.take() {
        return Err(e);
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn unit_band() -> NoiseSpectrumModel<f64> {
        NoiseSpectrumModel::magnitude_squared(SpectralShape::Band {
            cutoff: 2.0 * PI,
            level: 1.0,
        })
        .unwrap()
    }

    #[test]
    fn magnitude_squared_substitution() {
        let m = unit_band();
        assert_eq!(m.psd(1.0, 2.0).unwrap(), 4.0);
        assert_eq!(m.psd(1.0, 0.0).unwrap(), 0.0);
        assert_eq!(m.psd(100.0, 2.0).unwrap(), 0.0);
        assert_eq!(m.psd_dtheta(1.0, 3.0).unwrap(), 6.0);
        assert_eq!(m.psd_dtheta(1.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn negative_theta_is_domain_error() {
        assert!(matches!(unit_band().psd(0.0, -1.0), Err(Error::Domain(_))));
        assert!(matches!(unit_band().psd(0.0, f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn flat_band_levels() {
        let cfg = FlatBandConfig::new(1.0, 1.0, 1.0).unwrap();
        let (m, p) = make_flat_band(&cfg).unwrap();
        // R = 1 / (4 S_k(0))
        assert_eq!(m.psd(0.3, 1.0).unwrap(), 0.25);
        assert_eq!(m.psd(0.3, 2.0).unwrap() / 4.0, 0.25);
        assert_eq!(p.probe_psd(0.3), 1.0);
        assert_eq!(p.probe_psd(2.0 * PI), 1.0);
        let snr = m.psd(0.0, 1.0).unwrap() / p.phase_psd(0.0).unwrap();
        assert_eq!(snr, 1.0);
        assert_eq!(m.psd(7.0, 1.0).unwrap(), 0.0);

        let cfg = FlatBandConfig::new(2.0, 0.5, 1.0).unwrap();
        let (m, _) = make_flat_band(&cfg).unwrap();
        assert_eq!(m.psd(4.0 * PI, 1.0).unwrap(), 0.5);
        assert_eq!(m.psd(4.0 * PI * 1.001, 1.0).unwrap(), 0.0);
        assert!(m.psd(-3.0, 0.0).unwrap() == 0.0);
    }

    #[test]
    fn flat_band_rejects_bad_config() {
        assert!(FlatBandConfig::new(0.0, 1.0, 1.0).is_err());
        assert!(FlatBandConfig::new(1.0, 0.0, 1.0).is_err());
        assert!(FlatBandConfig::new(1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn probe_and_phase_spectra() {
        let p = ProbeProfile::coherent(1.0).unwrap();
        assert_eq!(p.probe_psd(3.0), 1.0);
        assert_eq!(p.phase_psd(3.0).unwrap(), 0.25);
        let p = ProbeProfile::new(4.0, GainProfile::Constant(2.0)).unwrap();
        assert_eq!(p.probe_psd(-1.0), 8.0);
        let p = ProbeProfile::coherent(0.25).unwrap();
        assert_eq!(p.phase_psd(0.0).unwrap(), 1.0);
        let p = ProbeProfile::custom_gain(1.0, |_w: f64| 0.0).unwrap();
        assert!(matches!(p.phase_psd(0.0), Err(Error::Domain(_))));
        assert_eq!(p.squeezing_gain(1.0), f64::INFINITY);
        assert!(ProbeProfile::coherent(0.0).is_err());
        assert!(ProbeProfile::new(1.0, GainProfile::Constant(-1.0)).is_err());
    }

    #[test]
    fn squeezing_and_antisqueezing_gains_are_reciprocal() {
        let p = ProbeProfile::custom_gain(2.0, |w: f64| 1.0 + w * w).unwrap();
        for w in [-3.0, 0.0, 0.5, 10.0] {
            assert!((p.squeezing_gain(w) * p.antisqueezing_gain(w) - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn general_model_without_derivative() {
        let g = GeneralSpectrum::new(|w: f64, t: f64| t / (1.0 + w * w), Support::Unbounded, (0.0, 10.0));
        let m = NoiseSpectrumModel::General(g);
        assert!((m.psd(1.0, 2.0).unwrap() - 1.0).abs() < 1e-15);
        assert!(matches!(m.psd_dtheta(1.0, 2.0), Err(Error::Config(_))));
        assert!(matches!(m.psd(1.0, 11.0), Err(Error::Domain(_))));
    }

    #[test]
    fn general_model_support_varying_is_rejected() {
        let g = GeneralSpectrum::new(|_w: f64, _t: f64| 0.0, Support::Unbounded, (0.0, 1.0))
            .with_derivative(|_w, _t| 1.0);
        let m = NoiseSpectrumModel::General(g);
        assert!(matches!(m.point(0.0, 0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let g = GeneralSpectrum::new(
            |w: f64, t: f64| t.powi(3) * (-w * w).exp() + t * t / (1.0 + w * w),
            Support::Unbounded,
            (0.0, 100.0),
        )
        .with_derivative(|w, t| 3.0 * t * t * (-w * w).exp() + 2.0 * t / (1.0 + w * w));
        let models = [
            NoiseSpectrumModel::General(g),
            NoiseSpectrumModel::magnitude_squared(SpectralShape::Lorentzian {
                half_width: 2.0,
                peak: 3.0,
            })
            .unwrap(),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for m in &models {
            for _ in 0..1000 {
                let w: f64 = rng.random_range(-3.0..3.0);
                let t: f64 = rng.random_range(0.1..5.0);
                let h = 1e-6 * t.max(1.0);
                let fd = (m.psd(w, t + h).unwrap() - m.psd(w, t - h).unwrap()) / (2.0 * h);
                let an = m.psd_dtheta(w, t).unwrap();
                assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-12), "{fd} vs {an}");
            }
        }
    }

    #[test]
    fn fisher_weight_is_theta_independent_for_magnitude_squared() {
        let m = unit_band();
        let a = m.point(1.0, 0.0).unwrap();
        let b = m.point(1.0, 3.0).unwrap();
        assert_eq!(a.fisher_weight, 4.0);
        assert_eq!(b.fisher_weight, 4.0);
        assert!((b.dpsd * b.dpsd / b.psd - 4.0).abs() < 1e-15);
    }

    #[test]
    fn random_samples_are_even_and_nonnegative() {
        let table = TabulatedSpectrum::new(vec![0.0, 1.0, 2.5, 4.0], vec![2.0, 1.5, 0.2, 0.0]).unwrap();
        let models = [
            unit_band(),
            NoiseSpectrumModel::magnitude_squared(SpectralShape::Lorentzian {
                half_width: 0.7,
                peak: 2.0,
            })
            .unwrap(),
            NoiseSpectrumModel::magnitude_squared(SpectralShape::Tabulated(table)).unwrap(),
        ];
        let probe = ProbeProfile::custom_gain(3.0, |w: f64| 0.5 + w.cos().powi(2)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for i in 0..1_000_000 {
            let m = &models[i % 3];
            let w: f64 = rng.random_range(-10.0..10.0);
            let t: f64 = rng.random_range(0.0..10.0);
            let s = m.psd(w, t).unwrap();
            assert!(s >= 0.0);
            let mirror = m.psd(-w, t).unwrap();
            assert_eq!(s, mirror);
            if i % 100 == 0 {
                let sk = probe.probe_psd(w);
                let se = probe.phase_psd(w).unwrap();
                assert!(sk > 0.0 && se > 0.0);
                assert!((sk * se - 0.25).abs() <= 2.0 * f64::EPSILON);
            }
        }
    }

    #[test]
    fn flat_band_snr_is_theta_squared() {
        for theta in [0.0f64, 1e-3, 0.37, 1.0, 4.2, 10.0] {
            for level in [0.3, 1.0, 7.0] {
                let (m, p) = make_flat_band(&FlatBandConfig::new(1.5, level, theta).unwrap()).unwrap();
                let snr = m.psd(0.0, theta).unwrap() / p.phase_psd(0.0).unwrap();
                assert!((snr - theta * theta).abs() <= 4.0 * f64::EPSILON * theta * theta);
            }
        }
    }

    #[test]
    fn table_parsing() {
        let text = "# omega value\n0 1.0\n1.0, 0.5\n\n# trailing comment\n2 0\n";
        let t = TabulatedSpectrum::<f64>::parse(text).unwrap();
        assert_eq!(t.nodes(), &[-2.0, -1.0, 0.0, 1.0, 2.0]);
        assert_eq!(t.values(), &[0.0, 0.5, 1.0, 0.5, 0.0]);
        assert_eq!(t.interpolate(0.5), Some(0.75));
        assert_eq!(t.interpolate(-0.5), Some(0.75));
        assert_eq!(t.interpolate(3.0), None);

        let err = TabulatedSpectrum::<f64>::parse("0 1\n1 2 3\n").unwrap_err();
        assert_eq!(
            err,
            Error::Parse {
                line: 2,
                message: "expected 2 columns, found 3".into()
            }
        );
        assert!(matches!(TabulatedSpectrum::<f64>::parse("0 x\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn table_validation() {
        assert!(TabulatedSpectrum::new(vec![0.0, 1.0], vec![1.0, -1.0]).is_err());
        assert!(TabulatedSpectrum::new(vec![1.0, 0.5], vec![1.0, 1.0]).is_err());
        assert!(TabulatedSpectrum::new(vec![-1.0, 2.0], vec![1.0, 1.0]).is_err());
        assert!(TabulatedSpectrum::new(vec![-1.0, 1.0], vec![1.0, 2.0]).is_err());
        let t = TabulatedSpectrum::new(vec![-2.0, -0.5, 0.5, 2.0], vec![0.0, 3.0, 3.0, 0.0]).unwrap();
        assert_eq!(t.nodes(), &[-2.0, -0.5, 0.5, 2.0]);
    }

    #[test]
    fn spectral_integral_over_band() {
        let (m, p) = make_flat_band(&FlatBandConfig::new(1.0, 1.0, 1.0).unwrap()).unwrap();
        let r = spectral_integral(&m, &p, 1.0, &QuadratureSpec::default(), |_, pt, _| Ok(pt.psd)).unwrap();
        assert!((r.value - 0.25 * 4.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn spectral_integral_propagates_errors() {
        let g = GeneralSpectrum::new(|w: f64, _t: f64| 1.0 / (1.0 + w * w), Support::Unbounded, (0.0, 1.0));
        let m = NoiseSpectrumModel::General(g);
        let p = ProbeProfile::coherent(1.0).unwrap();
        let r = spectral_integral(&m, &p, 0.5, &QuadratureSpec::default(), |_, pt, _| Ok(pt.psd));
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
