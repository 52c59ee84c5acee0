//! Fisher informations for estimating a spectral parameter `theta`.
//!
//! All continuum quantities are `T * Int dw/2pi (...)` over the two-sided
//! frequency axis, restricted to the support of `S_X`. Integrands are written
//! in terms of the Fisher weight `(dS_X)^2 / S_X` (see [`PsdPoint`]) so they
//! stay finite where `S_X` vanishes, including `theta = 0` for
//! magnitude-squared models.

use std::fmt;
use std::sync::Arc;

use crate::error::{domain, Error, Result};
use crate::numerics::{integrate, Integral, QuadratureSpec};
use crate::scalar::Scalar;
use crate::spectral_models::{spectral_integral, NoiseSpectrumModel, ProbeProfile, PsdPoint};
use crate::stochastic_sim::ModeGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InfoMethod {
    QuantumBound,
    UspcContinuum,
    UspcDiscrete,
    Homodyne,
    HomodyneDiscrete,
    LowSnrUspc,
    LowSnrHomodyne,
    FlatClosedForm,
}

impl InfoMethod {
    pub fn tag(self) -> &'static str {
        match self {
            InfoMethod::QuantumBound => "quantum-bound",
            InfoMethod::UspcContinuum => "uspc-continuum",
            InfoMethod::UspcDiscrete => "uspc-discrete",
            InfoMethod::Homodyne => "homodyne",
            InfoMethod::HomodyneDiscrete => "homodyne-discrete",
            InfoMethod::LowSnrUspc => "low-snr-uspc",
            InfoMethod::LowSnrHomodyne => "low-snr-homodyne",
            InfoMethod::FlatClosedForm => "flat-closed-form",
        }
    }
}

impl fmt::Display for InfoMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

/// Quadrature bookkeeping, with the error estimate in the units of the
/// reported value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSummary<T> {
    pub error_estimate: T,
    pub evaluations: usize,
    pub subintervals: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InfoReport<T> {
    pub value: T,
    pub method: InfoMethod,
    pub duration: T,
    pub quadrature: Option<QuadratureSummary<T>>,
    /// Mode count for discrete-grid evaluations.
    pub modes: Option<usize>,
}

impl<T: Scalar> InfoReport<T> {
    /// Cramer-Rao bound `1 / J` (infinite when `J = 0`).
    pub fn crb(&self) -> T {
        T::one() / self.value
    }

    fn continuum(method: InfoMethod, duration: T, integral: Integral<T>) -> Self {
        let scale = duration / T::TAU();
        Self {
            value: scale * integral.value,
            method,
            duration,
            quadrature: Some(QuadratureSummary {
                error_estimate: scale * integral.error_estimate,
                evaluations: integral.evaluations,
                subintervals: integral.subintervals,
            }),
            modes: None,
        }
    }

    fn discrete(method: InfoMethod, grid: &ModeGrid<T>, value: T) -> Self {
        Self {
            value,
            method,
            duration: grid.duration(),
            quadrature: None,
            modes: Some(grid.modes()),
        }
    }
}

pub(crate) fn check_duration<T: Scalar>(duration: T) -> Result<()> {
    if duration > T::zero() && duration.is_finite() {
        Ok(())
    } else {
        Err(domain(format!("observation time must be positive, got {duration}")))
    }
}

fn nonneg<T: Scalar>(v: T) -> T {
    // roundoff in the integrand can leave tiny negatives around exact zeros
    v.max(T::zero())
}

/// Integrand of [`quantum_fisher_bound`] (before the `T / 2pi` factor):
/// `(d ln S_X)^2 / (2 + 1/(S_k S_X))`.
pub fn quantum_integrand<T: Scalar>(p: &PsdPoint<T>, s_k: T) -> T {
    nonneg(p.fisher_weight * s_k / (T::one() + T::lit(2.0) * s_k * p.psd))
}

/// Integrand of [`fisher_uspc_continuum`] for photon flux spectrum `flux`.
pub fn uspc_integrand<T: Scalar>(p: &PsdPoint<T>, flux: T) -> T {
    quantum_integrand(p, flux)
}

/// Integrand of [`fisher_homodyne`]: `(dS_X)^2 / (2 (S_X + S_eta)^2)`.
pub fn homodyne_integrand<T: Scalar>(p: &PsdPoint<T>, s_eta: T) -> T {
    let total = p.psd + s_eta;
    p.fisher_weight * p.psd / (T::lit(2.0) * total * total)
}

/// Extended-convexity quantum bound
/// `K = T Int dw/2pi (d ln S_X)^2 / (2 + 1/(S_k S_X))`.
pub fn quantum_fisher_bound<T: Scalar>(
    model: &NoiseSpectrumModel<T>,
    profile: &ProbeProfile<T>,
    theta: T,
    duration: T,
    spec: &QuadratureSpec<T>,
) -> Result<InfoReport<T>> {
    check_duration(duration)?;
    let i = spectral_integral(model, profile, theta, spec, |_, p, s_k| Ok(quantum_integrand(&p, s_k)))?;
    Ok(InfoReport::continuum(InfoMethod::QuantumBound, duration, i))
}

/// USPC Fisher information in the long-time limit, with the photon flux
/// spectrum `|alpha g(w)|^2` taken from the probe.
pub fn fisher_uspc_continuum<T: Scalar>(
    model: &NoiseSpectrumModel<T>,
    profile: &ProbeProfile<T>,
    theta: T,
    duration: T,
    spec: &QuadratureSpec<T>,
) -> Result<InfoReport<T>> {
    check_duration(duration)?;
    let i = spectral_integral(model, profile, theta, spec, |w, p, _| {
        Ok(uspc_integrand(&p, profile.flux() * profile.antisqueezing_gain(w)))
    })?;
    Ok(InfoReport::continuum(InfoMethod::UspcContinuum, duration, i))
}

/// Fisher information of one Bose-Einstein mode with mean `mean` and
/// derivative `dmean`: `(dN)^2 / (N (1 + N))`.
pub fn bose_einstein_information<T: Scalar>(mean: T, dmean: T) -> Result<T> {
    if !(mean >= T::zero() && mean.is_finite() && dmean.is_finite()) {
        return Err(domain(format!("invalid Bose-Einstein mean {mean} (derivative {dmean})")));
    }
    if mean == T::zero() {
        return if dmean == T::zero() {
            Ok(T::zero())
        } else {
            Err(domain(format!("zero mean with nonzero derivative {dmean}")))
        };
    }
    Ok(dmean * dmean / (mean * (T::one() + mean)))
}

fn uspc_mode_information<T: Scalar>(p: &PsdPoint<T>, flux: T) -> T {
    let two = T::lit(2.0);
    two * flux * p.fisher_weight / (T::one() + two * flux * p.psd)
}

/// Finite-mode USPC information `sum_m (dN_m)^2 / (N_m (1 + N_m))` with
/// `N_m = 2 |alpha g(w_m)|^2 S_X(w_m)`. Modes where `S_X` vanishes use the
/// limit of the expression, which is finite for magnitude-squared models.
pub fn fisher_uspc_discrete<T: Scalar>(
    model: &NoiseSpectrumModel<T>,
    profile: &ProbeProfile<T>,
    theta: T,
    grid: &ModeGrid<T>,
) -> Result<InfoReport<T>> {
    let mut total = T::zero();
    for w in grid.frequencies() {
        let p = model.point(w, theta)?;
        total = total + uspc_mode_information(&p, profile.probe_psd(w));
    }
    Ok(InfoReport::discrete(InfoMethod::UspcDiscrete, grid, total))
}

/// Homodyne information in the Whittle form
/// `T Int dw/2pi (dS_X)^2 / (2 (S_X + S_eta)^2)`, `S_eta = 1/(4 S_k)`.
pub fn fisher_homodyne<T: Scalar>(
    model: &NoiseSpectrumModel<T>,
    profile: &ProbeProfile<T>,
    theta: T,
    duration: T,
    spec: &QuadratureSpec<T>,
) -> Result<InfoReport<T>> {
    check_duration(duration)?;
    let i = spectral_integral(model, profile, theta, spec, |w, p, _| {
        Ok(homodyne_integrand(&p, profile.phase_psd(w)?))
    })?;
    Ok(InfoReport::continuum(InfoMethod::Homodyne, duration, i))
}

/// Homodyne information written with the spectral SNR `q = S_X / S_eta`:
/// `T Int dw/2pi (d ln S_X)^2 / (2 + 4/q + 2/q^2)`. Equal to
/// [`fisher_homodyne`]; kept as an independent evaluation route.
pub fn fisher_homodyne_snr_form<T: Scalar>(
    model: &NoiseSpectrumModel<T>,
    profile: &ProbeProfile<T>,
    theta: T,
    duration: T,
    spec: &QuadratureSpec<T>,
) -> Result<InfoReport<T>> {
    check_duration(duration)?;
    let i = spectral_integral(model, profile, theta, spec, |w, p, _| {
        if p.psd == T::zero() {
            return Ok(T::zero());
        }
        let inv_q = profile.phase_psd(w)? / p.psd;
        let dlog = p.dpsd / p.psd;
        let two = T::lit(2.0);
        Ok(dlog * dlog / (two + T::lit(4.0) * inv_q + two * inv_q * inv_q))
    })?;
    Ok(InfoReport::continuum(InfoMethod::Homodyne, duration, i))
}

/// Finite-mode homodyne (Whittle) information
/// `sum_m (dS_X)^2 / (S_X + S_eta)^2` over the grid.
pub fn fisher_homodyne_discrete<T: Scalar>(
    model: &NoiseSpectrumModel<T>,
    profile: &ProbeProfile<T>,
    theta: T,
    grid: &ModeGrid<T>,
) -> Result<InfoReport<T>> {
    let mut total = T::zero();
    for w in grid.frequencies() {
        let p = model.point(w, theta)?;
        let mean = p.psd + profile.phase_psd(w)?;
        total = total + p.fisher_weight * p.psd / (mean * mean);
    }
    Ok(InfoReport::discrete(InfoMethod::HomodyneDiscrete, grid, total))
}

/// Leading low-SNR terms: USPC `T Int dw/2pi S_k S_X (d ln S_X)^2` and
/// homodyne `8 T Int dw/2pi (S_k S_X)^2 (d ln S_X)^2`.
pub fn fisher_low_snr<T: Scalar>(
    model: &NoiseSpectrumModel<T>,
    profile: &ProbeProfile<T>,
    theta: T,
    duration: T,
    spec: &QuadratureSpec<T>,
) -> Result<(InfoReport<T>, InfoReport<T>)> {
    check_duration(duration)?;
    let uspc = spectral_integral(model, profile, theta, spec, |_, p, s_k| Ok(s_k * p.fisher_weight))?;
    let hom = spectral_integral(model, profile, theta, spec, |_, p, s_k| {
        Ok(T::lit(8.0) * s_k * s_k * p.psd * p.fisher_weight)
    })?;
    Ok((
        InfoReport::continuum(InfoMethod::LowSnrUspc, duration, uspc),
        InfoReport::continuum(InfoMethod::LowSnrHomodyne, duration, hom),
    ))
}

/// Flat-band closed forms `(4BT/(theta^2+2), 4BT theta^2/(1+theta^2)^2)`.
/// The homodyne form is the same as `4BT/(theta^2+2+1/theta^2)` but stays
/// finite at `theta = 0`.
pub fn fisher_flat_closed_form<T: Scalar>(theta: T, bandwidth: T, duration: T) -> Result<(T, T)> {
    check_duration(duration)?;
    if !(bandwidth > T::zero() && bandwidth.is_finite()) {
        return Err(domain(format!("bandwidth must be positive, got {bandwidth}")));
    }
    if !theta.is_finite() {
        return Err(domain(format!("theta must be finite, got {theta}")));
    }
    let bt4 = T::lit(4.0) * bandwidth * duration;
    let t2 = theta * theta;
    let uspc = bt4 / (t2 + T::lit(2.0));
    let hom = bt4 * t2 / ((T::one() + t2) * (T::one() + t2));
    Ok((uspc, hom))
}

fn check_variances<T: Scalar>(v_x: T, v_k: T) -> Result<()> {
    if !(v_x > T::zero() && v_x.is_finite()) {
        return Err(domain(format!("v_X must be positive, got {v_x}")));
    }
    if !(v_k > T::zero() && v_k.is_finite()) {
        return Err(domain(format!("v_k must be positive, got {v_k}")));
    }
    Ok(())
}

/// Single-mode convexity objective `4 v_k v_X g^2 + (d ln v_X - 2 g)^2 / 2`
/// as a function of the trial log-derivative `g`.
pub fn convexity_objective<T: Scalar>(dlog_v: T, v_x: T, v_k: T, g: T) -> T {
    let r = dlog_v - T::lit(2.0) * g;
    T::lit(4.0) * v_k * v_x * g * g + r * r / T::lit(2.0)
}

/// Minimizer `d ln v_X / (2 + 4 v_k v_X)` of [`convexity_objective`].
pub fn optimal_log_derivative<T: Scalar>(dlog_v: T, v_x: T, v_k: T) -> T {
    dlog_v / (T::lit(2.0) + T::lit(4.0) * v_k * v_x)
}

/// Convexity bound `(d ln v_X)^2 / (2 + 1/(v_k v_X))` from the value and
/// derivative of `v_X` at `theta`.
pub fn convexity_bound_from_derivative<T: Scalar>(v_x: T, dv_x: T, v_k: T) -> Result<T> {
    check_variances(v_x, v_k)?;
    let dlog = dv_x / v_x;
    Ok(dlog * dlog / (T::lit(2.0) + T::one() / (v_k * v_x)))
}

/// [`convexity_bound_from_derivative`] with an analytic derivative.
pub fn convexity_bound_gaussian_with_derivative<T: Scalar>(
    v_x: impl Fn(T) -> T,
    dv_x: impl Fn(T) -> T,
    v_k: T,
    theta: T,
) -> Result<T> {
    convexity_bound_from_derivative(v_x(theta), dv_x(theta), v_k)
}

/// [`convexity_bound_from_derivative`] with a central finite difference,
/// step `1e-6 max(1, |theta|)`.
pub fn convexity_bound_gaussian<T: Scalar>(v_x: impl Fn(T) -> T, v_k: T, theta: T) -> Result<T> {
    let h = T::lit(1e-6) * theta.abs().max(T::one());
    let dv = (v_x(theta + h) - v_x(theta - h)) / (h + h);
    convexity_bound_from_derivative(v_x(theta), dv, v_k)
}

pub type DensityFn<T> = Arc<dyn Fn(T) -> T + Send + Sync>;

/// Probability density of an object coordinate `Z`.
#[derive(Clone)]
pub enum ObjectDensity<T> {
    Uniform { lo: T, hi: T },
    Gaussian { mean: T, std_dev: T },
    PointMass { at: T },
    /// Density on `[lo, hi]` (either end may be infinite).
    Custom { pdf: DensityFn<T>, lo: T, hi: T },
}

impl<T: fmt::Debug> fmt::Debug for ObjectDensity<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObjectDensity::Uniform { lo, hi } => write!(f, "Uniform({lo:?}, {hi:?})"),
            ObjectDensity::Gaussian { mean, std_dev } => write!(f, "Gaussian({mean:?}, {std_dev:?})"),
            ObjectDensity::PointMass { at } => write!(f, "PointMass({at:?})"),
            ObjectDensity::Custom { lo, hi, .. } => write!(f, "Custom([{lo:?}, {hi:?}])"),
        }
    }
}

impl<T: Scalar> ObjectDensity<T> {
    /// Uniform density of the given width centred on zero.
    pub fn centered_uniform(width: T) -> Self {
        let half = width / T::lit(2.0);
        ObjectDensity::Uniform { lo: -half, hi: half }
    }

    /// `E[Z^2]`; custom densities are checked for normalization to `1e-6`.
    pub fn second_moment(&self, spec: &QuadratureSpec<T>) -> Result<T> {
        match self {
            ObjectDensity::Uniform { lo, hi } => {
                if !(lo < hi && lo.is_finite() && hi.is_finite()) {
                    return Err(Error::Validation(format!("invalid uniform range [{lo}, {hi}]")));
                }
                Ok((*lo * *lo + *lo * *hi + *hi * *hi) / T::lit(3.0))
            }
            ObjectDensity::Gaussian { mean, std_dev } => {
                if !(*std_dev > T::zero() && std_dev.is_finite() && mean.is_finite()) {
                    return Err(Error::Validation(format!("invalid Gaussian ({mean}, {std_dev})")));
                }
                Ok(*std_dev * *std_dev + *mean * *mean)
            }
            ObjectDensity::PointMass { at } => Ok(*at * *at),
            ObjectDensity::Custom { pdf, lo, hi } => {
                let mass = integrate(|z| pdf(z), *lo, *hi, spec)?.value;
                if (mass - T::one()).abs() > T::lit(1e-6) {
                    return Err(Error::Validation(format!("density integrates to {mass}, not 1")));
                }
                Ok(integrate(|z| z * z * pdf(z), *lo, *hi, spec)?.value)
            }
        }
    }
}

/// Object-size convexity bound `4 v_k E[Z^2]`, independent of `theta`.
pub fn convexity_bound_object_size<T: Scalar>(
    density: &ObjectDensity<T>,
    v_k: T,
    spec: &QuadratureSpec<T>,
) -> Result<T> {
    if !(v_k > T::zero() && v_k.is_finite()) {
        return Err(domain(format!("v_k must be positive, got {v_k}")));
    }
    Ok(T::lit(4.0) * v_k * density.second_moment(spec)?)
}
