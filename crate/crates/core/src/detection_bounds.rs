//! Chernoff exponents and error-probability bounds for deciding between
//! `H0: X = 0` and `H1: X` Gaussian with spectrum `S_X(w | theta_1)`.
//!
//! Continuum exponents are `(T/2) Int dw/2pi (...)` over the two-sided axis,
//! which matches the one-sided finite-mode sums `sum_{m >= 1}` on a
//! [`ModeGrid`].

use std::fmt;

use crate::error::{domain, Result};
use crate::info_bounds::{check_duration, QuadratureSummary};
use crate::numerics::{try_maximize_1d, Integral, QuadratureSpec};
use crate::scalar::Scalar;
use crate::spectral_models::{psd_integral, NoiseSpectrumModel, ProbeProfile};
use crate::stochastic_sim::{uspc_mode_means, ModeGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ExponentMethod {
    Quantum,
    Uspc,
    UspcDiscrete,
    Homodyne,
    HomodyneDiscrete,
    LowSnrUspc,
    LowSnrHomodyne,
}

impl ExponentMethod {
    pub fn tag(self) -> &'static str {
        match self {
            ExponentMethod::Quantum => "quantum",
            ExponentMethod::Uspc => "uspc",
            ExponentMethod::UspcDiscrete => "uspc-discrete",
            ExponentMethod::Homodyne => "homodyne",
            ExponentMethod::HomodyneDiscrete => "homodyne-discrete",
            ExponentMethod::LowSnrUspc => "low-snr-uspc",
            ExponentMethod::LowSnrHomodyne => "low-snr-homodyne",
        }
    }
}

impl fmt::Display for ExponentMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentReport<T> {
    pub value: T,
    /// Optimal Chernoff parameter for the homodyne exponents.
    pub s_star: Option<T>,
    pub method: ExponentMethod,
    pub duration: T,
    pub quadrature: Option<QuadratureSummary<T>>,
    pub modes: Option<usize>,
}

impl<T: Scalar> ExponentReport<T> {
    fn continuum(method: ExponentMethod, duration: T, scale: T, integral: Integral<T>) -> Self {
        Self {
            value: (scale * integral.value).max(T::zero()),
            s_star: None,
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

    fn discrete(method: ExponentMethod, grid: &ModeGrid<T>, value: T, s_star: Option<T>) -> Self {
        Self {
            value,
            s_star,
            method,
            duration: grid.duration(),
            quadrature: None,
            modes: Some(grid.modes()),
        }
    }
}

fn half_exponent_scale<T: Scalar>(duration: T) -> T {
    duration / (T::lit(2.0) * T::TAU())
}

fn s_tolerance<T: Scalar>() -> T {
    T::epsilon().sqrt().max(T::lit(1e-10))
}

/// Quantum Chernoff exponent `zeta = (T/2) Int dw/2pi ln(1 + 2 S_k S_X)`.
pub fn quantum_chernoff<T: Scalar>(
    model: &NoiseSpectrumModel<T>,
    theta1: T,
    profile: &ProbeProfile<T>,
    duration: T,
    spec: &QuadratureSpec<T>,
) -> Result<ExponentReport<T>> {
    check_duration(duration)?;
    let i = psd_integral(model, profile, theta1, spec, |_, s, s_k| {
        Ok((T::lit(2.0) * s_k * s).ln_1p())
    })?;
    Ok(ExponentReport::continuum(
        ExponentMethod::Quantum,
        duration,
        half_exponent_scale(duration),
        i,
    ))
}

/// USPC Chernoff exponent `(T/2) Int dw/2pi ln(1 + 2 |alpha g|^2 S_X)`. The
/// optimal Chernoff parameter sits at the `s -> 1` endpoint because the
/// `H0` record is all zeros with certainty.
pub fn chernoff_uspc<T: Scalar>(
    model: &NoiseSpectrumModel<T>,
    theta1: T,
    profile: &ProbeProfile<T>,
    duration: T,
    spec: &QuadratureSpec<T>,
) -> Result<ExponentReport<T>> {
    check_duration(duration)?;
    let i = psd_integral(model, profile, theta1, spec, |w, s, _| {
        let flux = profile.flux() * profile.antisqueezing_gain(w);
        Ok((T::lit(2.0) * flux * s).ln_1p())
    })?;
    Ok(ExponentReport::continuum(
        ExponentMethod::Uspc,
        duration,
        half_exponent_scale(duration),
        i,
    ))
}

/// `sum_m ln(1 + N_m)` for mean photon numbers `N_m`.
pub fn uspc_exponent_from_means<T: Scalar>(means: &[T]) -> T {
    means.iter().map(|n| n.ln_1p()).sum()
}

/// `-ln sum_n f0(n)^(1-s) f1(n)^s = s sum_m ln(1 + N_m)` for `s` in `[0, 1)`.
pub fn uspc_chernoff_objective<T: Scalar>(means: &[T], s: T) -> T {
    s * uspc_exponent_from_means(means)
}

/// Finite-mode USPC exponent `sum_m ln(1 + N_m)`; equals the miss
/// probability `-ln prod_m 1/(1 + N_m)` of the zero-count test.
pub fn chernoff_uspc_discrete<T: Scalar>(
    model: &NoiseSpectrumModel<T>,
    theta1: T,
    profile: &ProbeProfile<T>,
    grid: &ModeGrid<T>,
) -> Result<ExponentReport<T>> {
    let means = uspc_mode_means(model, theta1, profile, grid)?;
    Ok(ExponentReport::discrete(
        ExponentMethod::UspcDiscrete,
        grid,
        uspc_exponent_from_means(&means),
        Some(T::one()),
    ))
}

/// Per-mode homodyne Chernoff objective
/// `ln(1 + (1-s) r) - (1-s) ln(1 + r)`, `r = S_X / S_eta`.
pub fn homodyne_chernoff_term<T: Scalar>(snr: T, s: T) -> T {
    let t = T::one() - s;
    (t * snr).ln_1p() - t * snr.ln_1p()
}

/// Homodyne Chernoff exponent
/// `sup_s (T/2) Int dw/2pi [ln(1 + (1-s) r) - (1-s) ln(1 + r)]`. The
/// objective is integrated first and then maximized over `s`.
pub fn chernoff_homodyne<T: Scalar>(
    model: &NoiseSpectrumModel<T>,
    theta1: T,
    profile: &ProbeProfile<T>,
    duration: T,
    spec: &QuadratureSpec<T>,
) -> Result<ExponentReport<T>> {
    check_duration(duration)?;
    let objective = |s: T| {
        psd_integral(model, profile, theta1, spec, |w, x, _| {
            Ok(homodyne_chernoff_term(x / profile.phase_psd(w)?, s))
        })
    };
    let best = try_maximize_1d(|s| objective(s).map(|i| i.value), T::zero(), T::one(), s_tolerance())?;
    let i = objective(best.argmax)?;
    let mut report = ExponentReport::continuum(
        ExponentMethod::Homodyne,
        duration,
        half_exponent_scale(duration),
        i,
    );
    report.s_star = Some(best.argmax);
    Ok(report)
}

/// Finite-mode homodyne exponent `sup_s sum_m [...]` for exponential
/// periodogram ordinates, given per-mode SNRs `r_m`. Returns `(value, s*)`.
pub fn homodyne_exponent_from_snr<T: Scalar>(snr: &[T]) -> Result<(T, T)> {
    let best = try_maximize_1d(
        |s| Ok(snr.iter().map(|&r| homodyne_chernoff_term(r, s)).sum()),
        T::zero(),
        T::one(),
        s_tolerance(),
    )?;
    Ok((best.value.max(T::zero()), best.argmax))
}

/// Per-mode spectral SNRs `S_X(w_m) / S_eta(w_m)` on a grid.
pub fn homodyne_mode_snr<T: Scalar>(
    model: &NoiseSpectrumModel<T>,
    theta1: T,
    profile: &ProbeProfile<T>,
    grid: &ModeGrid<T>,
) -> Result<Vec<T>> {
    grid.frequencies()
        .map(|w| Ok(model.psd(w, theta1)? / profile.phase_psd(w)?))
        .collect()
}

/// Finite-mode homodyne Chernoff exponent on a grid.
pub fn chernoff_homodyne_discrete<T: Scalar>(
    model: &NoiseSpectrumModel<T>,
    theta1: T,
    profile: &ProbeProfile<T>,
    grid: &ModeGrid<T>,
) -> Result<ExponentReport<T>> {
    let (value, s_star) = homodyne_exponent_from_snr(&homodyne_mode_snr(model, theta1, profile, grid)?)?;
    Ok(ExponentReport::discrete(
        ExponentMethod::HomodyneDiscrete,
        grid,
        value,
        Some(s_star),
    ))
}

/// Leading low-SNR exponents: USPC `T Int dw/2pi S_k S_X`, homodyne
/// `T Int dw/2pi (S_k S_X)^2` (the `sup_s s(1-s) = 1/4` step included).
pub fn chernoff_low_snr<T: Scalar>(
    model: &NoiseSpectrumModel<T>,
    theta1: T,
    profile: &ProbeProfile<T>,
    duration: T,
    spec: &QuadratureSpec<T>,
) -> Result<(ExponentReport<T>, ExponentReport<T>)> {
    check_duration(duration)?;
    let scale = duration / T::TAU();
    let uspc = psd_integral(model, profile, theta1, spec, |_, s, s_k| Ok(s_k * s))?;
    let hom = psd_integral(model, profile, theta1, spec, |_, s, s_k| Ok((s_k * s) * (s_k * s)))?;
    let mut hom = ExponentReport::continuum(ExponentMethod::LowSnrHomodyne, duration, scale, hom);
    hom.s_star = Some(T::lit(0.5));
    Ok((
        ExponentReport::continuum(ExponentMethod::LowSnrUspc, duration, scale, uspc),
        hom,
    ))
}

/// Equal-prior bracket on the minimum error probability:
/// `((1 - sqrt(1 - B^2)) / 2, exp(-xi) / 2)` for a Bhattacharyya coefficient
/// or fidelity `B` and a Chernoff exponent `xi`.
pub fn error_prob_bounds<T: Scalar>(overlap: T, exponent: T) -> Result<(T, T)> {
    if !(overlap >= T::zero() && overlap <= T::one()) {
        return Err(domain(format!("overlap must lie in [0, 1], got {overlap}")));
    }
    if exponent.is_nan() || exponent < T::zero() {
        return Err(domain(format!("Chernoff exponent must be nonnegative, got {exponent}")));
    }
    let x = overlap * overlap;
    // 1 - sqrt(1 - x) without cancellation at small x
    let lower = x / (T::lit(2.0) * (T::one() + (T::one() - x).sqrt()));
    let upper = (-exponent).exp() / T::lit(2.0);
    Ok((lower, upper))
}

/// Fidelity between the `H0` and `H1` output states, `exp(-zeta/2)`.
pub fn fidelity_uspc<T: Scalar>(
    model: &NoiseSpectrumModel<T>,
    theta1: T,
    profile: &ProbeProfile<T>,
    duration: T,
    spec: &QuadratureSpec<T>,
) -> Result<T> {
    let zeta = quantum_chernoff(model, theta1, profile, duration, spec)?;
    Ok((-zeta.value / T::lit(2.0)).exp())
}

/// Finite-mode fidelity `exp(-zeta_disc / 2)` with
/// `zeta_disc = sum_m ln(1 + 2 S_k S_X)`.
pub fn fidelity_discrete<T: Scalar>(
    model: &NoiseSpectrumModel<T>,
    theta1: T,
    profile: &ProbeProfile<T>,
    grid: &ModeGrid<T>,
) -> Result<T> {
    let means = grid
        .frequencies()
        .map(|w| Ok(T::lit(2.0) * profile.probe_psd(w) * model.psd(w, theta1)?))
        .collect::<Result<Vec<_>>>()?;
    Ok((-uspc_exponent_from_means(&means) / T::lit(2.0)).exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral_models::{make_flat_band, FlatBandConfig, SpectralShape, TabulatedSpectrum};
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn flat(b: f64, level: f64) -> (NoiseSpectrumModel<f64>, ProbeProfile<f64>) {
        make_flat_band(&FlatBandConfig::new(b, level, 1.0).unwrap()).unwrap()
    }

    fn spec() -> QuadratureSpec<f64> {
        QuadratureSpec::default()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs()
    }

    #[test]
    fn flat_band_quantum_and_uspc() {
        let (m, p) = flat(1.0, 1.0);
        let s = spec();
        let z = quantum_chernoff(&m, 1.0, &p, 1.0, &s).unwrap();
        assert!(rel(z.value, 1.5f64.ln()) < 1e-12);
        assert!((z.value - 0.405_465).abs() < 1e-6);
        let z = quantum_chernoff(&m, 0.2, &p, 1.0, &s).unwrap();
        assert!(rel(z.value, 1.02f64.ln()) < 1e-12);
        let u = chernoff_uspc(&m, 1.0, &p, 1.0, &s).unwrap();
        assert!(rel(u.value, 1.5f64.ln()) < 1e-12);
        assert_eq!(quantum_chernoff(&m, 0.0, &p, 1.0, &s).unwrap().value, 0.0);
        assert_eq!(chernoff_uspc(&m, 0.0, &p, 1.0, &s).unwrap().value, 0.0);
    }

    #[test]
    fn flat_band_homodyne() {
        let (m, p) = flat(1.0, 1.0);
        let h = chernoff_homodyne(&m, 1.0, &p, 1.0, &spec()).unwrap();
        let s_exact = 2.0 - 1.0 / LN_2;
        let v_exact = (2.0 - s_exact).ln() - (1.0 - s_exact) * LN_2;
        assert!((h.value - v_exact).abs() < 1e-10, "{}", h.value);
        assert!((h.s_star.unwrap() - s_exact).abs() < 1e-6);
        assert!((h.s_star.unwrap() - 0.557_305).abs() < 1e-6);
        let zero = chernoff_homodyne(&m, 0.0, &p, 1.0, &spec()).unwrap();
        assert_eq!(zero.value, 0.0);
    }

    #[test]
    fn homodyne_low_snr_check() {
        let (m, p) = flat(1.0, 1.0);
        let h = chernoff_homodyne(&m, 0.2, &p, 1.0, &spec()).unwrap();
        let approx = 0.2f64.powi(4) / 8.0;
        assert!((approx / h.value - 1.0).abs() < 0.1);
        let (lu, lh) = chernoff_low_snr(&m, 0.2, &p, 1.0, &spec()).unwrap();
        assert!(rel(lu.value, 0.02) < 1e-12);
        assert!(rel(lh.value, 2.0e-4) < 1e-12);
        let (zu, zh) = chernoff_low_snr(&m, 0.0, &p, 1.0, &spec()).unwrap();
        assert_eq!((zu.value, zh.value), (0.0, 0.0));
    }

    #[test]
    fn discrete_examples() {
        let means = vec![0.5f64; 10];
        assert!(rel(uspc_exponent_from_means(&means), 10.0 * 1.5f64.ln()) < 1e-14);
        assert!((uspc_exponent_from_means(&means) - 4.054_651).abs() < 1e-6);
        let (m, p) = flat(1.0, 1.0);
        let g = ModeGrid::new(10.0, 10).unwrap();
        let d = chernoff_uspc_discrete(&m, 1.0, &p, &g).unwrap();
        assert!(rel(d.value, 10.0 * 1.5f64.ln()) < 1e-14);
        let h = chernoff_homodyne_discrete(&m, 1.0, &p, &g).unwrap();
        let v_exact = 10.0 * ((1.0 / LN_2).ln() - 1.0 + LN_2);
        assert!(rel(h.value, v_exact) < 1e-12);
        let zero = chernoff_uspc_discrete(&m, 0.0, &p, &g).unwrap();
        assert_eq!(zero.value, 0.0);
    }

    #[test]
    fn uspc_objective_grid_scan_peaks_at_one() {
        let means = [0.3f64, 1.2, 0.01, 4.0];
        let best = (0..=1000)
            .map(|i| i as f64 / 1000.0)
            .map(|s| (s, uspc_chernoff_objective(&means, s)))
            .fold((0.0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        assert_eq!(best.0, 1.0);
        assert!(rel(best.1, uspc_exponent_from_means(&means)) < 1e-15);
    }

    #[test]
    fn homodyne_objective_endpoints_vanish() {
        for r in [0.0, 1e-6, 0.3, 1.0, 50.0] {
            assert_eq!(homodyne_chernoff_term(r, 1.0f64), 0.0);
            assert!(homodyne_chernoff_term(r, 0.0f64).abs() < 1e-15);
        }
    }

    #[test]
    fn error_bounds() {
        assert_eq!(error_prob_bounds(1.0, 0.0).unwrap().0, 0.5);
        assert_eq!(error_prob_bounds(0.0, 0.0).unwrap().0, 0.0);
        assert!(rel(error_prob_bounds(0.5, LN_2).unwrap().1, 0.25) < 1e-15);
        let tiny = 1e-20f64;
        let (lo, _) = error_prob_bounds(tiny, 1.0).unwrap();
        assert!(rel(lo, tiny * tiny / 4.0) < 1e-12);
        assert!(error_prob_bounds(1.5, 1.0).is_err());
        assert!(error_prob_bounds(-0.1, 1.0).is_err());
        assert!(error_prob_bounds(0.5, -1.0).is_err());
    }

    #[test]
    fn fidelity() {
        let (m, p) = flat(1.0, 1.0);
        let s = spec();
        assert_eq!(fidelity_uspc(&m, 0.0, &p, 1.0, &s).unwrap(), 1.0);
        let f = fidelity_uspc(&m, 1.0, &p, 1.0, &s).unwrap();
        assert!(rel(f, (2.0f64 / 3.0).sqrt()) < 1e-12);
        assert!((f - 0.816_497).abs() < 1e-6);
        let z = quantum_chernoff(&m, 1.0, &p, 1.0, &s).unwrap().value;
        assert!(rel(-2.0 * f.ln(), z) < 1e-12);
        let g = ModeGrid::new(4.0, 4).unwrap();
        assert!(rel(fidelity_discrete(&m, 1.0, &p, &g).unwrap(), 1.5f64.powf(-2.0)) < 1e-14);
    }

    #[test]
    fn low_snr_scaling_law() {
        let (m, p) = flat(1.0, 1.0);
        let s = spec();
        let ratio = |phi: f64| {
            let h = chernoff_homodyne(&m, phi, &p, 1.0, &s).unwrap().value;
            let u = chernoff_uspc(&m, phi, &p, 1.0, &s).unwrap().value;
            h / u
        };
        let (a, b) = (ratio(0.01), ratio(0.1));
        let slope = (b / a).ln() / 10f64.ln();
        assert!((slope - 2.0).abs() < 0.05, "slope {slope}");
    }

    #[test]
    fn tabulated_identity_and_ordering() {
        let tab = TabulatedSpectrum::new(vec![0.0, 0.5, 1.5, 3.0], vec![2.0, 1.0, 0.5, 0.0]).unwrap();
        let m = NoiseSpectrumModel::magnitude_squared(SpectralShape::Tabulated(tab)).unwrap();
        let p = ProbeProfile::coherent(0.4).unwrap();
        let s = spec();
        for phi in [0.1, 1.0, 3.0] {
            let z = quantum_chernoff(&m, phi, &p, 2.0, &s).unwrap().value;
            let u = chernoff_uspc(&m, phi, &p, 2.0, &s).unwrap().value;
            let h = chernoff_homodyne(&m, phi, &p, 2.0, &s).unwrap().value;
            assert!(rel(u, z) < 1e-12);
            assert!(h <= u);
        }
    }

    proptest! {
        #[test]
        fn ordering_monotonicity_linearity(
            b in 0.05f64..5.0,
            level in 0.01f64..50.0,
            phi in 0.0f64..10.0,
            t in 0.1f64..100.0,
        ) {
            let (m, p) = flat(b, level);
            let s = spec();
            let z = quantum_chernoff(&m, phi, &p, t, &s).unwrap();
            let u = chernoff_uspc(&m, phi, &p, t, &s).unwrap();
            let h = chernoff_homodyne(&m, phi, &p, t, &s).unwrap();
            prop_assert!((u.value - z.value).abs() <= 1e-12 * z.value);
            prop_assert!(h.value <= u.value * (1.0 + 1e-12));
            let s_star = h.s_star.unwrap();
            prop_assert!((0.0..=1.0).contains(&s_star));
            let u2 = chernoff_uspc(&m, phi, &p, 2.0 * t, &s).unwrap();
            prop_assert_eq!(u2.value, 2.0 * u.value);
            let h2 = chernoff_homodyne(&m, phi, &p, 2.0 * t, &s).unwrap();
            prop_assert!((h2.value - 2.0 * h.value).abs() <= 1e-12 * h.value.max(1e-300));
            let hp = chernoff_homodyne(&m, phi * 1.1 + 0.01, &p, t, &s).unwrap();
            prop_assert!(hp.value >= h.value);
            let up = chernoff_uspc(&m, phi * 1.1 + 0.01, &p, t, &s).unwrap();
            prop_assert!(up.value >= u.value);
        }
    }
}
