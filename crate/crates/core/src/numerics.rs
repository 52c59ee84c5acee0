//! Adaptive quadrature and bracketed one-dimensional maximization.
//!
//! Quadrature is globally adaptive Gauss-Kronrod (7/15 points) with the
//! QUADPACK error heuristic. Semi-infinite and infinite ranges are mapped
//! onto `(0, 1]` with `x = a + (1 - t) / t`. Interval selection is a plain
//! linear scan over the work list, so results are reproducible bit for bit.
//!
//! Maximization starts from a coarse grid scan to detect non-unimodal
//! objectives and then refines the best cell with golden-section search.

use crate::error::{domain, Error, Result};
use crate::scalar::Scalar;

#[allow(clippy::excessive_precision)]
const KRONROD_NODES: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

#[allow(clippy::excessive_precision)]
const KRONROD_WEIGHTS: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for KRONROD_NODES[1], [3], [5], [7].
#[allow(clippy::excessive_precision)]
const GAUSS_WEIGHTS: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Tolerance and work limit for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec<T> {
    pub rel_tol: T,
    pub max_subdivisions: usize,
}

impl<T: Scalar> Default for QuadratureSpec<T> {
    fn default() -> Self {
        Self {
            rel_tol: T::default_rel_tol(),
            max_subdivisions: 500,
        }
    }
}

impl<T: Scalar> QuadratureSpec<T> {
    pub fn new(rel_tol: T, max_subdivisions: usize) -> Result<Self> {
        let spec = Self {
            rel_tol,
            max_subdivisions,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > T::zero()) || !self.rel_tol.is_finite() {
            return Err(Error::Config(format!(
                "quadrature tolerance must be positive, got {}",
                self.rel_tol
            )));
        }
        if self.max_subdivisions < 1 {
            return Err(Error::Config("max_subdivisions must be at least 1".into()));
        }
        Ok(())
    }
}

/// Value of a definite integral with its error estimate and work counters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Integral<T> {
    pub value: T,
    pub error_estimate: T,
    pub evaluations: usize,
    pub subintervals: usize,
}

impl<T: Scalar> Integral<T> {
    pub fn zero() -> Self {
        Self {
            value: T::zero(),
            error_estimate: T::zero(),
            evaluations: 0,
            subintervals: 0,
        }
    }

    /// Accumulates another piece of a piecewise integral.
    pub fn combine(self, other: Self) -> Self {
        Self {
            value: self.value + other.value,
            error_estimate: self.error_estimate + other.error_estimate,
            evaluations: self.evaluations + other.evaluations,
            subintervals: self.subintervals + other.subintervals,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Panel<T> {
    a: T,
    b: T,
    value: T,
    error: T,
    abs_value: T,
    splittable: bool,
}

fn gauss_kronrod<T: Scalar, F: FnMut(T) -> T>(f: &mut F, a: T, b: T) -> Panel<T> {
    let two = T::lit(2.0);
    let center = (a + b) / two;
    let half = (b - a) / two;

    let f_center = f(center);
    let mut kronrod = f_center * T::lit(KRONROD_WEIGHTS[7]);
    let mut gauss = f_center * T::lit(GAUSS_WEIGHTS[3]);
    let mut abs_sum = f_center.abs() * T::lit(KRONROD_WEIGHTS[7]);
    let mut values = [(T::zero(), T::zero()); 7];

    for (j, slot) in values.iter_mut().enumerate() {
        let dx = half * T::lit(KRONROD_NODES[j]);
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        let w = T::lit(KRONROD_WEIGHTS[j]);
        kronrod = kronrod + w * (f1 + f2);
        abs_sum = abs_sum + w * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss = gauss + T::lit(GAUSS_WEIGHTS[j / 2]) * (f1 + f2);
        }
        *slot = (f1, f2);
    }

    let mean = kronrod / two;
    let mut asc = T::lit(KRONROD_WEIGHTS[7]) * (f_center - mean).abs();
    for (j, &(f1, f2)) in values.iter().enumerate() {
        asc = asc + T::lit(KRONROD_WEIGHTS[j]) * ((f1 - mean).abs() + (f2 - mean).abs());
    }

    let width = half.abs();
    let value = kronrod * half;
    let abs_value = abs_sum * width;
    let asc = asc * width;
    let mut error = ((kronrod - gauss) * half).abs();
    if asc != T::zero() && error != T::zero() {
        let scale = (T::lit(200.0) * error / asc).powf(T::lit(1.5));
        error = asc * scale.min(T::one());
    }
    let roundoff = T::lit(50.0) * T::epsilon() * abs_value;
    if roundoff > T::min_positive_value() / (T::lit(50.0) * T::epsilon()) {
        error = error.max(roundoff);
    }

    let min_width = T::lit(100.0) * T::epsilon() * center.abs().max(T::one());
    Panel {
        a,
        b,
        value,
        error,
        abs_value,
        splittable: (b - a) > min_width,
    }
}

fn adaptive<T: Scalar, F: FnMut(T) -> T>(
    f: &mut F,
    a: T,
    b: T,
    spec: &QuadratureSpec<T>,
) -> Result<Integral<T>> {
    let mut panels = vec![gauss_kronrod(f, a, b)];
    let mut evaluations = 15;

    loop {
        let total: T = panels.iter().map(|p| p.value).sum();
        let total_err: T = panels.iter().map(|p| p.error).sum();
        let total_abs: T = panels.iter().map(|p| p.abs_value).sum();
        let target = (spec.rel_tol * total.abs()).max(T::lit(50.0) * T::epsilon() * total_abs);

        if !total.is_finite() {
            return Err(domain("integrand is not finite on the integration range"));
        }
        if total_err <= target {
            return Ok(Integral {
                value: total,
                error_estimate: total_err,
                evaluations,
                subintervals: panels.len(),
            });
        }

        let worst = panels
            .iter()
            .enumerate()
            .filter(|(_, p)| p.splittable)
            .fold(None::<(usize, T)>, |best, (i, p)| match best {
                Some((_, e)) if e >= p.error => best,
                _ => Some((i, p.error)),
            });

        let Some((idx, _)) = worst.filter(|_| panels.len() < spec.max_subdivisions) else {
            return Err(Error::Quadrature {
                estimate: total.as_f64(),
                error_bound: total_err.as_f64(),
                subdivisions: panels.len(),
            });
        };

        let p = panels.swap_remove(idx);
        let mid = (p.a + p.b) / T::lit(2.0);
        panels.push(gauss_kronrod(f, p.a, mid));
        panels.push(gauss_kronrod(f, mid, p.b));
        evaluations += 30;
    }
}

/// Integrates `f` over `[a, b]`; either bound may be infinite.
pub fn integrate<T, F>(mut f: F, a: T, b: T, spec: &QuadratureSpec<T>) -> Result<Integral<T>>
where
    T: Scalar,
    F: FnMut(T) -> T,
{
    spec.validate()?;
    if a.is_nan() || b.is_nan() || a > b {
        return Err(domain(format!("invalid integration range [{a}, {b}]")));
    }
    if a == b {
        return Ok(Integral::zero());
    }

    let one = T::one();
    match (a.is_finite(), b.is_finite()) {
        (true, true) => adaptive(&mut f, a, b, spec),
        (true, false) => {
            let mut g = |t: T| {
                let x = a + (one - t) / t;
                f(x) / (t * t)
            };
            adaptive(&mut g, T::zero(), one, spec)
        }
        (false, true) => {
            let mut g = |t: T| {
                let x = b - (one - t) / t;
                f(x) / (t * t)
            };
            adaptive(&mut g, T::zero(), one, spec)
        }
        (false, false) => {
            let mut g = |t: T| {
                let x = (one - t) / t;
                (f(x) + f(-x)) / (t * t)
            };
            adaptive(&mut g, T::zero(), one, spec)
        }
    }
}

/// Integrates over consecutive segments of a sorted breakpoint list.
pub fn integrate_piecewise<T, F>(
    mut f: F,
    breakpoints: &[T],
    spec: &QuadratureSpec<T>,
) -> Result<Integral<T>>
where
    T: Scalar,
    F: FnMut(T) -> T,
{
    let mut acc = Integral::zero();
    for w in breakpoints.windows(2) {
        acc = acc.combine(integrate(&mut f, w[0], w[1], spec)?);
    }
    Ok(acc)
}

/// Location and value of a maximum found by [`maximize_1d`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum<T> {
    pub argmax: T,
    pub value: T,
    pub evaluations: usize,
    /// Set when the coarse scan found more than one local maximum and the
    /// result came from a dense grid scan.
    pub grid_fallback: bool,
}

const COARSE_POINTS: usize = 17;
const DENSE_POINTS: usize = 4097;
const MAX_GOLDEN_STEPS: usize = 300;

/// Maximizes `f` on `[lo, hi]`; `s_star` is located to within `tol`.
pub fn maximize_1d<T, F>(mut f: F, lo: T, hi: T, tol: T) -> Result<Maximum<T>>
where
    T: Scalar,
    F: FnMut(T) -> T,
{
    try_maximize_1d(|x| Ok(f(x)), lo, hi, tol)
}

/// Fallible variant of [`maximize_1d`] for objectives that may fail (for
/// example ones that run a quadrature).
pub fn try_maximize_1d<T, F>(mut f: F, lo: T, hi: T, tol: T) -> Result<Maximum<T>>
where
    T: Scalar,
    F: FnMut(T) -> Result<T>,
{
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(domain(format!("invalid bracket [{lo}, {hi}]")));
    }
    if !(tol > T::zero()) {
        return Err(domain(format!("optimizer tolerance must be positive, got {tol}")));
    }

    let mut evaluations = 0usize;
    let mut eval = |x: T, evaluations: &mut usize| -> Result<T> {
        *evaluations += 1;
        let v = f(x)?;
        Ok(if v.is_nan() { T::neg_infinity() } else { v })
    };

    let grid = |n: usize, i: usize| -> T {
        if i == 0 {
            lo
        } else if i == n - 1 {
            hi
        } else {
            lo + (hi - lo) * T::from_count(i) / T::from_count(n - 1)
        }
    };

    let mut coarse = Vec::with_capacity(COARSE_POINTS);
    for i in 0..COARSE_POINTS {
        let x = grid(COARSE_POINTS, i);
        coarse.push((x, eval(x, &mut evaluations)?));
    }
    let mut grid_fallback = !is_unimodal(&coarse);

    let samples = if grid_fallback {
        let mut dense = Vec::with_capacity(DENSE_POINTS);
        for i in 0..DENSE_POINTS {
            let x = grid(DENSE_POINTS, i);
            dense.push((x, eval(x, &mut evaluations)?));
        }
        dense
    } else {
        coarse
    };

    let best = first_argmax(&samples);
    let left = samples[best.saturating_sub(1)].0;
    let right = samples[(best + 1).min(samples.len() - 1)].0;
    let (mut best_x, mut best_v) = samples[best];

    // golden-section refinement inside the best grid cell
    let inv_phi = (T::lit(5.0).sqrt() - T::one()) / T::lit(2.0);
    let (mut a, mut b) = (left, right);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = eval(c, &mut evaluations)?;
    let mut fd = eval(d, &mut evaluations)?;
    let mut steps = 0;
    while b - a > tol && steps < MAX_GOLDEN_STEPS {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c, &mut evaluations)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = eval(d, &mut evaluations)?;
        }
        steps += 1;
    }
    if steps == MAX_GOLDEN_STEPS {
        grid_fallback = true;
    }
    let mid = (a + b) / T::lit(2.0);
    let fmid = eval(mid, &mut evaluations)?;
    for (x, v) in [(c, fc), (d, fd), (mid, fmid)] {
        if v > best_v {
            best_x = x;
            best_v = v;
        }
    }

    // endpoint maxima are reported exactly
    let f_lo = samples[0].1;
    let f_hi = samples[samples.len() - 1].1;
    if f_lo >= best_v {
        best_x = lo;
        best_v = f_lo;
    } else if f_hi >= best_v {
        best_x = hi;
        best_v = f_hi;
    }

    Ok(Maximum {
        argmax: best_x,
        value: best_v,
        evaluations,
        grid_fallback,
    })
}

fn first_argmax<T: Scalar>(samples: &[(T, T)]) -> usize {
    let mut best = 0;
    for (i, s) in samples.iter().enumerate() {
        if s.1 > samples[best].1 {
            best = i;
        }
    }
    best
}

fn is_unimodal<T: Scalar>(samples: &[(T, T)]) -> bool {
    let peak = first_argmax(samples);
    let scale = samples
        .iter()
        .map(|s| s.1.abs())
        .filter(|v| v.is_finite())
        .fold(T::zero(), T::max);
    let slack = T::lit(64.0) * T::epsilon() * scale;
    let rising = samples[..=peak].windows(2).all(|w| w[1].1 >= w[0].1 - slack);
    let falling = samples[peak..].windows(2).all(|w| w[1].1 <= w[0].1 + slack);
    rising && falling
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::{LN_2, PI};

    fn spec() -> QuadratureSpec<f64> {
        QuadratureSpec::default()
    }

    #[test]
    fn constant_over_full_period() {
        let r = integrate(|_| 1.0, 0.0, 2.0 * PI, &spec()).unwrap();
        assert!((r.value - 2.0 * PI).abs() < 1e-14);
    }

    #[test]
    fn odd_function_vanishes() {
        let r = integrate(|x: f64| x, -1.0, 1.0, &spec()).unwrap();
        assert!(r.value.abs() < 1e-15);
    }

    #[test]
    fn lorentzian_matches_arctan() {
        // antiderivative arctan evaluated independently
        let expected = 2.0 * 10f64.atan();
        assert!((expected - 2.942_255).abs() < 1e-6);
        let r = integrate(|x: f64| 1.0 / (1.0 + x * x), -10.0, 10.0, &spec()).unwrap();
        assert!((r.value / expected - 1.0).abs() < 1e-9);
    }

    #[test]
    fn infinite_ranges() {
        let full = integrate(|x: f64| 1.0 / (1.0 + x * x), f64::NEG_INFINITY, f64::INFINITY, &spec())
            .unwrap();
        assert!((full.value / PI - 1.0).abs() < 1e-9);
        let half = integrate(|x: f64| (-x).exp(), 0.0, f64::INFINITY, &spec()).unwrap();
        assert!((half.value - 1.0).abs() < 1e-9);
        let left = integrate(|x: f64| x.exp(), f64::NEG_INFINITY, 0.0, &spec()).unwrap();
        assert!((left.value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn reversed_range_rejected() {
        assert!(matches!(integrate(|x: f64| x, 1.0, 0.0, &spec()), Err(Error::Domain(_))));
        assert_eq!(integrate(|x: f64| x, 3.0, 3.0, &spec()).unwrap().value, 0.0);
    }

    #[test]
    fn non_convergence_reports_best_estimate() {
        let tight = QuadratureSpec::new(1e-14, 2).unwrap();
        let err = integrate(|x: f64| x.abs().sqrt().sin() / x.abs().max(1e-300).sqrt(), -1.0, 2.0, &tight)
            .unwrap_err();
        match err {
            Error::Quadrature {
                estimate,
                error_bound,
                subdivisions,
            } => {
                assert!(estimate.is_finite());
                assert!(error_bound > 0.0);
                assert_eq!(subdivisions, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_spec_rejected() {
        assert!(QuadratureSpec::new(0.0, 10).is_err());
        assert!(QuadratureSpec::new(1e-9, 0).is_err());
    }

    #[test]
    fn deterministic() {
        let f = |x: f64| (x * 3.0).sin().exp() / (1.0 + x * x);
        let a = integrate(f, -5.0, 7.0, &spec()).unwrap();
        let b = integrate(f, -5.0, 7.0, &spec()).unwrap();
        assert_eq!(a.value.to_bits(), b.value.to_bits());
    }

    #[test]
    fn quadratic_vertex() {
        let m = maximize_1d(|s: f64| -(s - 0.3).powi(2), 0.0, 1.0, 1e-10).unwrap();
        assert!((m.argmax - 0.3).abs() < 1e-8);
        assert!(m.value.abs() < 1e-15);
        assert!(!m.grid_fallback);
    }

    #[test]
    fn symmetric_parabola() {
        let m = maximize_1d(|s: f64| s * (1.0 - s), 0.0, 1.0, 1e-10).unwrap();
        assert!((m.argmax - 0.5).abs() < 1e-8);
        assert!((m.value - 0.25).abs() < 1e-15);
    }

    #[test]
    fn flat_band_homodyne_reduction() {
        // f'(s) = 0  <=>  1/(2 - s) = ln 2
        let s_expected = 2.0 - 1.0 / LN_2;
        let f = |s: f64| (2.0 - s).ln() - (1.0 - s) * LN_2;
        let f_expected = f(s_expected);
        assert!((s_expected - 0.557_305).abs() < 1e-6);
        assert!((f_expected - 0.059_660_1).abs() < 1e-7);
        let m = maximize_1d(f, 0.0, 1.0, 1e-10).unwrap();
        assert!((m.argmax - s_expected).abs() < 1e-7);
        assert!((m.value - f_expected).abs() < 1e-14);
    }

    #[test]
    fn endpoint_maxima_are_exact() {
        let m = maximize_1d(|s: f64| s, 0.0, 1.0, 1e-10).unwrap();
        assert_eq!(m.argmax, 1.0);
        let m = maximize_1d(|s: f64| -s, -2.0, 1.0, 1e-10).unwrap();
        assert_eq!(m.argmax, -2.0);
        let m = maximize_1d(|_s: f64| 0.0, 0.0, 1.0, 1e-10).unwrap();
        assert_eq!(m.argmax, 0.0);
    }

    #[test]
    fn bimodal_triggers_grid_fallback() {
        let f = |s: f64| (-(s - 0.1).powi(2) / 1e-3).exp() + 1.2 * (-(s - 0.83).powi(2) / 1e-3).exp();
        let m = maximize_1d(f, 0.0, 1.0, 1e-10).unwrap();
        assert!(m.grid_fallback);
        assert!((m.argmax - 0.83).abs() < 1e-4);
    }

    #[test]
    fn invalid_bracket() {
        assert!(maximize_1d(|s: f64| s, 1.0, 1.0, 1e-10).is_err());
        assert!(maximize_1d(|s: f64| s, 0.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn agrees_with_dense_grid_scan() {
        // homodyne Chernoff integrand per mode at several SNRs
        let tol = 1e-5;
        for r in [1e-3, 0.1, 1.0, 10.0, 1e3] {
            let f = |s: f64| (1.0 + (1.0 - s) * r).ln() - (1.0 - s) * (1.0 + r).ln();
            let m = maximize_1d(f, 0.0, 1.0, tol).unwrap();
            let n = 100_000;
            let (mut bx, mut bv) = (0.0, f64::NEG_INFINITY);
            for i in 0..=n {
                let s = i as f64 / n as f64;
                if f(s) > bv {
                    bv = f(s);
                    bx = s;
                }
            }
            assert!((m.argmax - bx).abs() <= 10.0 * tol, "r={r}: {} vs {bx}", m.argmax);
            assert!(m.value >= bv - 1e-12);
        }
    }

    #[test]
    fn f32_path() {
        let r = integrate(|x: f32| 1.0 / (1.0 + x * x), -10.0, 10.0, &QuadratureSpec::default()).unwrap();
        assert!((r.value - 2.942_255).abs() < 1e-4);
    }

    proptest! {
        #[test]
        fn linearity(alpha in -3.0f64..3.0, beta in -3.0f64..3.0, k in 0.5f64..4.0) {
            let s = spec();
            let f = |x: f64| (k * x).cos();
            let g = |x: f64| 1.0 / (1.0 + k * x * x);
            let lhs = integrate(|x| alpha * f(x) + beta * g(x), -2.0, 3.0, &s).unwrap().value;
            let rhs = alpha * integrate(f, -2.0, 3.0, &s).unwrap().value
                + beta * integrate(g, -2.0, 3.0, &s).unwrap().value;
            let scale = alpha.abs() + beta.abs() + 1.0;
            prop_assert!((lhs - rhs).abs() <= 10.0 * s.rel_tol * scale * 5.0);
        }

        #[test]
        fn even_symmetry(a in 0.1f64..20.0, k in 0.1f64..5.0) {
            let s = spec();
            let f = |x: f64| (-(k * x).powi(2)).exp() * (1.0 + x * x).ln_1p();
            let full = integrate(f, -a, a, &s).unwrap().value;
            let half = integrate(f, 0.0, a, &s).unwrap().value;
            prop_assert!((full - 2.0 * half).abs() <= 10.0 * s.rel_tol * full.abs().max(1e-300));
        }

        #[test]
        fn maximizer_is_local_max(c in 0.05f64..0.95, w in 0.5f64..5.0) {
            let tol = 1e-10;
            let f = |s: f64| -w * (s - c).powi(2) + (s * 0.3).sin();
            let m = maximize_1d(f, 0.0, 1.0, tol).unwrap();
            prop_assert!(m.value >= f((m.argmax - tol).max(0.0)) - 1e-12);
            prop_assert!(m.value >= f((m.argmax + tol).min(1.0)) - 1e-12);
        }
    }
}
