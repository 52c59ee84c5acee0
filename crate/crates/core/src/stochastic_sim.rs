//! Seeded sampling of the measurement statistics: Fourier coefficients of
//! the displacement process, USPC photon counts and homodyne periodograms.
//!
//! Randomness comes from ChaCha8 streams keyed by
//! `(master seed, purpose, trial, substream)`. Every mode consumes exactly
//! two 64-bit words, so mode `m` always reads words `4m..4m+4` of its stream
//! and a record of `M` modes is a prefix of the record of `M + 1` modes.
//!
//! Samplers use inverse-CDF transforms so the draw count per mode is fixed:
//! - Bose-Einstein counts: `n = floor(-ln U / ln(1 + 1/N))`.
//! - Exponential periodogram values: `I = -mean * ln U`.
//! - Complex Gaussian coefficients (Box-Muller in polar form):
//!   `X = sqrt(-S ln U1) * exp(2 pi i U2)`.

use std::fmt::Write as _;

use num_complex::Complex;
use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{domain, Error, Result};
use crate::scalar::Scalar;
use crate::spectral_models::{FlatBandConfig, NoiseSpectrumModel, ProbeProfile};

/// Discrete sideband set `omega_m = 2 pi m / T`, `m = 1..=M`. The DC mode is
/// never part of the grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeGrid<T> {
    duration: T,
    modes: usize,
}

impl<T: Scalar> ModeGrid<T> {
    pub fn new(duration: T, modes: usize) -> Result<Self> {
        if !(duration > T::zero() && duration.is_finite()) {
            return Err(Error::Validation(format!("observation time must be positive, got {duration}")));
        }
        if modes < 1 {
            return Err(Error::Validation("mode grid needs at least one mode".into()));
        }
        Ok(Self { duration, modes })
    }

    /// `M = floor(B T)` modes, which tile the flat band.
    pub fn for_flat_band(config: &FlatBandConfig<T>, duration: T) -> Result<Self> {
        config.validate()?;
        let bt = config.bandwidth * duration;
        let nearest = bt.round();
        // 0.29 * 100 = 28.999999999999996 should still give 29 modes
        let count = if (bt - nearest).abs() <= T::lit(1e-9) * nearest.max(T::one()) {
            nearest
        } else {
            bt.floor()
        };
        let modes = count
            .to_usize()
            .ok_or_else(|| Error::Validation(format!("B T = {bt} is not a valid mode count")))?;
        Self::new(duration, modes)
    }

    pub fn duration(&self) -> T {
        self.duration
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    /// `omega_m` for `m` in `1..=M`.
    pub fn frequency(&self, m: usize) -> T {
        T::TAU() * (T::from_count(m) / self.duration)
    }

    pub fn frequencies(&self) -> impl Iterator<Item = T> + '_ {
        (1..=self.modes).map(move |m| self.frequency(m))
    }
}

/// What a random stream is used for; part of the stream key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    FourierCoefficients,
    UspcCounts,
    HomodynePeriodogram,
    TiltedPeriodogram,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::FourierCoefficients => 1,
            Purpose::UspcCounts => 2,
            Purpose::HomodynePeriodogram => 3,
            Purpose::TiltedPeriodogram => 4,
        }
    }
}

/// Master seed of a simulation campaign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct SeedSpec {
    pub master: u64,
}

impl SeedSpec {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn trial(&self, trial: u64) -> TrialSeed {
        TrialSeed {
            master: self.master,
            trial,
            substream: 0,
        }
    }
}

/// Seed of one trial (and optional substream, e.g. hypothesis index).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TrialSeed {
    pub master: u64,
    pub trial: u64,
    pub substream: u64,
}

const WORDS_PER_MODE: u128 = 4;

impl TrialSeed {
    pub fn substream(self, substream: u64) -> Self {
        Self { substream, ..self }
    }

    fn key(&self, purpose: Purpose) -> [u8; 32] {
        let mut key = [0u8; 32];
        for (chunk, word) in key
            .chunks_exact_mut(8)
            .zip([self.master, purpose.tag(), self.trial, self.substream])
        {
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        key
    }

    /// Sequential per-mode uniforms starting at mode 1.
    pub fn stream(&self, purpose: Purpose) -> ModeStream {
        ModeStream {
            rng: ChaCha8Rng::from_seed(self.key(purpose)),
        }
    }

    /// Uniform pair of a single mode (random access).
    pub fn mode_uniforms(&self, purpose: Purpose, mode: usize) -> (f64, f64) {
        let mut stream = self.stream(purpose);
        stream.rng.set_word_pos(WORDS_PER_MODE * (mode as u128 - 1));
        stream.next_pair()
    }
}

/// Stream of per-mode uniform pairs on `(0, 1)`.
#[derive(Debug, Clone)]
pub struct ModeStream {
    rng: ChaCha8Rng,
}

impl ModeStream {
    pub fn next_pair(&mut self) -> (f64, f64) {
        let u: f64 = self.rng.sample(Open01);
        let v: f64 = self.rng.sample(Open01);
        (u, v)
    }
}

/// Complex Fourier coefficients `X_m`, `m = 1..=M` (`X_{-m} = conj(X_m)`).
#[derive(Debug, Clone, PartialEq)]
pub struct FourierCoefficients<T> {
    pub values: Vec<Complex<T>>,
}

/// Photon counts summed over each sideband pair `+-omega_m`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhotonCountRecord {
    pub counts: Vec<u64>,
}

impl PhotonCountRecord {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn all_zero(&self) -> bool {
        self.counts.iter().all(|&n| n == 0)
    }
}

/// Homodyne periodogram ordinates `I_m`.
#[derive(Debug, Clone, PartialEq)]
pub struct HomodynePeriodogram<T> {
    pub values: Vec<T>,
}

fn check_len(len: usize, grid_modes: usize) -> Result<()> {
    if len == grid_modes {
        Ok(())
    } else {
        Err(domain(format!("record has {len} modes but the grid has {grid_modes}")))
    }
}

/// Mean photon numbers `N_m = 2 |alpha g(omega_m)|^2 S_X(omega_m | theta)`.
pub fn uspc_mode_means<T: Scalar>(
    model: &NoiseSpectrumModel<T>,
    theta: T,
    profile: &ProbeProfile<T>,
    grid: &ModeGrid<T>,
) -> Result<Vec<T>> {
    grid.frequencies()
        .map(|w| Ok(T::lit(2.0) * profile.flux() * profile.antisqueezing_gain(w) * model.psd(w, theta)?))
        .collect()
}

/// Periodogram means `S_eta(omega_m) + S_X(omega_m | theta)`.
pub fn homodyne_mode_means<T: Scalar>(
    model: &NoiseSpectrumModel<T>,
    theta: T,
    profile: &ProbeProfile<T>,
    grid: &ModeGrid<T>,
) -> Result<Vec<T>> {
    grid.frequencies()
        .map(|w| Ok(profile.phase_psd(w)? + model.psd(w, theta)?))
        .collect()
}

/// One Bose-Einstein draw with mean `mean` from a uniform on `(0, 1)`.
pub fn bose_einstein_from_uniform(mean: f64, u: f64) -> Result<u64> {
    if mean == 0.0 {
        return Ok(0);
    }
    if !(mean > 0.0 && mean.is_finite()) {
        return Err(domain(format!("invalid Bose-Einstein mean {mean}")));
    }
    let n = (-u.ln() / (1.0 / mean).ln_1p()).floor();
    if n >= i64::MAX as f64 {
        return Err(Error::CountOverflow { mean });
    }
    Ok(n as u64)
}

pub fn sample_counts_from_means<T: Scalar>(means: &[T], seed: TrialSeed) -> Result<PhotonCountRecord> {
    let mut stream = seed.stream(Purpose::UspcCounts);
    let counts = means
        .iter()
        .map(|&m| {
            let (u, _) = stream.next_pair();
            bose_einstein_from_uniform(m.as_f64(), u)
        })
        .collect::<Result<_>>()?;
    Ok(PhotonCountRecord { counts })
}

pub fn sample_periodogram_from_means<T: Scalar>(
    means: &[T],
    seed: TrialSeed,
    purpose: Purpose,
) -> HomodynePeriodogram<T> {
    let mut stream = seed.stream(purpose);
    let values = means
        .iter()
        .map(|&m| {
            let (u, _) = stream.next_pair();
            -m * T::lit(u).ln()
        })
        .collect();
    HomodynePeriodogram { values }
}

/// Draws independent zero-mean complex Gaussians with
/// `E|X_m|^2 = S_X(omega_m | theta)`.
pub fn sample_fourier_coeffs<T: Scalar>(
    model: &NoiseSpectrumModel<T>,
    theta: T,
    grid: &ModeGrid<T>,
    seed: TrialSeed,
) -> Result<FourierCoefficients<T>> {
    let mut stream = seed.stream(Purpose::FourierCoefficients);
    let values = grid
        .frequencies()
        .map(|w| {
            let s = model.psd(w, theta)?;
            let (u1, u2) = stream.next_pair();
            let radius = (-s * T::lit(u1).ln()).sqrt();
            Ok(Complex::from_polar(radius, T::TAU() * T::lit(u2)))
        })
        .collect::<Result<_>>()?;
    Ok(FourierCoefficients { values })
}

/// Real process `X(t) = (2 / sqrt(T)) sum_m Re[X_m exp(-i omega_m t)]`; the DC
/// coefficient is taken as zero.
pub fn synthesize_process<T: Scalar>(
    coeffs: &FourierCoefficients<T>,
    grid: &ModeGrid<T>,
    times: &[T],
) -> Result<Vec<T>> {
    check_len(coeffs.values.len(), grid.modes())?;
    let scale = T::lit(2.0) / grid.duration().sqrt();
    Ok(times
        .iter()
        .map(|&t| {
            let sum: T = coeffs
                .values
                .iter()
                .zip(grid.frequencies())
                .map(|(x, w)| (*x * Complex::from_polar(T::one(), -w * t)).re)
                .sum();
            scale * sum
        })
        .collect())
}

/// Bose-Einstein photon counts with means from [`uspc_mode_means`].
pub fn sample_uspc_counts<T: Scalar>(
    model: &NoiseSpectrumModel<T>,
    theta: T,
    profile: &ProbeProfile<T>,
    grid: &ModeGrid<T>,
    seed: TrialSeed,
) -> Result<PhotonCountRecord> {
    sample_counts_from_means(&uspc_mode_means(model, theta, profile, grid)?, seed)
}

/// Exponential periodogram ordinates with means `S_eta + S_X`.
pub fn sample_homodyne_periodogram<T: Scalar>(
    model: &NoiseSpectrumModel<T>,
    theta: T,
    profile: &ProbeProfile<T>,
    grid: &ModeGrid<T>,
    seed: TrialSeed,
) -> Result<HomodynePeriodogram<T>> {
    let means = homodyne_mode_means(model, theta, profile, grid)?;
    Ok(sample_periodogram_from_means(&means, seed, Purpose::HomodynePeriodogram))
}

/// Row-per-mode text form: `mode,omega,value` with `#` comment lines.
pub trait ModeRecord: Sized {
    fn write_text<T: Scalar>(&self, grid: &ModeGrid<T>) -> Result<String>;
    fn parse_text(text: &str) -> Result<Self>;
}

fn write_rows<T: Scalar>(
    grid: &ModeGrid<T>,
    len: usize,
    mut value: impl FnMut(usize) -> String,
) -> Result<String> {
    check_len(len, grid.modes())?;
    let mut out = String::from("# mode,omega,value\n");
    for (i, w) in grid.frequencies().enumerate() {
        writeln!(out, "{},{:.16e},{}", i + 1, w, value(i)).expect("write to string");
    }
    Ok(out)
}

fn parse_rows(text: &str) -> Result<Vec<(usize, String)>> {
    let mut rows = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("expected 3 columns, found {}", fields.len()),
            });
        }
        let mode: usize = fields[0].parse().map_err(|e| Error::Parse {
            line: idx + 1,
            message: format!("invalid mode index {:?}: {e}", fields[0]),
        })?;
        if mode != rows.len() + 1 {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("expected mode {}, found {mode}", rows.len() + 1),
            });
        }
        rows.push((idx + 1, fields[2].to_string()));
    }
    Ok(rows)
}

impl ModeRecord for PhotonCountRecord {
    fn write_text<T: Scalar>(&self, grid: &ModeGrid<T>) -> Result<String> {
        write_rows(grid, self.counts.len(), |i| self.counts[i].to_string())
    }

    fn parse_text(text: &str) -> Result<Self> {
        let counts = parse_rows(text)?
            .into_iter()
            .map(|(line, v)| {
                v.parse::<u64>().map_err(|e| Error::Parse {
                    line,
                    message: format!("invalid count {v:?}: {e}"),
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { counts })
    }
}

impl<S: Scalar> ModeRecord for HomodynePeriodogram<S> {
    fn write_text<T: Scalar>(&self, grid: &ModeGrid<T>) -> Result<String> {
        write_rows(grid, self.values.len(), |i| format!("{:.16e}", self.values[i]))
    }

    fn parse_text(text: &str) -> Result<Self> {
        let values = parse_rows(text)?
            .into_iter()
            .map(|(line, v)| match v.parse::<f64>() {
                Ok(x) if x >= 0.0 && x.is_finite() => Ok(S::lit(x)),
                Ok(x) => Err(Error::Parse {
                    line,
                    message: format!("periodogram value {x} must be finite and nonnegative"),
                }),
                Err(e) => Err(Error::Parse {
                    line,
                    message: format!("invalid value {v:?}: {e}"),
                }),
            })
            .collect::<Result<_>>()?;
        Ok(Self { values })
    }
}
