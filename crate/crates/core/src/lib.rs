//! Quantum and classical limits to stochastic-displacement spectroscopy and
//! detection with a squeezed probe.
//!
//! The crate compares unsqueezing followed by spectral photon counting
//! (USPC) against homodyne detection of the phase quadrature:
//!
//! - [`info_bounds`]: Fisher informations, the extended-convexity quantum
//!   bound and their low-SNR and flat-band forms.
//! - [`detection_bounds`]: Chernoff exponents, fidelity and error-probability
//!   brackets for detecting a random displacement.
//! - [`stochastic_sim`]: seeded sampling of Fourier coefficients, photon
//!   counts and homodyne periodograms.
//! - [`inference`]: maximum-likelihood estimation, likelihood-ratio tests and
//!   Monte Carlo harnesses that check the analytic limits.
//!
//! Everything numeric is generic over [`Scalar`] (`f64` or `f32`); the type
//! aliases below fix the scalar to `f64` (or `f32` with the `32` suffix).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod detection_bounds;
pub mod error;
pub mod inference;
pub mod info_bounds;
pub mod numerics;
pub mod scalar;
pub mod spectral_models;
pub mod stochastic_sim;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type QuadratureSpec = numerics::QuadratureSpec<f64>;
pub type NoiseSpectrumModel = spectral_models::NoiseSpectrumModel<f64>;
pub type SpectralShape = spectral_models::SpectralShape<f64>;
pub type TabulatedSpectrum = spectral_models::TabulatedSpectrum<f64>;
pub type ProbeProfile = spectral_models::ProbeProfile<f64>;
pub type FlatBandConfig = spectral_models::FlatBandConfig<f64>;
pub type ModeGrid = stochastic_sim::ModeGrid<f64>;
pub type InfoReport = info_bounds::InfoReport<f64>;
pub type ExponentReport = detection_bounds::ExponentReport<f64>;
pub type MleResult = inference::MleResult<f64>;
pub type McEstimationResult = inference::McEstimationResult<f64>;
pub use inference::McDetectionResult;

pub type QuadratureSpec32 = numerics::QuadratureSpec<f32>;
pub type NoiseSpectrumModel32 = spectral_models::NoiseSpectrumModel<f32>;
pub type ProbeProfile32 = spectral_models::ProbeProfile<f32>;
pub type FlatBandConfig32 = spectral_models::FlatBandConfig<f32>;
pub type ModeGrid32 = stochastic_sim::ModeGrid<f32>;
pub type InfoReport32 = info_bounds::InfoReport<f32>;
pub type ExponentReport32 = detection_bounds::ExponentReport<f32>;
pub type MleResult32 = inference::MleResult<f32>;
pub type McEstimationResult32 = inference::McEstimationResult<f32>;

