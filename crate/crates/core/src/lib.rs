//! Link-level simulation of all-digital massive MIMO base stations whose
//! radio head and baseband unit are connected by a rate-limited fronthaul.
//!
//! Each antenna carries a pair of `Q`-bit converters, so an array of `B`
//! antennas needs `2BQ` bit/s/Hz of fronthaul. The crate evaluates
//! Bussgang-linearized uplink and downlink rates for a given channel,
//! estimates channels from quantized pilots, and sweeps `(Q, B)` pairs on a
//! fixed fronthaul budget to find the rate at a target outage probability.
//!
//! Module map:
//!
//! - [`quantizer`]: mid-rise quantizer, step calibration, Bussgang gain and
//!   distortion covariance.
//! - [`channel`]: ULA line-of-sight and i.i.d. Rayleigh channels, user drops.
//! - [`uplink`]: AGC, combiners, SINDR and the mismatched-decoding GMI.
//! - [`downlink`]: MR precoding, DAC linearization and SINDR.
//! - [`estimation`]: DFT pilots and the Bussgang MMSE channel estimator.
//! - [`engine`]: Monte Carlo trials, outage rates and the fronthaul sweep.
//! - [`mse_curve`]: estimation-MSE tables over pilot length and SNR.
//! - [`config`]: the scenario description and its JSON form.
//! - [`validation`]: numerical self-checks used by `fhmimo validate`.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod downlink;
pub mod engine;
pub mod error;
pub mod estimation;
pub mod linalg;
pub mod mse_curve;
pub mod quantizer;
pub mod uplink;
pub mod validation;

pub use error::{Error, Result};
