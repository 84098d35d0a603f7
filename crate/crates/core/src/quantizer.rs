//! Uniform mid-rise quantizer and its Bussgang linearization.
//!
//! Every converter in the array is a pair of identical real quantizers, one
//! for the in-phase and one for the quadrature component. With `L = 2^Q`
//! levels and step `Δ`, the output alphabet per real dimension is
//! `{Δ(1-L)/2, ..., -Δ/2, Δ/2, ..., Δ(L-1)/2}`; there is no zero level.
//!
//! For a circularly-symmetric Gaussian input the quantizer output decomposes
//! as `r = G x + e` with a diagonal gain `G` and a distortion `e` that is
//! uncorrelated with `x`. The 1-bit case has an exact distortion covariance
//! through the arcsine law; for more bits a diagonal approximation built from
//! exact scalar output powers is used.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;

use crate::linalg::{hermitian_defect, CMat, ZERO};
use crate::{Error, Result};

/// Highest supported resolution; `2^24` levels is far past any converter of
/// interest and keeps level arithmetic exact in `f64`.
pub const MAX_BITS: u32 = 24;

/// Converter resolution: `Q` bits per real dimension, or an ideal converter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Resolution {
    Bits(u32),
    Infinite,
}

impl Resolution {
    pub fn bits(self) -> Option<u32> {
        match self {
            Resolution::Bits(q) => Some(q),
            Resolution::Infinite => None,
        }
    }
}

impl std::fmt::Display for Resolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Resolution::Bits(q) => write!(f, "{q}"),
            Resolution::Infinite => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for Resolution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinite") {
            return Ok(Resolution::Infinite);
        }
        let q: u32 = s
            .parse()
            .map_err(|_| Error::domain(format!("invalid resolution `{s}`")))?;
        if q == 0 || q > MAX_BITS {
            return Err(Error::domain(format!(
                "resolution must be in 1..={MAX_BITS}, got {q}"
            )));
        }
        Ok(Resolution::Bits(q))
    }
}

impl Serialize for Resolution {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            Resolution::Bits(q) => serializer.serialize_u32(*q),
            Resolution::Infinite => serializer.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Resolution {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u64),
            Text(String),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Num(q) => format!("{q}").parse().map_err(serde::de::Error::custom),
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// A uniform, symmetric, mid-rise quantizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantizerSpec {
    bits: u32,
    step: f64,
    levels: u32,
}

impl QuantizerSpec {
    pub fn new(bits: u32, step: f64) -> Result<Self> {
        if bits == 0 || bits > MAX_BITS {
            return Err(Error::domain(format!(
                "bits must be in 1..={MAX_BITS}, got {bits}"
            )));
        }
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::domain(format!(
                "step must be positive and finite, got {step}"
            )));
        }
        Ok(Self {
            bits,
            step,
            levels: 1 << bits,
        })
    }

    /// Quantizer whose step is set by [`calibrate_step`].
    pub fn calibrated(bits: u32, input_power: f64, clip_prob: f64) -> Result<Self> {
        Self::new(bits, calibrate_step(bits, input_power, clip_prob)?)
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    /// Output levels per real dimension, ascending.
    pub fn alphabet(&self) -> Vec<f64> {
        let l = self.levels as f64;
        (0..self.levels)
            .map(|k| self.step * (k as f64 - 0.5 * (l - 1.0)))
            .collect()
    }

    /// Decision thresholds between consecutive levels, ascending (`L - 1`
    /// values).
    pub fn thresholds(&self) -> Vec<f64> {
        let l = self.levels as f64;
        (1..self.levels)
            .map(|i| self.step * (i as f64 - 0.5 * l))
            .collect()
    }

    /// Quantizes one real sample.
    pub fn quantize(&self, r: f64) -> Result<f64> {
        if !r.is_finite() {
            return Err(Error::domain(format!(
                "cannot quantize non-finite input {r}"
            )));
        }
        Ok(self.quantize_finite(r))
    }

    #[inline]
    pub(crate) fn quantize_finite(&self, r: f64) -> f64 {
        // Same expression as `alphabet`, so outputs are exact members.
        let l = self.levels as f64;
        let k = ((r / self.step).floor() + 0.5 * l).clamp(0.0, l - 1.0);
        self.step * (k - 0.5 * (l - 1.0))
    }

    #[inline]
    pub(crate) fn quantize_complex_finite(&self, z: Complex64) -> Complex64 {
        Complex64::new(self.quantize_finite(z.re), self.quantize_finite(z.im))
    }

    /// Quantizes real and imaginary parts independently.
    pub fn quantize_complex(&self, z: &[Complex64]) -> Result<Vec<Complex64>> {
        z.iter()
            .map(|v| Ok(Complex64::new(self.quantize(v.re)?, self.quantize(v.im)?)))
            .collect()
    }

    /// Bussgang gain for a complex Gaussian input of power `variance`.
    pub fn gain_for_variance(&self, variance: f64) -> Result<f64> {
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::domain(format!(
                "Bussgang gain needs a positive input variance, got {variance}"
            )));
        }
        let l = self.levels as f64;
        let d2 = self.step * self.step;
        let sum: f64 = (1..self.levels)
            .map(|i| {
                let t = i as f64 - 0.5 * l;
                (-d2 * t * t / variance).exp()
            })
            .sum();
        Ok(self.step / (PI * variance).sqrt() * sum)
    }

    /// Exact output power `E|Q(x)|^2` for `x ~ CN(0, variance)`.
    pub fn output_power(&self, variance: f64) -> Result<f64> {
        if !(variance.is_finite() && variance > 0.0) {
            return Err(Error::domain(format!(
                "output power needs a positive input variance, got {variance}"
            )));
        }
        let sigma = (0.5 * variance).sqrt();
        let levels = self.alphabet();
        let thresholds = self.thresholds();
        let mut per_dim = 0.0;
        for (k, level) in levels.iter().enumerate() {
            let lo = if k == 0 {
                f64::NEG_INFINITY
            } else {
                thresholds[k - 1] / sigma
            };
            let hi = thresholds.get(k).map_or(f64::INFINITY, |t| t / sigma);
            per_dim += level * level * normal_mass(lo, hi);
        }
        Ok(2.0 * per_dim)
    }
}

/// Standard normal CDF.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal upper tail `1 - Φ(x)`.
fn std_normal_sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// `P(lo <= Z < hi)` for a standard normal `Z`, evaluated on the tail closer
/// to zero cancellation.
fn normal_mass(lo: f64, hi: f64) -> f64 {
    if lo >= 0.0 {
        std_normal_sf(lo) - std_normal_sf(hi)
    } else {
        std_normal_cdf(hi) - std_normal_cdf(lo)
    }
}

/// Step size such that one real component of a `CN(0, input_power)` input
/// leaves the granular region `[-ΔL/2, ΔL/2)` with probability `clip_prob`.
pub fn calibrate_step(bits: u32, input_power: f64, clip_prob: f64) -> Result<f64> {
    if bits == 0 || bits > MAX_BITS {
        return Err(Error::domain(format!(
            "bits must be in 1..={MAX_BITS}, got {bits}"
        )));
    }
    if !(input_power.is_finite() && input_power > 0.0) {
        return Err(Error::domain(format!(
            "input power must be positive, got {input_power}"
        )));
    }
    if !(clip_prob > 0.0 && clip_prob < 1.0) {
        return Err(Error::domain(format!(
            "clip probability must be in (0, 1), got {clip_prob}"
        )));
    }
    let sigma_real = (0.5 * input_power).sqrt();
    let z = Normal::standard().inverse_cdf(1.0 - 0.5 * clip_prob);
    let levels = (1u64 << bits) as f64;
    Ok(2.0 * sigma_real * z / levels)
}

/// Per-antenna Bussgang gains for input variances `diag(A C_y A^H)`.
pub fn bussgang_gain(input_variances: &[f64], spec: &QuantizerSpec) -> Result<Vec<f64>> {
    input_variances
        .iter()
        .map(|&v| spec.gain_for_variance(v))
        .collect()
}

/// Complex output power of a 1-bit quantizer, independent of its input.
pub fn output_power_1bit(spec: &QuantizerSpec) -> Result<f64> {
    if spec.bits != 1 {
        return Err(Error::Unsupported(format!(
            "closed-form output power needs Q = 1, got Q = {}",
            spec.bits
        )));
    }
    Ok(0.5 * spec.step * spec.step)
}

/// Output covariance of a 1-bit quantizer driven by a Gaussian vector with
/// unit-diagonal covariance `normalized_cov` (arcsine law).
pub fn arcsine_output_cov(normalized_cov: &CMat, spec: &QuantizerSpec) -> Result<CMat> {
    if spec.bits != 1 {
        return Err(Error::Unsupported(format!(
            "arcsine law applies to Q = 1 only, got Q = {}",
            spec.bits
        )));
    }
    let n = normalized_cov.nrows();
    if normalized_cov.ncols() != n {
        return Err(Error::domain("covariance must be square"));
    }
    for i in 0..n {
        let d = normalized_cov[(i, i)];
        if (d.re - 1.0).abs() > 1e-9 || d.im.abs() > 1e-9 {
            return Err(Error::domain(format!(
                "arcsine law needs unit diagonal, entry {i} is {d}"
            )));
        }
    }
    let scale = spec.step * spec.step / PI;
    Ok(CMat::from_fn(n, n, |i, j| {
        if i == j {
            return Complex64::new(0.5 * spec.step * spec.step, 0.0);
        }
        let s = normalized_cov[(i, j)];
        Complex64::new(
            scale * clamp_unit(s.re).asin(),
            scale * clamp_unit(s.im).asin(),
        )
    }))
}

fn clamp_unit(x: f64) -> f64 {
    x.clamp(-1.0, 1.0)
}

/// How a [`DistortionModel`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exactness {
    Exact1Bit,
    DiagonalApprox,
    InfinitePrecision,
}

/// Converter seen by a linearized signal chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Converter {
    Quantized(QuantizerSpec),
    Ideal,
}

impl Converter {
    /// Converter for `resolution`, with its step calibrated to the given
    /// per-antenna input power.
    pub fn calibrated(resolution: Resolution, input_power: f64, clip_prob: f64) -> Result<Self> {
        match resolution {
            Resolution::Bits(q) => Ok(Converter::Quantized(QuantizerSpec::calibrated(
                q,
                input_power,
                clip_prob,
            )?)),
            Resolution::Infinite => Ok(Converter::Ideal),
        }
    }

    #[inline]
    pub fn apply(&self, z: Complex64) -> Complex64 {
        match self {
            Converter::Quantized(spec) => spec.quantize_complex_finite(z),
            Converter::Ideal => z,
        }
    }

    pub fn spec(&self) -> Option<&QuantizerSpec> {
        match self {
            Converter::Quantized(spec) => Some(spec),
            Converter::Ideal => None,
        }
    }
}

/// Bussgang decomposition `r = G x + e` of a converter bank.
#[derive(Debug, Clone)]
pub struct DistortionModel {
    /// Diagonal of `G`; real and positive.
    pub gain: Vec<f64>,
    /// Covariance of `e`.
    pub error_cov: CMat,
    pub exactness: Exactness,
}

impl DistortionModel {
    pub fn ideal(n: usize) -> Self {
        Self {
            gain: vec![1.0; n],
            error_cov: CMat::zeros(n, n),
            exactness: Exactness::InfinitePrecision,
        }
    }

    pub fn dim(&self) -> usize {
        self.gain.len()
    }

    /// `G` as a dense complex matrix.
    pub fn gain_matrix(&self) -> CMat {
        let n = self.gain.len();
        CMat::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(self.gain[i], 0.0)
            } else {
                ZERO
            }
        })
    }

    /// True when `error_cov` is diagonal, so quadratic forms can skip the
    /// off-diagonal part.
    pub fn is_diagonal(&self) -> bool {
        !matches!(self.exactness, Exactness::Exact1Bit)
    }

    /// `w^H C_e w`.
    pub fn distortion_power(&self, w: &[Complex64]) -> f64 {
        match self.exactness {
            Exactness::InfinitePrecision => 0.0,
            Exactness::DiagonalApprox => w
                .iter()
                .enumerate()
                .map(|(b, x)| self.error_cov[(b, b)].re * x.norm_sqr())
                .sum(),
            Exactness::Exact1Bit => crate::linalg::quadratic_form(&self.error_cov, w),
        }
    }

    /// Scales the model by `k`: gains by `k`, distortion covariance by `k^2`.
    pub fn scaled(mut self, k: f64) -> Self {
        for g in &mut self.gain {
            *g *= k;
        }
        self.error_cov *= Complex64::new(k * k, 0.0);
        self
    }
}

/// Bussgang decomposition of `converter` for a Gaussian input with
/// covariance `input_cov`.
///
/// Q = 1 uses the exact arcsine-law output covariance. Q > 1 uses a diagonal
/// approximation whose entries are the exact scalar output power minus the
/// linear part. Negative diagonal entries from cancellation are clamped to 0.
pub fn distortion_cov(input_cov: &CMat, converter: &Converter) -> Result<DistortionModel> {
    let n = input_cov.nrows();
    if input_cov.ncols() != n {
        return Err(Error::domain("input covariance must be square"));
    }
    let variances = checked_variances(input_cov)?;
    let spec = match converter {
        Converter::Ideal => return Ok(DistortionModel::ideal(n)),
        Converter::Quantized(spec) => spec,
    };
    let gain = bussgang_gain(&variances, spec)?;
    if spec.bits() == 1 {
        let inv_sd: Vec<f64> = variances.iter().map(|v| 1.0 / v.sqrt()).collect();
        let mut normalized = crate::linalg::scale_symmetric(input_cov, &inv_sd);
        for i in 0..n {
            normalized[(i, i)] = Complex64::new(1.0, 0.0);
        }
        let mut cov = arcsine_output_cov(&normalized, spec)?;
        for j in 0..n {
            for i in 0..n {
                cov[(i, j)] -= input_cov[(i, j)] * (gain[i] * gain[j]);
            }
        }
        for i in 0..n {
            let d = cov[(i, i)].re.max(0.0);
            cov[(i, i)] = Complex64::new(d, 0.0);
        }
        Ok(DistortionModel {
            gain,
            error_cov: cov,
            exactness: Exactness::Exact1Bit,
        })
    } else {
        let mut cov = CMat::zeros(n, n);
        for (b, &v) in variances.iter().enumerate() {
            let p = spec.output_power(v)?;
            cov[(b, b)] = Complex64::new((p - gain[b] * gain[b] * v).max(0.0), 0.0);
        }
        Ok(DistortionModel {
            gain,
            error_cov: cov,
            exactness: Exactness::DiagonalApprox,
        })
    }
}

/// Diagonal of a covariance after cheap validity checks: Hermitian, positive
/// diagonal, and every 2x2 principal minor nonnegative.
fn checked_variances(cov: &CMat) -> Result<Vec<f64>> {
    let n = cov.nrows();
    let variances: Vec<f64> = (0..n).map(|i| cov[(i, i)].re).collect();
    if let Some((i, v)) = variances
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.is_finite() && **v > 0.0))
    {
        return Err(Error::domain(format!(
            "input variance {i} must be positive, got {v}"
        )));
    }
    let scale = variances.iter().cloned().fold(0.0, f64::max);
    if hermitian_defect(cov) > 1e-9 * scale {
        return Err(Error::domain("input covariance is not Hermitian"));
    }
    for j in 0..n {
        for i in 0..j {
            let lim = variances[i] * variances[j];
            if cov[(i, j)].norm_sqr() > lim * (1.0 + 1e-9) {
                return Err(Error::domain(format!(
                    "input covariance is not positive semidefinite (minor {i},{j})"
                )));
            }
        }
    }
    Ok(variances)
}
