//! Downlink: linear precoding at the baseband unit, DAC quantization of the
//! precoded signal, and the resulting per-user SINDR.
//!
//! The precoded vector `x = P s` (with `s ~ CN(0, I)`) is quantized by DACs
//! whose step is calibrated to the average per-antenna power of `x`. The
//! Bussgang decomposition `Q(x) = G x + e` is then rescaled so that the
//! radiated power, signal plus distortion, is exactly one; `rho` is the
//! total transmit SNR at the reference distance.

use num_complex::Complex64;

use crate::linalg::{column, CMat};
use crate::quantizer::{distortion_cov, Converter, Exactness, Resolution};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PrecoderKind {
    #[default]
    Mr,
}

/// Quantized transmit chain, normalized to unit radiated power.
#[derive(Debug, Clone)]
pub struct DownlinkModel {
    pub precoder: CMat,
    /// Diagonal Bussgang gain, already multiplied by `power_norm`.
    pub gain: Vec<f64>,
    /// Distortion covariance, already multiplied by `power_norm^2`.
    pub error_cov: CMat,
    /// Scale applied after the DACs to make the radiated power one.
    pub power_norm: f64,
    pub exactness: Exactness,
    pub converter: Converter,
}

impl DownlinkModel {
    /// `tr(G P P^H G^H + C_e)`.
    pub fn radiated_power(&self) -> f64 {
        let signal: f64 = (0..self.precoder.ncols())
            .map(|u| {
                column(&self.precoder, u)
                    .iter()
                    .zip(&self.gain)
                    .map(|(p, g)| p.norm_sqr() * g * g)
                    .sum::<f64>()
            })
            .sum();
        signal + self.error_cov.trace().re
    }

    fn distortion_power(&self, h_u: &[Complex64]) -> f64 {
        // h^T C_e h^* = conj(h)^H C_e conj(h)
        match self.exactness {
            Exactness::InfinitePrecision => 0.0,
            Exactness::DiagonalApprox => h_u
                .iter()
                .enumerate()
                .map(|(b, x)| self.error_cov[(b, b)].re * x.norm_sqr())
                .sum(),
            Exactness::Exact1Bit => {
                let conj: Vec<Complex64> = h_u.iter().map(|z| z.conj()).collect();
                crate::linalg::quadratic_form(&self.error_cov, &conj)
            }
        }
    }
}

/// Conjugate matched precoder `Ĥ^* / ||Ĥ||_F`.
pub fn mr_precoder(h_hat: &CMat) -> Result<CMat> {
    let norm = h_hat.norm();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::domain(
            "MR precoder needs a nonzero channel estimate",
        ));
    }
    Ok(h_hat.map(|z| z.conj() / norm))
}

/// Linearizes the DAC bank for precoder `p` and normalizes the transmit
/// chain to unit radiated power.
pub fn downlink_linearize(
    p: &CMat,
    resolution: Resolution,
    clip_prob: f64,
) -> Result<DownlinkModel> {
    let b = p.nrows();
    let c_x = p * p.adjoint();
    let avg_power = c_x.trace().re / b as f64;
    if !(avg_power > 0.0) {
        return Err(Error::domain("precoder has zero power"));
    }
    let converter = Converter::calibrated(resolution, avg_power, clip_prob)?;
    let model = distortion_cov(&c_x, &converter)?;
    let exactness = model.exactness;
    let mut unscaled = DownlinkModel {
        precoder: p.clone(),
        gain: model.gain,
        error_cov: model.error_cov,
        power_norm: 1.0,
        exactness,
        converter,
    };
    let power = unscaled.radiated_power();
    if !(power > 0.0 && power.is_finite()) {
        return Err(Error::domain(format!(
            "quantized transmit power is {power}"
        )));
    }
    let k = 1.0 / power.sqrt();
    for g in &mut unscaled.gain {
        *g *= k;
    }
    unscaled.error_cov *= Complex64::new(k * k, 0.0);
    unscaled.power_norm = k;
    Ok(unscaled)
}

/// Per-user downlink SINDR over the true channel `h` (`B x U`).
///
/// The distortion term scales with `rho` like the precoded signal, since
/// both are part of the same radiated waveform.
pub fn downlink_sindr(h: &CMat, model: &DownlinkModel, rho: f64) -> Result<Vec<f64>> {
    let (b, users) = (h.nrows(), h.ncols());
    if model.precoder.nrows() != b || model.precoder.ncols() != users {
        return Err(Error::domain(format!(
            "shape mismatch: H {}x{}, P {}x{}",
            b,
            users,
            model.precoder.nrows(),
            model.precoder.ncols()
        )));
    }
    Ok((0..users)
        .map(|u| {
            let hu = column(h, u);
            let t = |v: usize| -> Complex64 {
                hu.iter()
                    .zip(column(&model.precoder, v))
                    .zip(&model.gain)
                    .map(|((hb, pb), g)| hb * pb * *g)
                    .sum()
            };
            let signal = rho * t(u).norm_sqr();
            let interference: f64 = (0..users)
                .filter(|v| *v != u)
                .map(|v| t(v).norm_sqr())
                .sum();
            signal / (rho * interference + rho * model.distortion_power(hu) + 1.0)
        })
        .collect())
}

pub fn downlink_rate(gamma: f64) -> f64 {
    crate::uplink::rate_from_sindr(gamma)
}

/// Per-user downlink rates for one realization, precoding on `h_hat`.
pub fn downlink_trial(
    h_true: &CMat,
    h_hat: &CMat,
    resolution: Resolution,
    rho: f64,
    clip_prob: f64,
    precoder: PrecoderKind,
) -> Result<Vec<f64>> {
    let p = match precoder {
        PrecoderKind::Mr => mr_precoder(h_hat)?,
    };
    let model = downlink_linearize(&p, resolution, clip_prob)?;
    Ok(downlink_sindr(h_true, &model, rho)?
        .into_iter()
        .map(downlink_rate)
        .collect())
}
