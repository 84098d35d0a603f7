//! Uplink: AGC, Bussgang linearization of the ADC bank, linear combining,
//! SINDR and the generalized mutual information of a scaled
//! nearest-neighbor decoder.
//!
//! Per-user path loss is folded into the channel columns, so one nominal
//! `rho` applies to every user. Rates are in bit per channel use.

use nalgebra::Cholesky;
use num_complex::Complex64;

use crate::linalg::{column, CMat};
use crate::quantizer::{distortion_cov, Converter, DistortionModel, Resolution};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombinerKind {
    /// Maximum ratio: `W = G A Ĥ`.
    #[default]
    Mr,
    /// Distortion-aware MMSE, the maximizer of the SINDR.
    DaMmse,
}

/// Received-signal covariance `rho H H^H + I`.
pub fn received_covariance(h: &CMat, rho: f64) -> CMat {
    let b = h.nrows();
    h * h.adjoint() * Complex64::new(rho, 0.0) + CMat::identity(b, b)
}

/// AGC gains `(1/sqrt(B)) diag(C_y)^{-1/2}`: every antenna sees power `1/B`
/// at the quantizer input.
pub fn agc_matrix(c_y: &CMat) -> Result<Vec<f64>> {
    let b = c_y.nrows();
    let scale = 1.0 / (b as f64).sqrt();
    (0..b)
        .map(|i| {
            let p = c_y[(i, i)].re;
            if p > 0.0 && p.is_finite() {
                Ok(scale / p.sqrt())
            } else {
                Err(Error::domain(format!(
                    "AGC needs positive received power, antenna {i} has {p}"
                )))
            }
        })
        .collect()
}

pub fn mr_combiner(h_hat: &CMat, agc: &[f64], gain: &[f64]) -> CMat {
    CMat::from_fn(h_hat.nrows(), h_hat.ncols(), |b, u| {
        h_hat[(b, u)] * (gain[b] * agc[b])
    })
}

/// Combiner built by [`da_mmse_combiner`].
#[derive(Debug, Clone)]
pub struct MmseCombiner {
    pub w: CMat,
    /// Set when the covariance had to be diagonally loaded to factorize.
    pub regularized: bool,
}

/// Distortion-aware MMSE combiner.
///
/// Column `u` is proportional to
/// `(rho sum_{v != u} q_v q_v^H + C_e + (GA)(GA)^H)^{-1} q_u` with
/// `q_v = G A ĥ_v`. Adding the `v = u` term back only rescales the column
/// (Sherman-Morrison), so all users share one factorization.
pub fn da_mmse_combiner(
    h_hat: &CMat,
    agc: &[f64],
    distortion: &DistortionModel,
    rho: f64,
) -> Result<MmseCombiner> {
    let b = h_hat.nrows();
    let ga: Vec<f64> = distortion
        .gain
        .iter()
        .zip(agc)
        .map(|(g, a)| g * a)
        .collect();
    let q = crate::linalg::scale_rows(h_hat, &ga);
    let mut m = &q * q.adjoint() * Complex64::new(rho, 0.0) + &distortion.error_cov;
    for i in 0..b {
        m[(i, i)] += Complex64::new(ga[i] * ga[i], 0.0);
    }
    let (chol, regularized) = match Cholesky::new(m.clone()) {
        Some(c) => (c, false),
        None => {
            let load = 1e-12 * m.trace().re / b as f64;
            let loaded =
                m + CMat::identity(b, b) * Complex64::new(load.max(f64::MIN_POSITIVE), 0.0);
            let c = Cholesky::new(loaded)
                .ok_or_else(|| Error::domain("combiner covariance is not positive definite"))?;
            (c, true)
        }
    };
    Ok(MmseCombiner {
        w: chol.solve(&q),
        regularized,
    })
}

/// Per-user SINDR of a linear combiner `w` applied to the quantized signal.
///
/// `h` is the true channel; the noise term is `||A G w_u||^2` and the
/// distortion term `w_u^H C_e w_u`.
pub fn uplink_sindr(
    h: &CMat,
    w: &CMat,
    agc: &[f64],
    distortion: &DistortionModel,
    rho: f64,
) -> Result<Vec<f64>> {
    check_shapes(h, w, agc, distortion)?;
    (0..h.ncols())
        .map(|u| {
            let parts = SignalParts::new(h, w, agc, distortion, rho, u);
            if !(parts.sigma2 > 0.0) {
                return Err(Error::domain(format!(
                    "SINDR denominator vanished for user {u}"
                )));
            }
            Ok(rho * parts.gains[u].norm_sqr() / parts.sigma2)
        })
        .collect()
}

/// `log2(1 + gamma)`.
pub fn rate_from_sindr(gamma: f64) -> f64 {
    gamma.max(0.0).ln_1p() / std::f64::consts::LN_2
}

fn check_shapes(h: &CMat, w: &CMat, agc: &[f64], distortion: &DistortionModel) -> Result<()> {
    let b = h.nrows();
    if w.nrows() != b || w.ncols() != h.ncols() || agc.len() != b || distortion.dim() != b {
        return Err(Error::domain(format!(
            "shape mismatch: H {}x{}, W {}x{}, A {}, G {}",
            b,
            h.ncols(),
            w.nrows(),
            w.ncols(),
            agc.len(),
            distortion.dim()
        )));
    }
    Ok(())
}

/// Combiner output decomposition for one user: `w_u^H G A h_v` for every `v`
/// and the interference-plus-distortion-plus-noise power.
struct SignalParts {
    gains: Vec<Complex64>,
    sigma2: f64,
}

impl SignalParts {
    fn new(
        h: &CMat,
        w: &CMat,
        agc: &[f64],
        distortion: &DistortionModel,
        rho: f64,
        u: usize,
    ) -> Self {
        let wu = column(w, u);
        let ga: Vec<f64> = distortion
            .gain
            .iter()
            .zip(agc)
            .map(|(g, a)| g * a)
            .collect();
        let gains: Vec<Complex64> = (0..h.ncols())
            .map(|v| {
                column(h, v)
                    .iter()
                    .zip(wu)
                    .zip(&ga)
                    .map(|((hb, wb), s)| wb.conj() * hb * *s)
                    .sum()
            })
            .collect();
        let interference: f64 = gains
            .iter()
            .enumerate()
            .filter(|(v, _)| *v != u)
            .map(|(_, t)| t.norm_sqr())
            .sum();
        let noise: f64 = wu
            .iter()
            .zip(&ga)
            .map(|(wb, s)| wb.norm_sqr() * s * s)
            .sum();
        let sigma2 = rho * interference + noise + distortion.distortion_power(wu);
        Self { gains, sigma2 }
    }
}

/// Scalar channel seen by a mismatched decoder for one user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmiTerms {
    /// True effective gain `w^H G A h_u`.
    pub g: Complex64,
    /// Gain the decoder assumes, `w^H G A ĥ_u`.
    pub g_hat: Complex64,
    /// Interference, noise and distortion power.
    pub sigma2: f64,
    pub rho: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Optimal GMI parameter; `None` when the decoder gain is zero.
    pub s: Option<f64>,
}

impl GmiTerms {
    pub fn new(g: Complex64, g_hat: Complex64, sigma2: f64, rho: f64) -> Self {
        let a = g.norm_sqr() * rho + sigma2;
        let b = g_hat.norm_sqr() * rho;
        let c = (g - g_hat).norm_sqr() * rho + sigma2;
        let s = optimal_s(g, g_hat, rho, a, b, c);
        Self {
            g,
            g_hat,
            sigma2,
            rho,
            a,
            b,
            c,
            s,
        }
    }

    /// GMI in nats for a given `s >= 0`.
    pub fn objective(&self, s: f64) -> f64 {
        let sb = s * self.b;
        s * (self.a - self.c - sb * self.c) / (1.0 + sb) + sb.ln_1p()
    }
}

/// `s = (-2c + b + sqrt(b^2 + 4ac)) / (2bc)`, evaluated without the
/// cancellation of the textbook form when `2c > b`. Clamped at 0.
fn optimal_s(g: Complex64, g_hat: Complex64, rho: f64, a: f64, b: f64, c: f64) -> Option<f64> {
    if !(b > 0.0) || !(c > 0.0) {
        return None;
    }
    let root = (b * b + 4.0 * a * c).sqrt();
    let s = if 2.0 * c > b {
        // a + b - c = 2 rho Re(g conj(ĝ))
        let num = 4.0 * rho * (g * g_hat.conj()).re;
        num / (b * (root + 2.0 * c - b))
    } else {
        (b - 2.0 * c + root) / (2.0 * b * c)
    };
    Some(s.max(0.0))
}

/// Effective gains and GMI parameters for user `u`, combiner `w` (built
/// from the estimate), true channel `h` and estimate `h_hat`.
pub fn effective_gains(
    h: &CMat,
    h_hat: &CMat,
    w: &CMat,
    agc: &[f64],
    distortion: &DistortionModel,
    rho: f64,
    u: usize,
) -> Result<GmiTerms> {
    check_shapes(h, w, agc, distortion)?;
    if h_hat.shape() != h.shape() {
        return Err(Error::domain("channel estimate shape differs from channel"));
    }
    if u >= h.ncols() {
        return Err(Error::domain(format!("user index {u} out of range")));
    }
    let parts = SignalParts::new(h, w, agc, distortion, rho, u);
    let ga: Vec<f64> = distortion
        .gain
        .iter()
        .zip(agc)
        .map(|(g, a)| g * a)
        .collect();
    let g_hat = column(h_hat, u)
        .iter()
        .zip(column(w, u))
        .zip(&ga)
        .map(|((hb, wb), s)| wb.conj() * hb * *s)
        .sum();
    Ok(GmiTerms::new(parts.gains[u], g_hat, parts.sigma2, rho))
}

/// GMI in bit per channel use, clamped at 0.
pub fn uplink_gmi(terms: &GmiTerms) -> f64 {
    match terms.s {
        Some(s) => (terms.objective(s) / std::f64::consts::LN_2).max(0.0),
        None => 0.0,
    }
}

/// Everything the uplink rate expressions need for one channel realization.
#[derive(Debug, Clone)]
pub struct LinearizedUplink {
    pub agc: Vec<f64>,
    pub distortion: DistortionModel,
    pub combiner: CMat,
    /// `C_y = rho H H^H + I` of the true channel.
    pub input_cov: CMat,
    pub converter: Converter,
    pub regularized: bool,
}

impl LinearizedUplink {
    /// Linearizes the receive chain around the true channel statistics and
    /// builds the combiner from the estimate.
    pub fn new(
        h_true: &CMat,
        h_hat: &CMat,
        resolution: Resolution,
        rho: f64,
        clip_prob: f64,
        combiner: CombinerKind,
    ) -> Result<Self> {
        let b = h_true.nrows();
        let input_cov = received_covariance(h_true, rho);
        let agc = agc_matrix(&input_cov)?;
        let scaled = crate::linalg::scale_symmetric(&input_cov, &agc);
        let converter = Converter::calibrated(resolution, 1.0 / b as f64, clip_prob)?;
        let distortion = distortion_cov(&scaled, &converter)?;
        let (combiner, regularized) = match combiner {
            CombinerKind::Mr => (mr_combiner(h_hat, &agc, &distortion.gain), false),
            CombinerKind::DaMmse => {
                let c = da_mmse_combiner(h_hat, &agc, &distortion, rho)?;
                (c.w, c.regularized)
            }
        };
        Ok(Self {
            agc,
            distortion,
            combiner,
            input_cov,
            converter,
            regularized,
        })
    }

    pub fn sindr(&self, h: &CMat, rho: f64) -> Result<Vec<f64>> {
        uplink_sindr(h, &self.combiner, &self.agc, &self.distortion, rho)
    }

    pub fn gmi_terms(&self, h: &CMat, h_hat: &CMat, rho: f64) -> Result<Vec<GmiTerms>> {
        (0..h.ncols())
            .map(|u| {
                effective_gains(
                    h,
                    h_hat,
                    &self.combiner,
                    &self.agc,
                    &self.distortion,
                    rho,
                    u,
                )
            })
            .collect()
    }
}

/// Per-user uplink rates for one realization.
///
/// With `h_hat == h_true` the GMI coincides with `log2(1 + SINDR)`.
pub fn uplink_trial(
    h_true: &CMat,
    h_hat: &CMat,
    resolution: Resolution,
    rho: f64,
    clip_prob: f64,
    combiner: CombinerKind,
) -> Result<Vec<f64>> {
    let lin = LinearizedUplink::new(h_true, h_hat, resolution, rho, clip_prob, combiner)?;
    Ok(lin
        .gmi_terms(h_true, h_hat, rho)?
        .iter()
        .map(uplink_gmi)
        .collect())
}
