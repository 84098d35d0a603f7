//! Channel estimation from pilots observed through the quantized uplink.
//!
//! Users send orthogonal pilots taken from columns of the `n_p`-point DFT
//! matrix. Each antenna row `h_b` of the channel (a `U`-vector with prior
//! `CN(0, diag(c))`) is estimated from its `n_p` quantized observations by
//! the linear MMSE estimator on the Bussgang-linearized pilot model.
//!
//! With DFT pilots and a diagonal prior, the covariance of the observations
//! of one antenna is circulant, and so is the quantizer output covariance
//! (the arcsine law acts entrywise). The pilot sequences are then
//! eigenvectors of the output covariance and the estimator collapses to one
//! complex correlation and one scalar weight per user.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::Rng;

use crate::channel::complex_normal;
use crate::linalg::{CMat, ZERO};
use crate::quantizer::{Converter, Resolution};
use crate::{Error, Result};

/// Orthogonal pilot sequences, one column per user.
#[derive(Debug, Clone)]
pub struct PilotBook {
    matrix: CMat,
}

impl PilotBook {
    /// `n_p x U`.
    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn len(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.nrows() == 0
    }

    pub fn num_users(&self) -> usize {
        self.matrix.ncols()
    }
}

/// The first `num_users` columns of the `n_p`-point DFT matrix,
/// `Φ[t, u] = e^{-j 2π t u / n_p}`.
pub fn dft_pilots(n_p: usize, num_users: usize) -> Result<PilotBook> {
    if num_users == 0 {
        return Err(Error::domain("pilot book needs at least one user"));
    }
    if n_p < num_users {
        return Err(Error::domain(format!(
            "need at least as many pilot symbols as users ({n_p} < {num_users})"
        )));
    }
    let matrix = CMat::from_fn(n_p, num_users, |t, u| dft_entry(t, u, n_p));
    Ok(PilotBook { matrix })
}

fn dft_entry(t: usize, u: usize, n: usize) -> Complex64 {
    // Reduce the index product first so the phase stays small and exact.
    let k = ((t as u128 * u as u128) % n as u128) as f64;
    Complex64::from_polar(1.0, -2.0 * PI * k / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EstimationMethod {
    BussgangMmse,
    /// The true channel, handed through unchanged.
    Genie,
}

#[derive(Debug, Clone)]
pub struct EstimateReport {
    pub h_hat: CMat,
    /// Error power per channel coefficient predicted by the linearized model.
    pub mse_per_coeff: f64,
    pub method: EstimationMethod,
    /// Set when a near-singular observation covariance had to be loaded.
    pub regularized: bool,
}

/// Bussgang MMSE estimator for a fixed pilot book, prior, SNR and converter
/// resolution. Construction does all the statistics; [`estimate`] is a
/// correlation per user and antenna.
///
/// [`estimate`]: BussgangMmse::estimate
#[derive(Debug, Clone)]
pub struct BussgangMmse {
    pilots: PilotBook,
    num_antennas: usize,
    rho: f64,
    /// Pilot-phase AGC gain, common to all antennas.
    agc: f64,
    converter: Converter,
    /// Per-user LMMSE weight on the pilot correlation `Φ_u^H r_b`.
    weights: Vec<Complex64>,
    /// Predicted error variance per user.
    user_mse: Vec<f64>,
    regularized: bool,
}

impl BussgangMmse {
    /// `prior_variances[u]` is the prior variance of every entry in column
    /// `u` of the channel.
    pub fn new(
        pilots: PilotBook,
        num_antennas: usize,
        prior_variances: &[f64],
        rho: f64,
        resolution: Resolution,
        clip_prob: f64,
    ) -> Result<Self> {
        let users = pilots.num_users();
        let n = pilots.len();
        if prior_variances.len() != users {
            return Err(Error::domain(format!(
                "prior has {} variances for {users} users",
                prior_variances.len()
            )));
        }
        if prior_variances.iter().any(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::domain("prior variances must be positive"));
        }
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(Error::domain(format!(
                "pilot SNR must be positive, got {rho}"
            )));
        }
        if num_antennas == 0 {
            return Err(Error::domain("need at least one antenna"));
        }

        // Per-symbol received power is 1 + rho * sum(c) for unit-modulus
        // pilots; the AGC brings it to 1/B like in the data phase.
        let total: f64 = prior_variances.iter().sum();
        let received = 1.0 + rho * total;
        let input_power = 1.0 / num_antennas as f64;
        let agc = (input_power / received).sqrt();
        let converter = Converter::calibrated(resolution, input_power, clip_prob)?;

        // First column of the (circulant) quantizer-input covariance.
        let a2 = agc * agc;
        let input_col: Vec<Complex64> = (0..n)
            .map(|m| {
                let mut v: Complex64 = (0..users)
                    .map(|u| dft_entry(m, u, n) * (rho * prior_variances[u]))
                    .sum();
                if m == 0 {
                    v += Complex64::new(1.0, 0.0);
                }
                v * a2
            })
            .collect();

        let (gain, output_col) = match &converter {
            Converter::Ideal => (1.0, input_col.clone()),
            Converter::Quantized(spec) => {
                let g = spec.gain_for_variance(input_power)?;
                let col = if spec.bits() == 1 {
                    let d2 = spec.step() * spec.step();
                    input_col
                        .iter()
                        .enumerate()
                        .map(|(m, v)| {
                            if m == 0 {
                                Complex64::new(0.5 * d2, 0.0)
                            } else {
                                let s = v / input_power;
                                Complex64::new(
                                    s.re.clamp(-1.0, 1.0).asin(),
                                    s.im.clamp(-1.0, 1.0).asin(),
                                ) * (d2 / PI)
                            }
                        })
                        .collect()
                } else {
                    let distortion =
                        (spec.output_power(input_power)? - g * g * input_power).max(0.0);
                    input_col
                        .iter()
                        .enumerate()
                        .map(|(m, v)| {
                            v * (g * g)
                                + if m == 0 {
                                    Complex64::new(distortion, 0.0)
                                } else {
                                    ZERO
                                }
                        })
                        .collect()
                };
                (g, col)
            }
        };

        // Eigenvalue of the output covariance at pilot frequency u:
        // λ_u = Σ_m c[m] e^{+j 2π m u / n}.
        let mut regularized = false;
        let scale = output_col[0].re;
        let mut weights = Vec::with_capacity(users);
        let mut user_mse = Vec::with_capacity(users);
        for (u, &c) in prior_variances.iter().enumerate() {
            let mut lambda: f64 = output_col
                .iter()
                .enumerate()
                .map(|(m, v)| (v * dft_entry(m, u, n).conj()).re)
                .sum();
            let floor = 1e-12 * scale.max(f64::MIN_POSITIVE);
            if lambda < floor {
                lambda = floor;
                regularized = true;
            }
            let coupling = rho.sqrt() * gain * agc;
            weights.push(Complex64::new(c * coupling / lambda, 0.0));
            let explained = c * c * coupling * coupling * n as f64 / lambda;
            user_mse.push((c - explained).max(0.0));
        }

        Ok(Self {
            pilots,
            num_antennas,
            rho,
            agc,
            converter,
            weights,
            user_mse,
            regularized,
        })
    }

    pub fn pilots(&self) -> &PilotBook {
        &self.pilots
    }

    pub fn converter(&self) -> &Converter {
        &self.converter
    }

    /// Error variance per user predicted by the linearized model.
    pub fn predicted_user_mse(&self) -> &[f64] {
        &self.user_mse
    }

    /// Pilot transmission through the quantized uplink:
    /// `R = Q(a (sqrt(rho) H Φ^T + N))`, a `B x n_p` matrix.
    pub fn observe<R: Rng + ?Sized>(&self, rng: &mut R, h: &CMat) -> Result<CMat> {
        if h.nrows() != self.num_antennas || h.ncols() != self.pilots.num_users() {
            return Err(Error::domain(format!(
                "channel is {}x{}, estimator expects {}x{}",
                h.nrows(),
                h.ncols(),
                self.num_antennas,
                self.pilots.num_users()
            )));
        }
        let clean = h * self.pilots.matrix.transpose() * Complex64::new(self.rho.sqrt(), 0.0);
        let mut r = clean;
        for z in r.iter_mut() {
            *z = self.converter.apply((*z + complex_normal(rng)) * self.agc);
        }
        Ok(r)
    }

    /// Channel estimate from quantized pilot observations (`B x n_p`).
    pub fn estimate(&self, received: &CMat) -> Result<EstimateReport> {
        let (b, n) = (self.num_antennas, self.pilots.len());
        if received.nrows() != b || received.ncols() != n {
            return Err(Error::domain(format!(
                "observations are {}x{}, expected {b}x{n}",
                received.nrows(),
                received.ncols()
            )));
        }
        // Ĥ = R conj(Φ) diag(w)
        let mut h_hat = received * self.pilots.matrix.map(|z| z.conj());
        for (u, w) in self.weights.iter().enumerate() {
            for x in h_hat.column_mut(u).iter_mut() {
                *x *= w;
            }
        }
        let mse = self.user_mse.iter().sum::<f64>() / self.user_mse.len() as f64;
        Ok(EstimateReport {
            h_hat,
            mse_per_coeff: mse,
            method: EstimationMethod::BussgangMmse,
            regularized: self.regularized,
        })
    }
}

/// Functional form of [`BussgangMmse`] for one set of observations.
pub fn bussgang_mmse_estimate(
    received: &CMat,
    pilots: &PilotBook,
    prior_variances: &[f64],
    rho: f64,
    resolution: Resolution,
    clip_prob: f64,
) -> Result<EstimateReport> {
    BussgangMmse::new(
        pilots.clone(),
        received.nrows(),
        prior_variances,
        rho,
        resolution,
        clip_prob,
    )?
    .estimate(received)
}

pub fn genie_estimate(h: &CMat) -> EstimateReport {
    EstimateReport {
        h_hat: h.clone(),
        mse_per_coeff: 0.0,
        method: EstimationMethod::Genie,
        regularized: false,
    }
}

/// Mean squared error per coefficient, `||Ĥ - H||_F^2 / (B U)`.
pub fn empirical_mse(h_hat: &CMat, h: &CMat) -> f64 {
    (h_hat - h).norm_squared() / (h.nrows() * h.ncols()) as f64
}

/// Closed-form MSE of the 1-bit Bussgang MMSE estimator for one user.
pub fn mse_1bit_closed_form(n_p: usize, rho: f64) -> Result<f64> {
    if n_p == 0 {
        return Err(Error::domain("need at least one pilot symbol"));
    }
    if !(rho > 0.0) {
        return Err(Error::domain(format!("SNR must be positive, got {rho}")));
    }
    let x = snr_ratio(rho);
    let n = n_p as f64;
    Ok(1.0 - x * n / (FRAC_PI_2 + (n - 1.0) * x.asin()))
}

/// Limit of [`mse_1bit_closed_form`] as the pilot length grows without bound.
pub fn mse_1bit_floor(rho: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::domain(format!("SNR must be positive, got {rho}")));
    }
    let x = snr_ratio(rho);
    Ok(1.0 - x / x.asin())
}

/// `rho / (1 + rho)`, continuous at infinity.
fn snr_ratio(rho: f64) -> f64 {
    if rho.is_infinite() {
        1.0
    } else {
        rho / (1.0 + rho)
    }
}

/// MSE of [`mse_1bit_closed_form`] across an SNR grid for one pilot length.
#[derive(Debug, Clone)]
pub struct MseSnrCurve {
    pub n_p: usize,
    pub rho: Vec<f64>,
    pub mse: Vec<f64>,
    /// Index into `rho` of the smallest MSE.
    pub argmin: usize,
}

impl MseSnrCurve {
    pub fn best_rho(&self) -> f64 {
        self.rho[self.argmin]
    }
}

pub fn mse_vs_snr_curve(pilot_lens: &[usize], rho_grid: &[f64]) -> Result<Vec<MseSnrCurve>> {
    if rho_grid.is_empty() {
        return Err(Error::domain("empty SNR grid"));
    }
    pilot_lens
        .iter()
        .map(|&n_p| {
            let mse = rho_grid
                .iter()
                .map(|&r| mse_1bit_closed_form(n_p, r))
                .collect::<Result<Vec<_>>>()?;
            let argmin = mse
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.total_cmp(b.1))
                .map(|(i, _)| i)
                .unwrap_or(0);
            Ok(MseSnrCurve {
                n_p,
                rho: rho_grid.to_vec(),
                mse,
                argmin,
            })
        })
        .collect()
}
