//! Channel-estimation MSE tables over pilot length and SNR, on i.i.d.
//! Rayleigh channels with unit-variance entries.

use rayon::prelude::*;

use crate::channel::rayleigh_channel;
use crate::config::{Snr, SystemConfig};
use crate::engine::substream;
use crate::estimation::{dft_pilots, empirical_mse, mse_1bit_closed_form, BussgangMmse};
use crate::quantizer::Resolution;
use crate::Result;

const STREAM_MSE: u64 = 3 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MseMode {
    /// MSE against pilot length at a fixed SNR.
    Pilots,
    /// 1-bit, single-user MSE against SNR.
    Snr,
}

impl MseMode {
    pub fn as_str(self) -> &'static str {
        match self {
            MseMode::Pilots => "pilots",
            MseMode::Snr => "snr",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MseRow {
    pub mode: MseMode,
    pub resolution: Resolution,
    pub n_p: usize,
    pub rho_db: f64,
    /// Closed form, available for one 1-bit user only.
    pub analytic: Option<f64>,
    pub empirical: f64,
}

pub const MSE_HEADER: &str = "mode,q,n_p,rho_db,mse_analytic,mse_empirical";

impl MseRow {
    pub fn to_csv(&self) -> String {
        let analytic = self.analytic.map(|v| v.to_string()).unwrap_or_default();
        format!(
            "{},{},{},{},{},{}",
            self.mode.as_str(),
            self.resolution,
            self.n_p,
            self.rho_db,
            analytic,
            self.empirical
        )
    }
}

pub fn mse_csv(rows: &[MseRow]) -> String {
    let mut out = String::from(MSE_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv());
        out.push('\n');
    }
    out
}

/// Parameters of one empirical MSE measurement.
#[derive(Debug, Clone, Copy)]
pub struct MseExperiment {
    pub num_antennas: usize,
    pub num_users: usize,
    pub n_p: usize,
    pub rho: f64,
    pub resolution: Resolution,
    pub clip_prob: f64,
    pub realizations: usize,
}

/// Average per-coefficient squared error of the Bussgang MMSE estimate over
/// independent channel and noise draws. `stream` selects the random
/// substream so that distinct experiments are independent.
pub fn empirical_estimation_mse(exp: &MseExperiment, seed: u64, stream: u64) -> Result<f64> {
    let estimator = BussgangMmse::new(
        dft_pilots(exp.n_p, exp.num_users)?,
        exp.num_antennas,
        &vec![1.0; exp.num_users],
        exp.rho,
        exp.resolution,
        exp.clip_prob,
    )?;
    let per_draw: Vec<f64> = (0..exp.realizations as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, STREAM_MSE | stream, i);
            let h = rayleigh_channel(&mut rng, exp.num_antennas, exp.num_users)?.h;
            let report = estimator.estimate(&estimator.observe(&mut rng, &h)?)?;
            Ok(empirical_mse(&report.h_hat, &h))
        })
        .collect::<Result<_>>()?;
    Ok(per_draw.iter().sum::<f64>() / per_draw.len() as f64)
}

/// Both MSE tables described by the `mse_*` settings of `cfg`.
pub fn mse_curve(cfg: &SystemConfig) -> Result<Vec<MseRow>> {
    cfg.validate()?;
    let mut specs = Vec::new();
    for &resolution in &cfg.mse_resolutions {
        for &n_p in &cfg.mse_pilot_lens {
            specs.push((
                MseMode::Pilots,
                resolution,
                n_p,
                cfg.mse_rho_db,
                cfg.mse_antennas,
                cfg.mse_users,
            ));
        }
    }
    for &n_p in &cfg.mse_snr_pilot_lens {
        for &db in &cfg.mse_snr_grid_db {
            specs.push((
                MseMode::Snr,
                Resolution::Bits(1),
                n_p,
                Snr::from_db(db),
                cfg.mse_snr_antennas,
                1,
            ));
        }
    }

    specs
        .into_iter()
        .enumerate()
        .map(
            |(row, (mode, resolution, n_p, snr, num_antennas, num_users))| {
                let exp = MseExperiment {
                    num_antennas,
                    num_users,
                    n_p,
                    rho: snr.linear(),
                    resolution,
                    clip_prob: cfg.clip_prob,
                    realizations: cfg.mse_realizations,
                };
                let analytic = if resolution == Resolution::Bits(1) && num_users == 1 {
                    Some(mse_1bit_closed_form(n_p, snr.linear())?)
                } else {
                    None
                };
                Ok(MseRow {
                    mode,
                    resolution,
                    n_p,
                    rho_db: snr.db(),
                    analytic,
                    empirical: empirical_estimation_mse(&exp, cfg.seed, row as u64)?,
                })
            },
        )
        .collect()
}
