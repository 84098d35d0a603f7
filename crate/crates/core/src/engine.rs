//! Monte Carlo driver: user drops, per-trial rates and outage statistics for
//! the fronthaul sweep.
//!
//! Randomness is split into ChaCha8 substreams keyed by `(seed, purpose,
//! index)`. User drops depend only on the trial index, so every resolution
//! sees the same drops; pilot noise additionally depends on the resolution.
//! Results are therefore identical for any thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{free_space_pathloss, los_channel, sample_drop, ArrayGeometry};
use crate::config::{CsiMode, SystemConfig};
use crate::downlink::downlink_trial;
use crate::estimation::{dft_pilots, BussgangMmse};
use crate::quantizer::Resolution;
use crate::uplink::uplink_trial;
use crate::{Error, Result};

const STREAM_DROP: u64 = 1;
const STREAM_PILOT: u64 = 2;

/// Deterministic generator for substream `(purpose, index)` of `seed`.
pub fn substream(seed: u64, purpose: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&purpose.to_le_bytes());
    key[16..24].copy_from_slice(&index.to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

fn resolution_tag(resolution: Resolution) -> u64 {
    match resolution {
        Resolution::Bits(q) => u64::from(q),
        Resolution::Infinite => 0xff,
    }
}

/// Antennas supported by the fronthaul at resolution `q`: `floor(R_fh / 2q)`.
pub fn antennas_for_resolution(fronthaul_rate: u32, q: u32) -> Result<usize> {
    if q == 0 {
        return Err(Error::domain("resolution must be at least one bit"));
    }
    Ok((fronthaul_rate / (2 * q)) as usize)
}

/// Per-user rates of one user drop.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: u64,
    pub uplink: Vec<f64>,
    pub downlink: Vec<f64>,
}

impl TrialRecord {
    /// Per-user `min(uplink, downlink)`.
    pub fn bidirectional(&self) -> impl Iterator<Item = f64> + '_ {
        self.uplink
            .iter()
            .zip(&self.downlink)
            .map(|(u, d)| u.min(*d))
    }
}

/// Simulates drop `trial` with `num_antennas` converters of the given
/// resolution, under the geometry and SNRs of `cfg`.
pub fn run_trial(
    cfg: &SystemConfig,
    resolution: Resolution,
    num_antennas: usize,
    csi: CsiMode,
    trial: u64,
) -> Result<TrialRecord> {
    let region = cfg.region();
    let geometry = ArrayGeometry::new(num_antennas, cfg.aperture, cfg.wavelength)?;
    let mut drop_rng = substream(cfg.seed, STREAM_DROP, trial);
    let drop = sample_drop(&mut drop_rng, cfg.num_users, &region, cfg.wavelength)?;
    let reference = free_space_pathloss(region.average_distance()?, cfg.wavelength)?;
    let h = los_channel(&geometry, &drop).normalized_to(reference);

    let rho_ul = cfg.rho_ul_db.linear();
    let h_hat = match csi {
        CsiMode::Perfect => h.clone(),
        CsiMode::Estimated => {
            let estimator = BussgangMmse::new(
                dft_pilots(cfg.pilot_len, cfg.num_users)?,
                num_antennas,
                &drop.snr_scale,
                rho_ul,
                resolution,
                cfg.clip_prob,
            )?;
            let mut pilot_rng = substream(
                cfg.seed,
                STREAM_PILOT << 8 | resolution_tag(resolution),
                trial,
            );
            estimator
                .estimate(&estimator.observe(&mut pilot_rng, &h)?)?
                .h_hat
        }
    };

    let uplink = uplink_trial(&h, &h_hat, resolution, rho_ul, cfg.clip_prob, cfg.combiner)?;
    let downlink = downlink_trial(
        &h,
        &h_hat,
        resolution,
        cfg.rho_dl_db.linear(),
        cfg.clip_prob,
        cfg.precoder,
    )?;
    Ok(TrialRecord {
        trial,
        uplink,
        downlink,
    })
}

/// Largest rate `r` such that at most a fraction `level` of the samples lie
/// strictly below `r`: the `floor(level * n)`-th smallest sample.
pub fn outage_rate(samples: &[f64], level: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::domain("outage rate of an empty sample"));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::domain(format!(
            "outage level must lie in (0, 1), got {level}"
        )));
    }
    if samples.iter().any(|x| x.is_nan()) {
        return Err(Error::domain("NaN rate sample"));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    // Guard against ε·n landing a hair below an integer.
    let k = ((level * n as f64) * (1.0 + 1e-12)).floor() as usize;
    Ok(sorted[k.min(n - 1)])
}

/// Outage rate of per-user `min(uplink, downlink)`, pooled over drops.
pub fn bidirectional_outage_rate(records: &[TrialRecord], level: f64) -> Result<f64> {
    let pooled: Vec<f64> = records
        .iter()
        .flat_map(TrialRecord::bidirectional)
        .collect();
    outage_rate(&pooled, level)
}

/// One line of the sweep table.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub q: u32,
    pub b: usize,
    pub csi_mode: CsiMode,
    pub rho_ul_db: f64,
    pub rho_dl_db: f64,
    pub ul_rate: f64,
    pub dl_rate: f64,
    pub bidir_rate: f64,
    pub trials: usize,
    pub seed: u64,
}

pub const SWEEP_HEADER: &str =
    "q,b,csi_mode,rho_ul_db,rho_dl_db,ul_rate,dl_rate,bidir_rate,trials,seed";

impl SweepRow {
    /// CSV line; floats use the shortest round-tripping representation.
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.q,
            self.b,
            self.csi_mode.as_str(),
            self.rho_ul_db,
            self.rho_dl_db,
            self.ul_rate,
            self.dl_rate,
            self.bidir_rate,
            self.trials,
            self.seed
        )
    }

    pub fn from_csv(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.trim_end().split(',').collect();
        if fields.len() != 10 {
            return Err(Error::domain(format!(
                "expected 10 fields, got {}",
                fields.len()
            )));
        }
        fn num<T: std::str::FromStr>(s: &str) -> Result<T> {
            s.parse()
                .map_err(|_| Error::domain(format!("bad number `{s}`")))
        }
        Ok(Self {
            q: num(fields[0])?,
            b: num(fields[1])?,
            csi_mode: fields[2].parse()?,
            rho_ul_db: num(fields[3])?,
            rho_dl_db: num(fields[4])?,
            ul_rate: num(fields[5])?,
            dl_rate: num(fields[6])?,
            bidir_rate: num(fields[7])?,
            trials: num(fields[8])?,
            seed: num(fields[9])?,
        })
    }
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for row in rows {
        out.push_str(&row.to_csv());
        out.push('\n');
    }
    out
}

/// Outage rates for every configured CSI mode and resolution, in that
/// order. Trials run in parallel on the current rayon pool.
pub fn fronthaul_sweep(cfg: &SystemConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let mut jobs = Vec::new();
    for &csi in cfg.csi.modes() {
        for &q in &cfg.resolutions {
            let b = antennas_for_resolution(cfg.fronthaul_rate, q)?;
            jobs.push((csi, q, b));
        }
    }
    let trials = cfg.trials as u64;
    let tasks: Vec<_> = jobs
        .iter()
        .flat_map(|&(csi, q, b)| (0..trials).map(move |t| (csi, q, b, t)))
        .collect();
    let records: Vec<TrialRecord> = tasks
        .into_par_iter()
        .map(|(csi, q, b, t)| run_trial(cfg, Resolution::Bits(q), b, csi, t))
        .collect::<Result<_>>()?;

    jobs.iter()
        .zip(records.chunks(cfg.trials))
        .map(|(&(csi_mode, q, b), chunk)| {
            let ul: Vec<f64> = chunk
                .iter()
                .flat_map(|r| r.uplink.iter().copied())
                .collect();
            let dl: Vec<f64> = chunk
                .iter()
                .flat_map(|r| r.downlink.iter().copied())
                .collect();
            Ok(SweepRow {
                q,
                b,
                csi_mode,
                rho_ul_db: cfg.rho_ul_db.db(),
                rho_dl_db: cfg.rho_dl_db.db(),
                ul_rate: outage_rate(&ul, cfg.outage_level)?,
                dl_rate: outage_rate(&dl, cfg.outage_level)?,
                bidir_rate: bidirectional_outage_rate(chunk, cfg.outage_level)?,
                trials: cfg.trials,
                seed: cfg.seed,
            })
        })
        .collect()
}
