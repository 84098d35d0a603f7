//! Built-in acceptance checks. Each check reports a pass flag and the
//! quantity it measured; [`run`] executes a selection of them in order.

use std::fmt;

use num_complex::Complex64;
use rand::Rng;

use crate::channel::{complex_normal, rayleigh_channel};
use crate::config::{CsiMode, CsiSelection, Snr, SystemConfig};
use crate::engine::{fronthaul_sweep, substream, sweep_csv, SweepRow};
use crate::estimation::{mse_1bit_closed_form, mse_1bit_floor};
use crate::linalg::{c, CMat};
use crate::mse_curve::{empirical_estimation_mse, MseExperiment};
use crate::quantizer::{arcsine_output_cov, QuantizerSpec, Resolution};
use crate::uplink::{rate_from_sindr, uplink_gmi, CombinerKind, GmiTerms, LinearizedUplink};
use crate::{Error, Result};

const STREAM_VALIDATION: u64 = 4 << 32;
const CLIP: f64 = 1e-4;

pub const CHECK_IDS: [u8; 11] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11];

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub measured: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(
            f,
            "[{status}] {:>2} {}: {}",
            self.id, self.name, self.measured
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub checks: Vec<CheckResult>,
}

impl Report {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for check in &self.checks {
            writeln!(f, "{check}")?;
        }
        let passed = self.checks.iter().filter(|c| c.passed).count();
        writeln!(f, "{passed}/{} checks passed", self.checks.len())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidateOptions {
    pub seed: u64,
    /// Drops per resolution in the fronthaul sweeps.
    pub sweep_trials: usize,
    /// Factor applied to the analytic Bussgang gain before it is compared
    /// with simulation; anything but 1 should make that check fail.
    pub gain_perturbation: f64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        Self {
            seed: 1,
            sweep_trials: 500,
            gain_perturbation: 1.0,
        }
    }
}

/// Runs the checks listed in `ids`, in that order.
pub fn run(options: &ValidateOptions, ids: &[u8]) -> Result<Report> {
    let mut sweeps = SweepCache::default();
    let checks = ids
        .iter()
        .map(|&id| match id {
            1 => check_closed_form_mse(options.seed),
            2 => check_mse_floor(),
            3 => check_mse_saturation(options.seed),
            4 => check_gmi_degeneration(options.seed),
            5 => check_s_optimality(options.seed),
            6 => check_bussgang_gain(options.seed, options.gain_perturbation),
            7 => check_arcsine_law(options.seed),
            8 => check_fronthaul_tradeoff(options, &mut sweeps),
            9 => check_uplink_bottleneck(options, &mut sweeps),
            10 => check_determinism(options.seed),
            11 => check_quantizer_properties(),
            other => Err(Error::domain(format!("no check with id {other}"))),
        })
        .collect::<Result<_>>()?;
    Ok(Report { checks })
}

fn result(id: u8, name: &'static str, passed: bool, measured: String) -> Result<CheckResult> {
    Ok(CheckResult {
        id,
        name,
        passed,
        measured,
    })
}

/// Single-user 1-bit estimator MSE against the closed form.
pub fn check_closed_form_mse(seed: u64) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    let mut at = (0, 0.0);
    for (k, &n_p) in [1usize, 4, 10, 100].iter().enumerate() {
        for (j, &rho) in [0.1, 1.0, 10.0].iter().enumerate() {
            let exp = MseExperiment {
                num_antennas: 1,
                num_users: 1,
                n_p,
                rho,
                resolution: Resolution::Bits(1),
                clip_prob: CLIP,
                realizations: 100_000,
            };
            let emp = empirical_estimation_mse(&exp, seed, STREAM_VALIDATION | (k * 4 + j) as u64)?;
            let rel = (emp / mse_1bit_closed_form(n_p, rho)? - 1.0).abs();
            if rel > worst {
                worst = rel;
                at = (n_p, rho);
            }
        }
    }
    result(
        1,
        "closed-form 1-bit estimation MSE",
        worst < 0.02,
        format!(
            "max relative error {worst:.5} at n_p={}, rho={} (limit 0.02)",
            at.0, at.1
        ),
    )
}

/// Large-pilot limit of the 1-bit MSE.
pub fn check_mse_floor() -> Result<CheckResult> {
    let floor10 = mse_1bit_floor(10.0)?;
    // Independent evaluation: x = 10/11, arcsin via atan.
    let x: f64 = 10.0 / 11.0;
    let independent = 1.0 - x / (x / (1.0 - x * x).sqrt()).atan();
    let mut gap: f64 = 0.0;
    for rho in [0.1, 1.0, 10.0] {
        gap = gap.max((mse_1bit_closed_form(1_000_000, rho)? - mse_1bit_floor(rho)?).abs());
    }
    let passed =
        (floor10 - 0.2034).abs() < 1e-3 && (floor10 - independent).abs() < 1e-12 && gap < 1e-4;
    result(
        2,
        "1-bit MSE floor",
        passed,
        format!("floor(rho=10)={floor10:.6}, max |MSE(n_p=1e6) - floor|={gap:.3e}"),
    )
}

/// 1-bit MSE saturates in the pilot length while the ideal one keeps
/// falling.
pub fn check_mse_saturation(seed: u64) -> Result<CheckResult> {
    let rho = Snr::from_db(10.0).linear();
    let mse = |resolution, n_p, stream| {
        let exp = MseExperiment {
            num_antennas: 100,
            num_users: 10,
            n_p,
            rho,
            resolution,
            clip_prob: CLIP,
            realizations: 200,
        };
        empirical_estimation_mse(&exp, seed, STREAM_VALIDATION | 0x100 | stream)
    };
    // The same stream for both pilot lengths shares the channel draws.
    let one_bit = (
        mse(Resolution::Bits(1), 1000, 0)?,
        mse(Resolution::Bits(1), 10_000, 0)?,
    );
    let ideal = (
        mse(Resolution::Infinite, 1000, 1)?,
        mse(Resolution::Infinite, 10_000, 1)?,
    );
    let change = (one_bit.1 / one_bit.0 - 1.0).abs();
    let drop = 1.0 - ideal.1 / ideal.0;
    result(
        3,
        "1-bit MSE saturation in pilot length",
        change < 0.01 && drop > 0.5,
        format!(
            "1-bit {:.5} -> {:.5} (change {change:.4}, limit 0.01); ideal {:.3e} -> {:.3e} (drop {drop:.3}, need > 0.5)",
            one_bit.0, one_bit.1, ideal.0, ideal.1
        ),
    )
}

/// With perfect CSI the GMI equals `log2(1 + SINDR)`.
pub fn check_gmi_degeneration(seed: u64) -> Result<CheckResult> {
    let resolutions = [
        Resolution::Bits(1),
        Resolution::Bits(2),
        Resolution::Bits(3),
        Resolution::Infinite,
    ];
    let mut rng = substream(seed, STREAM_VALIDATION | 0x200, 0);
    let mut worst: f64 = 0.0;
    for i in 0..200usize {
        let resolution = resolutions[i % 4];
        let b = [8, 32][(i / 4) % 2];
        let u = [1, 4][(i / 8) % 2];
        let combiner = if (i / 16) % 2 == 0 {
            CombinerKind::Mr
        } else {
            CombinerKind::DaMmse
        };
        let rho = 10f64.powf(rng.random_range(-1.0..2.0));
        let h = rayleigh_channel(&mut rng, b, u)?.h;
        let lin = LinearizedUplink::new(&h, &h, resolution, rho, CLIP, combiner)?;
        let sindr = lin.sindr(&h, rho)?;
        for (terms, gamma) in lin.gmi_terms(&h, &h, rho)?.iter().zip(sindr) {
            let want = rate_from_sindr(gamma);
            worst = worst.max((uplink_gmi(terms) - want).abs() / want);
        }
    }
    result(
        4,
        "GMI equals log2(1+SINDR) under perfect CSI",
        worst < 1e-9,
        format!("max relative deviation {worst:.3e} over 200 instances (limit 1e-9)"),
    )
}

/// Largest GMI objective over a log grid in `s`, refined by golden-section
/// search around the best grid point. Returns bits.
fn grid_max_gmi(terms: &GmiTerms) -> f64 {
    let f = |s: f64| terms.objective(s);
    let scale = 1.0 / terms.a;
    let n = 4000;
    let grid: Vec<f64> = (0..=n)
        .map(|k| scale * 10f64.powf(-8.0 + 16.0 * k as f64 / n as f64))
        .collect();
    let (best, _) =
        grid.iter()
            .enumerate()
            .map(|(k, &s)| (k, f(s)))
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, x| if x.1 > acc.1 { x } else { acc },
            );
    let (mut lo, mut hi) = (grid[best.saturating_sub(1)], grid[(best + 1).min(n)]);
    let phi = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let m1 = hi - phi * (hi - lo);
        let m2 = lo + phi * (hi - lo);
        if f(m1) < f(m2) {
            lo = m1;
        } else {
            hi = m2;
        }
    }
    let peak = f(0.5 * (lo + hi)).max(f(grid[best])).max(0.0);
    peak / std::f64::consts::LN_2
}

/// Closed-form `s` attains the numerical maximum of the GMI objective.
pub fn check_s_optimality(seed: u64) -> Result<CheckResult> {
    let mut rng = substream(seed, STREAM_VALIDATION | 0x300, 0);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    while count < 100 {
        let g = complex_normal(&mut rng);
        // Estimate error of varying size.
        let err = complex_normal(&mut rng) * rng.random_range(0.05..1.0);
        let g_hat = g + err;
        let sigma2 = 10f64.powf(rng.random_range(-1.5..0.5));
        let rho = 10f64.powf(rng.random_range(-1.0..2.0));
        let terms = GmiTerms::new(g, g_hat, sigma2, rho);
        if terms.s.is_none() {
            continue;
        }
        count += 1;
        worst = worst.max((uplink_gmi(&terms) - grid_max_gmi(&terms)).abs());
    }
    result(
        5,
        "closed-form GMI parameter is optimal",
        worst < 1e-6,
        format!("max |GMI(s*) - grid max| = {worst:.3e} bit over 100 instances (limit 1e-6)"),
    )
}

/// Analytic Bussgang gain against the sample LMMSE coefficient.
pub fn check_bussgang_gain(seed: u64, perturbation: f64) -> Result<CheckResult> {
    let mut worst: f64 = 0.0;
    for q in 1..=4u32 {
        let spec = QuantizerSpec::calibrated(q, 1.0, CLIP)?;
        let analytic = spec.gain_for_variance(1.0)? * perturbation;
        let mut rng = substream(seed, STREAM_VALIDATION | 0x400, q as u64);
        let (mut cross, mut power) = (0.0, 0.0);
        for _ in 0..1_000_000 {
            let y = complex_normal(&mut rng);
            cross += (spec.quantize_complex_finite(y) * y.conj()).re;
            power += y.norm_sqr();
        }
        worst = worst.max((analytic / (cross / power) - 1.0).abs());
    }
    let high = QuantizerSpec::calibrated(12, 1.0, CLIP)?.gain_for_variance(1.0)? * perturbation;
    let high_gap = (high - 1.0).abs();
    result(
        6,
        "Bussgang gain matches simulation",
        worst < 0.01 && high_gap < 1e-3,
        format!("Q=1..4 max relative error {worst:.5} (limit 0.01); |g(Q=12) - 1| = {high_gap:.3e} (limit 1e-3)"),
    )
}

/// 1-bit output covariance of a correlated pair against the arcsine law.
pub fn check_arcsine_law(seed: u64) -> Result<CheckResult> {
    let r = c(0.3, 0.4);
    let spec = QuantizerSpec::calibrated(1, 1.0, CLIP)?;
    let cov = CMat::from_row_slice(2, 2, &[c(1.0, 0.0), r, r.conj(), c(1.0, 0.0)]);
    let analytic = arcsine_output_cov(&cov, &spec)?;

    let mut rng = substream(seed, STREAM_VALIDATION | 0x500, 0);
    let tail = (1.0 - r.norm_sqr()).sqrt();
    let n = 1_000_000;
    let mut acc = [Complex64::new(0.0, 0.0); 4];
    for _ in 0..n {
        let z1 = complex_normal(&mut rng);
        let z2 = complex_normal(&mut rng);
        let y = [z1, r.conj() * z1 + z2 * tail];
        let out = y.map(|v| spec.quantize_complex_finite(v));
        for i in 0..2 {
            for j in 0..2 {
                acc[2 * i + j] += out[i] * out[j].conj();
            }
        }
    }
    let mut worst: f64 = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            let emp = acc[2 * i + j] / n as f64;
            let want = analytic[(i, j)];
            worst = worst.max((emp - want).norm() / want.norm());
        }
    }
    result(
        7,
        "arcsine law for 1-bit output covariance",
        worst < 0.02,
        format!("max relative entry error {worst:.5} (limit 0.02)"),
    )
}

#[derive(Default)]
struct SweepCache {
    entries: Vec<((u64, u64, usize), Vec<SweepRow>)>,
}

impl SweepCache {
    fn get(
        &mut self,
        rho_ul_db: f64,
        rho_dl_db: f64,
        seed: u64,
        trials: usize,
    ) -> Result<&[SweepRow]> {
        let key = (rho_ul_db.to_bits(), rho_dl_db.to_bits(), trials);
        if let Some(pos) = self.entries.iter().position(|(k, _)| *k == key) {
            return Ok(&self.entries[pos].1);
        }
        let cfg = SystemConfig {
            rho_ul_db: Snr::from_db(rho_ul_db),
            rho_dl_db: Snr::from_db(rho_dl_db),
            seed,
            trials,
            csi: CsiSelection::Both,
            ..SystemConfig::default()
        };
        let rows = fronthaul_sweep(&cfg)?;
        self.entries.push((key, rows));
        Ok(&self.entries.last().expect("just pushed").1)
    }
}

fn rows_for(rows: &[SweepRow], mode: CsiMode) -> Vec<&SweepRow> {
    rows.iter().filter(|r| r.csi_mode == mode).collect()
}

fn argmax_q(rows: &[&SweepRow], rate: impl Fn(&SweepRow) -> f64) -> u32 {
    rows.iter()
        .fold((0, f64::NEG_INFINITY), |acc, r| {
            if rate(r) > acc.1 {
                (r.q, rate(r))
            } else {
                acc
            }
        })
        .0
}

/// Uplink outage rate against resolution at low and high SNR.
fn check_fronthaul_tradeoff(
    options: &ValidateOptions,
    sweeps: &mut SweepCache,
) -> Result<CheckResult> {
    let (seed, trials) = (options.seed, options.sweep_trials);
    let low = sweeps.get(-10.0, 15.0, seed, trials)?.to_vec();
    let high = sweeps.get(10.0, 15.0, seed, trials)?.to_vec();
    let ul = |rows: &[SweepRow], mode, q| {
        rows.iter()
            .find(|r| r.csi_mode == mode && r.q == q)
            .map(|r| r.ul_rate)
            .ok_or_else(|| Error::domain(format!("sweep lacks Q={q}")))
    };

    let mut notes = Vec::new();
    let mut passed = true;
    for mode in [CsiMode::Perfect, CsiMode::Estimated] {
        let (r1, r4) = (ul(&low, mode, 1)?, ul(&low, mode, 4)?);
        passed &= r1 > r4;
        notes.push(format!(
            "(a) {}: R(Q=1)={r1:.4} vs R(Q=4)={r4:.4}",
            mode.as_str()
        ));
    }
    for mode in [CsiMode::Perfect, CsiMode::Estimated] {
        let best = argmax_q(&rows_for(&high, mode), |r| r.ul_rate);
        passed &= (1..=3).contains(&best);
        notes.push(format!("(b) {}: argmax Q={best}", mode.as_str()));
    }
    for (label, rows) in [("-10 dB", &low), ("+10 dB", &high)] {
        let (p, e) = (
            ul(rows, CsiMode::Perfect, 8)?,
            ul(rows, CsiMode::Estimated, 8)?,
        );
        let gap = (p - e).abs() / p;
        passed &= gap < 0.05;
        notes.push(format!("(c) {label}: Q=8 CSI gap {gap:.4}"));
    }
    result(8, "uplink resolution trade-off", passed, notes.join("; "))
}

/// The uplink limits the bidirectional rate.
fn check_uplink_bottleneck(
    options: &ValidateOptions,
    sweeps: &mut SweepCache,
) -> Result<CheckResult> {
    let rows = sweeps.get(5.0, 15.0, options.seed, options.sweep_trials)?;
    let mut worst: f64 = 0.0;
    let mut passed = true;
    let mut notes = Vec::new();
    for mode in [CsiMode::Perfect, CsiMode::Estimated] {
        let mode_rows = rows_for(rows, mode);
        for r in &mode_rows {
            worst = worst.max((r.bidir_rate - r.ul_rate).abs() / r.ul_rate);
        }
        let best = argmax_q(&mode_rows, |r| r.bidir_rate);
        passed &= (1..=3).contains(&best);
        notes.push(format!("{} argmax Q={best}", mode.as_str()));
    }
    passed &= worst <= 0.02;
    result(
        9,
        "uplink is the bidirectional bottleneck",
        passed,
        format!(
            "max |bidir - UL| / UL = {worst:.4} (limit 0.02); {}",
            notes.join(", ")
        ),
    )
}

/// Sweep output does not depend on the thread count.
pub fn check_determinism(seed: u64) -> Result<CheckResult> {
    let cfg = SystemConfig {
        seed,
        trials: 16,
        ..SystemConfig::default()
    };
    let run_with = |threads| -> Result<String> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::domain(e.to_string()))?;
        pool.install(|| fronthaul_sweep(&cfg))
            .map(|rows| sweep_csv(&rows))
    };
    let one = run_with(1)?;
    let four = run_with(4)?;
    result(
        10,
        "sweep output independent of parallelism",
        one == four,
        format!(
            "1 vs 4 threads: {} bytes, {}",
            one.len(),
            if one == four {
                "identical"
            } else {
                "different"
            }
        ),
    )
}

/// Alphabet closure, monotonicity, odd symmetry and the granular error
/// bound on a dense grid.
pub fn check_quantizer_properties() -> Result<CheckResult> {
    let mut failures = Vec::new();
    for q in 1..=8u32 {
        let spec = QuantizerSpec::calibrated(q, 1.0, CLIP)?;
        let step = spec.step();
        let edge = 0.5 * step * spec.levels() as f64;
        let alphabet = spec.alphabet();
        let n = 10_000;
        // Irrational offset keeps grid points off the cell edges.
        let grid: Vec<f64> = (0..n)
            .map(|k| {
                1.5 * edge
                    * (2.0 * (k as f64 + 0.5 * std::f64::consts::FRAC_1_SQRT_2) / n as f64 - 1.0)
            })
            .collect();
        let out: Vec<f64> = grid
            .iter()
            .map(|&r| spec.quantize(r))
            .collect::<Result<_>>()?;
        if !out.iter().all(|y| alphabet.contains(y)) {
            failures.push(format!("Q={q} closure"));
        }
        if !out.windows(2).all(|w| w[0] <= w[1]) {
            failures.push(format!("Q={q} monotonicity"));
        }
        let odd = grid
            .iter()
            .zip(&out)
            .filter(|(r, _)| (*r / step).fract() != 0.0)
            .all(|(&r, &y)| spec.quantize(-r).map(|m| m == -y).unwrap_or(false));
        if !odd {
            failures.push(format!("Q={q} odd symmetry"));
        }
        let bounded = grid
            .iter()
            .zip(&out)
            .filter(|(r, _)| r.abs() < edge)
            .all(|(r, y)| (r - y).abs() <= 0.5 * step * (1.0 + 1e-12));
        if !bounded {
            failures.push(format!("Q={q} granular error"));
        }
    }
    let measured = if failures.is_empty() {
        "closure, monotonicity, odd symmetry and |r - Q(r)| <= step/2 hold on 10^4 points for Q=1..8".to_string()
    } else {
        format!("violations: {}", failures.join(", "))
    };
    result(11, "quantizer properties", failures.is_empty(), measured)
}
