use fhmimo::channel::{
    free_space_pathloss, los_channel, rayleigh_channel, sample_drop, ArrayGeometry, CellRegion,
};
use fhmimo::config::{CsiSelection, SystemConfig};
use fhmimo::downlink::{downlink_linearize, downlink_sindr, mr_precoder};
use fhmimo::engine::{
    antennas_for_resolution, fronthaul_sweep, outage_rate, substream, SweepRow, TrialRecord,
};
use fhmimo::estimation::mse_1bit_closed_form;
use fhmimo::linalg::{column, hermitian_eigenvalues, norm_sqr, CMat};
use fhmimo::quantizer::{distortion_cov, Converter, QuantizerSpec, Resolution};
use fhmimo::uplink::{effective_gains, uplink_gmi, uplink_sindr, CombinerKind, LinearizedUplink};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::Rng;

const CLIP: f64 = 1e-4;

fn resolution(k: u32) -> Resolution {
    if k == 0 {
        Resolution::Infinite
    } else {
        Resolution::Bits(k)
    }
}

fn channel(seed: u64, b: usize, u: usize) -> CMat {
    rayleigh_channel(&mut substream(seed, 0, 0), b, u)
        .unwrap()
        .h
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn quantizer_output_is_monotone_and_in_alphabet(bits in 1u32..=8, a in -8.0f64..8.0, b in -8.0f64..8.0) {
        let spec = QuantizerSpec::calibrated(bits, 1.0, CLIP).unwrap();
        let alphabet = spec.alphabet();
        let (qa, qb) = (spec.quantize(a).unwrap(), spec.quantize(b).unwrap());
        prop_assert!(alphabet.contains(&qa) && alphabet.contains(&qb));
        if a <= b {
            prop_assert!(qa <= qb);
        }
        let edge = 0.5 * spec.step() * spec.levels() as f64;
        if a.abs() < edge {
            prop_assert!((qa - a).abs() <= 0.5 * spec.step() * (1.0 + 1e-12));
        }
        if (a / spec.step()).fract() != 0.0 {
            prop_assert_eq!(spec.quantize(-a).unwrap(), -qa);
        }
    }

    #[test]
    fn distortion_covariance_is_psd(seed in any::<u64>(), bits in 1u32..=4, b in 2usize..6, u in 1usize..4, rho in 0.1f64..30.0) {
        let h = channel(seed, b, u);
        let lin = LinearizedUplink::new(&h, &h, Resolution::Bits(bits), rho, CLIP, CombinerKind::Mr).unwrap();
        let model = &lin.distortion;
        prop_assert!(hermitian_eigenvalues(&model.error_cov)[0] > -1e-10);
        prop_assert!(model.gain.iter().all(|g| *g > 0.0 && g.is_finite()));
    }

    #[test]
    fn sindr_and_gmi_are_scale_invariant(seed in any::<u64>(), k in 0u32..4, re in -3.0f64..3.0, im in -3.0f64..3.0, rho in 0.05f64..50.0) {
        prop_assume!(re * re + im * im > 1e-3);
        let alpha = Complex64::new(re, im);
        let h = channel(seed, 6, 3);
        let h_hat = &h + channel(seed ^ 1, 6, 3) * Complex64::new(0.3, 0.0);
        let lin = LinearizedUplink::new(&h, &h_hat, resolution(k), rho, CLIP, CombinerKind::Mr).unwrap();
        let scaled = &lin.combiner * alpha;
        let s1 = uplink_sindr(&h, &lin.combiner, &lin.agc, &lin.distortion, rho).unwrap();
        let s2 = uplink_sindr(&h, &scaled, &lin.agc, &lin.distortion, rho).unwrap();
        for u in 0..3 {
            prop_assert!((s1[u] / s2[u] - 1.0).abs() < 1e-9);
            prop_assert!(s1[u] > 0.0 && s1[u].is_finite());
            let g1 = uplink_gmi(&effective_gains(&h, &h_hat, &lin.combiner, &lin.agc, &lin.distortion, rho, u).unwrap());
            let g2 = uplink_gmi(&effective_gains(&h, &h_hat, &scaled, &lin.agc, &lin.distortion, rho, u).unwrap());
            prop_assert!((g1 - g2).abs() <= 1e-9 * g1.max(1e-12) + 1e-12);
        }
    }

    #[test]
    fn mismatch_never_beats_matched_decoding(seed in any::<u64>(), k in 0u32..4, rho in 0.05f64..50.0) {
        let h = channel(seed, 8, 2);
        let h_hat = &h + channel(seed ^ 7, 8, 2) * Complex64::new(0.5, 0.0);
        let lin = LinearizedUplink::new(&h, &h_hat, resolution(k), rho, CLIP, CombinerKind::Mr).unwrap();
        let sindr = uplink_sindr(&h, &lin.combiner, &lin.agc, &lin.distortion, rho).unwrap();
        for (u, gamma) in sindr.iter().enumerate() {
            let gmi = uplink_gmi(&effective_gains(&h, &h_hat, &lin.combiner, &lin.agc, &lin.distortion, rho, u).unwrap());
            prop_assert!(gmi <= (1.0 + gamma).log2() + 1e-9);
        }
    }

    #[test]
    fn radiated_power_is_one(seed in any::<u64>(), k in 0u32..=8, b in 2usize..24, u in 1usize..4) {
        let h = channel(seed, b, u);
        let model = downlink_linearize(&mr_precoder(&h).unwrap(), resolution(k), CLIP).unwrap();
        prop_assert!((model.radiated_power() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn outage_rate_is_monotone_in_level(seed in any::<u64>(), n in 1usize..300, e1 in 0.001f64..0.999, e2 in 0.001f64..0.999) {
        let mut rng = substream(seed, 5, 0);
        let samples: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 4.0).collect();
        let (lo, hi) = if e1 <= e2 { (e1, e2) } else { (e2, e1) };
        prop_assert!(outage_rate(&samples, lo).unwrap() <= outage_rate(&samples, hi).unwrap());
    }

    #[test]
    fn single_pilot_mse_identity(rho in 1e-3f64..1e4) {
        let want = 1.0 - 2.0 / std::f64::consts::PI * rho / (1.0 + rho);
        prop_assert!((mse_1bit_closed_form(1, rho).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn antenna_count_respects_fronthaul(rate in 2u32..4096, q in 1u32..=24) {
        let b = antennas_for_resolution(rate, q).unwrap();
        prop_assert!(2 * b as u64 * q as u64 <= rate as u64);
        prop_assert!(2 * (b as u64 + 1) * q as u64 > rate as u64);
    }

    #[test]
    fn config_round_trips(seed in any::<u64>(), trials in 1usize..10_000, level in 0.001f64..0.999, db in -30.0f64..30.0) {
        let cfg = SystemConfig {
            seed,
            trials,
            outage_level: level,
            rho_dl_db: fhmimo::config::Snr::from_db(db),
            ..SystemConfig::default()
        };
        prop_assert_eq!(SystemConfig::from_json_str(&cfg.to_json_pretty()).unwrap(), cfg);
    }
}

#[test]
fn fixed_aperture_spacing() {
    for b in 32..=256 {
        let g = ArrayGeometry::new(b, 1.28, 0.01).unwrap();
        assert!((g.spacing_wavelengths() * b as f64 - 128.0).abs() < 1e-12);
    }
}

#[test]
fn los_columns_have_path_gain_norm() {
    let region = CellRegion {
        d_min: 50.0,
        d_max: 150.0,
        azimuth_min_deg: 30.0,
        azimuth_max_deg: 150.0,
    };
    let mut rng = substream(4, 0, 0);
    for b in [32, 85, 256] {
        let drop = sample_drop(&mut rng, 8, &region, 0.01).unwrap();
        let h = los_channel(&ArrayGeometry::new(b, 1.28, 0.01).unwrap(), &drop).h;
        for (u, beta) in drop.pathloss.iter().enumerate() {
            assert!((norm_sqr(column(&h, u)) / (b as f64 * beta) - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn reference_user_has_unit_snr_scale() {
    let d = fhmimo::channel::average_distance(50.0, 150.0).unwrap();
    let region = CellRegion {
        d_min: d,
        d_max: d,
        azimuth_min_deg: 30.0,
        azimuth_max_deg: 150.0,
    };
    let drop = sample_drop(&mut substream(1, 0, 0), 4, &region, 0.01).unwrap();
    assert!(drop.snr_scale.iter().all(|s| (*s - 1.0).abs() < 1e-12));
    assert_eq!(drop.pathloss[0], free_space_pathloss(d, 0.01).unwrap());
}

#[test]
fn higher_dac_resolution_helps_downlink() {
    let mut wins = 0;
    for seed in 0..100 {
        let h = channel(seed, 16, 3);
        let p = mr_precoder(&h).unwrap();
        let coarse = downlink_sindr(
            &h,
            &downlink_linearize(&p, Resolution::Bits(1), CLIP).unwrap(),
            10.0,
        )
        .unwrap();
        let fine = downlink_sindr(
            &h,
            &downlink_linearize(&p, Resolution::Bits(12), CLIP).unwrap(),
            10.0,
        )
        .unwrap();
        if coarse.iter().zip(&fine).all(|(c, f)| f >= c) {
            wins += 1;
        }
    }
    assert!(wins >= 99, "{wins}/100");
}

#[test]
fn converter_distortion_vanishes_without_quantization() {
    let h = channel(3, 4, 2);
    let cov = &h * h.adjoint() + CMat::identity(4, 4);
    let model = distortion_cov(&cov, &Converter::Ideal).unwrap();
    assert_eq!(model.gain, vec![1.0; 4]);
    assert!(model
        .error_cov
        .iter()
        .all(|z| *z == Complex64::new(0.0, 0.0)));
}

#[test]
fn sweep_rows_are_feasible_and_pooled() {
    let cfg = SystemConfig {
        trials: 4,
        resolutions: vec![1, 3, 8],
        csi: CsiSelection::Perfect,
        ..SystemConfig::default()
    };
    let rows = fronthaul_sweep(&cfg).unwrap();
    for row in &rows {
        assert!(2 * row.b as u32 * row.q <= cfg.fronthaul_rate);
        let back = SweepRow::from_csv(&row.to_csv()).unwrap();
        assert_eq!((back.q, back.b, back.seed), (row.q, row.b, row.seed));
    }
    let records: Vec<TrialRecord> = (0..cfg.trials as u64)
        .map(|t| {
            fhmimo::engine::run_trial(
                &cfg,
                Resolution::Bits(1),
                256,
                fhmimo::config::CsiMode::Perfect,
                t,
            )
            .unwrap()
        })
        .collect();
    let pooled: Vec<f64> = records
        .iter()
        .flat_map(|r| r.uplink.iter().copied())
        .collect();
    assert_eq!(pooled.len(), cfg.num_users * cfg.trials);
    assert_eq!(
        outage_rate(&pooled, cfg.outage_level).unwrap(),
        rows[0].ul_rate
    );
}
