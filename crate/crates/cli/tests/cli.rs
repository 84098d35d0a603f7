use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fhmimo::config::SystemConfig;
use fhmimo::engine::SweepRow;
use sha2::{Digest, Sha256};

struct Scratch(PathBuf);

impl Scratch {
    fn new(tag: &str) -> Self {
        let dir = std::env::temp_dir().join(format!("fhmimo-cli-{tag}-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        Self(dir)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }

    fn write(&self, name: &str, text: &str) -> PathBuf {
        let p = self.path(name);
        std::fs::write(&p, text).unwrap();
        p
    }
}

impl Drop for Scratch {
    fn drop(&mut self) {
        let _ = std::fs::remove_dir_all(&self.0);
    }
}

fn fhmimo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fhmimo"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn sweep_writes_csv_and_manifest() {
    let dir = Scratch::new("sweep");
    let out = dir.path("perfect.csv");
    let run = fhmimo(&[
        "sweep",
        "--csi",
        "perfect",
        "--trials",
        "6",
        "--seed",
        "3",
        "--out",
        s(&out),
    ]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );

    let csv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "q,b,csi_mode,rho_ul_db,rho_dl_db,ul_rate,dl_rate,bidir_rate,trials,seed"
    );
    assert!(!csv.contains('\r') && csv.ends_with('\n'));
    let rows: Vec<SweepRow> = lines[1..]
        .iter()
        .map(|l| SweepRow::from_csv(l).unwrap())
        .collect();
    assert_eq!(
        rows.iter().map(|r| r.b).collect::<Vec<_>>(),
        [256, 128, 85, 64, 51, 42, 36, 32]
    );
    assert_eq!(
        rows.iter().map(|r| r.q).collect::<Vec<_>>(),
        (1..=8).collect::<Vec<_>>()
    );
    assert!(rows
        .iter()
        .all(|r| r.seed == 3 && r.trials == 6 && 2 * r.b as u32 * r.q <= 512));

    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path("perfect.csv.manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["command"], "sweep");
    assert_eq!(manifest["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(manifest["outputs"][0], s(&out));
    let cfg = SystemConfig::from_json_str(&manifest["config"].to_string()).unwrap();
    assert_eq!(cfg.trials, 6);
    let digest: String = Sha256::digest(cfg.to_json_pretty().as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    assert_eq!(manifest["config_sha256"], digest.as_str());
    assert!(
        manifest["finished_unix"].as_f64().unwrap() >= manifest["started_unix"].as_f64().unwrap()
    );
}

#[test]
fn sweep_is_reproducible() {
    let dir = Scratch::new("repro");
    let cfg = dir.write("cfg.json", r#"{"resolutions": [1, 2], "pilot_len": 40}"#);
    let (a, b) = (dir.path("a.csv"), dir.path("b.csv"));
    for (out, threads) in [(&a, "1"), (&b, "3")] {
        let run = fhmimo(&[
            "--threads",
            threads,
            "sweep",
            "--config",
            s(&cfg),
            "--trials",
            "5",
            "--out",
            s(out),
        ]);
        assert!(
            run.status.success(),
            "{}",
            String::from_utf8_lossy(&run.stderr)
        );
    }
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
    assert_eq!(text.lines().count(), 1 + 2 * 2);
}

#[test]
fn zero_trials_is_rejected_before_running() {
    let dir = Scratch::new("zero");
    let out = dir.path("never.csv");
    let run = fhmimo(&["sweep", "--trials", "0", "--out", s(&out)]);
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).contains("`trials`"));
    assert!(!out.exists());
}

#[test]
fn config_errors_name_the_key() {
    let dir = Scratch::new("badcfg");
    let out = dir.path("x.csv");
    for (text, key) in [
        (
            r#"{"fronthaul_rate": 16, "resolutions": [1, 9]}"#,
            "`resolutions`",
        ),
        (r#"{"typo_key": 1}"#, "`typo_key`"),
        (r#"{"outage_level": 2}"#, "`outage_level`"),
    ] {
        let cfg = dir.write("cfg.json", text);
        let run = fhmimo(&["sweep", "--config", s(&cfg), "--out", s(&out)]);
        assert_eq!(run.status.code(), Some(2));
        assert!(String::from_utf8_lossy(&run.stderr).contains(key), "{key}");
    }
    let run = fhmimo(&[
        "sweep",
        "--config",
        s(&dir.path("missing.json")),
        "--out",
        s(&out),
    ]);
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn unwritable_output_is_an_error() {
    let run = fhmimo(&[
        "sweep",
        "--trials",
        "1",
        "--csi",
        "perfect",
        "--out",
        "/nonexistent-dir/x.csv",
    ]);
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).contains("/nonexistent-dir/x.csv"));
}

#[test]
fn mse_curve_single_user_matches_closed_form() {
    let dir = Scratch::new("mse");
    let cfg = dir.write(
        "cfg.json",
        r#"{
            "mse_antennas": 1, "mse_users": 1, "mse_resolutions": [1],
            "mse_pilot_lens": [1, 10, 100],
            "mse_snr_antennas": 1, "mse_snr_pilot_lens": [1, 10],
            "mse_snr_grid_db": [-10, 0, 10, 20],
            "mse_realizations": 50000
        }"#,
    );
    let out = dir.path("mse.csv");
    let run = fhmimo(&["mse-curve", "--config", s(&cfg), "--out", s(&out)]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    assert!(dir.path("mse.csv.manifest.json").exists());
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next(),
        Some("mode,q,n_p,rho_db,mse_analytic,mse_empirical")
    );
    let mut count = 0;
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let (analytic, empirical): (f64, f64) = (f[4].parse().unwrap(), f[5].parse().unwrap());
        assert!((empirical / analytic - 1.0).abs() < 0.02, "{line}");
        count += 1;
    }
    assert_eq!(count, 3 + 2 * 4);
}

#[test]
fn mse_curve_ideal_converters_have_no_floor() {
    let dir = Scratch::new("mse-ideal");
    let cfg = dir.write(
        "cfg.json",
        r#"{
            "mse_antennas": 4, "mse_users": 2, "mse_resolutions": ["inf", 3],
            "mse_pilot_lens": [10000], "mse_rho_db": 10,
            "mse_snr_pilot_lens": [], "mse_realizations": 4
        }"#,
    );
    let out = dir.path("mse.csv");
    let run = fhmimo(&["mse-curve", "--config", s(&cfg), "--out", s(&out)]);
    assert!(
        run.status.success(),
        "{}",
        String::from_utf8_lossy(&run.stderr)
    );
    let csv = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<Vec<&str>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0][1], "inf");
    assert_eq!(rows[0][4], "", "no closed form for this row");
    assert!(rows[0][5].parse::<f64>().unwrap() < 1e-2);
    assert_eq!(rows[1][1], "3");
}

#[test]
fn validate_detects_a_wrong_gain() {
    let good = fhmimo(&["validate", "--checks", "6"]);
    assert_eq!(good.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&good.stdout).contains("[PASS]  6"));
    let bad = fhmimo(&["validate", "--checks", "6", "--gain-perturbation", "1.05"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&bad.stdout).contains("[FAIL]  6"));
}

#[test]
fn validate_report_is_reproducible() {
    let a = fhmimo(&["validate", "--checks", "2,4,5,11"]);
    let b = fhmimo(&["validate", "--checks", "2,4,5,11"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(String::from_utf8_lossy(&a.stdout).lines().count(), 5);
}
