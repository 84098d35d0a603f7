//! `fhmimo`: sweep, estimation-MSE tables and the acceptance checks.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use sha2::{Digest, Sha256};

use fhmimo::config::{CsiSelection, SystemConfig};
use fhmimo::engine::{fronthaul_sweep, sweep_csv};
use fhmimo::mse_curve::{mse_csv, mse_curve};
use fhmimo::validation::{self, ValidateOptions, CHECK_IDS};

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Sim(#[from] fhmimo::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

#[derive(Parser)]
#[command(
    name = "fhmimo",
    version,
    about = "Fronthaul-constrained massive MIMO link simulator"
)]
struct Cli {
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Outage rates against converter resolution at a fixed fronthaul rate.
    Sweep(SweepArgs),
    /// Channel-estimation MSE against pilot length and SNR.
    MseCurve(CommonArgs),
    /// Run the built-in acceptance checks.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// JSON config; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output CSV path; a manifest is written next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// User drops per resolution.
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long, value_parser = ["perfect", "estimated", "both"])]
    csi: Option<String>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// User drops per resolution in the sweep-based checks.
    #[arg(long, default_value_t = 500)]
    trials: usize,
    /// Comma-separated check ids (default: all).
    #[arg(long, value_delimiter = ',')]
    checks: Option<Vec<u8>>,
    /// Scales the analytic Bussgang gain; used to confirm the suite detects
    /// a wrong gain.
    #[arg(long, default_value_t = 1.0, hide = true)]
    gain_perturbation: f64,
}

#[derive(Serialize)]
struct RunManifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config_sha256: String,
    config: &'a SystemConfig,
    started_unix: f64,
    finished_unix: f64,
    outputs: Vec<String>,
}

fn now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

fn load_config(args: &CommonArgs) -> Result<SystemConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            SystemConfig::from_json_str(&text)?
        }
        None => SystemConfig::default(),
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

/// Writes `csv` to `out` and the manifest describing it alongside.
fn emit(
    command: &str,
    cfg: &SystemConfig,
    out: &Path,
    csv: &str,
    started: f64,
) -> Result<(), CliError> {
    write_file(out, csv)?;
    let snapshot = cfg.to_json_pretty();
    let manifest = RunManifest {
        tool: "fhmimo",
        version: env!("CARGO_PKG_VERSION"),
        command,
        seed: cfg.seed,
        config_sha256: sha256_hex(snapshot.as_bytes()),
        config: cfg,
        started_unix: started,
        finished_unix: now(),
        outputs: vec![out.display().to_string()],
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(fhmimo::Error::from)?;
    write_file(&manifest_path(out), &(text + "\n"))
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    if let Some(threads) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()?;
    }
    let started = now();
    match cli.command {
        Command::Sweep(args) => {
            let mut cfg = load_config(&args.common)?;
            if let Some(trials) = args.trials {
                cfg.trials = trials;
            }
            if let Some(csi) = &args.csi {
                cfg.csi = csi.parse::<CsiSelection>()?;
            }
            cfg.validate()?;
            let rows = fronthaul_sweep(&cfg)?;
            emit("sweep", &cfg, &args.common.out, &sweep_csv(&rows), started)?;
        }
        Command::MseCurve(args) => {
            let cfg = load_config(&args)?;
            cfg.validate()?;
            let rows = mse_curve(&cfg)?;
            emit("mse-curve", &cfg, &args.out, &mse_csv(&rows), started)?;
        }
        Command::Validate(args) => {
            let options = ValidateOptions {
                seed: args.seed,
                sweep_trials: args.trials,
                gain_perturbation: args.gain_perturbation,
            };
            let ids = args.checks.unwrap_or_else(|| CHECK_IDS.to_vec());
            let report = validation::run(&options, &ids)?;
            print!("{report}");
            if !report.all_passed() {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
