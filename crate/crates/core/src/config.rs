//! Scenario description and its JSON form.
//!
//! The config file is a flat JSON object; every key is optional and missing
//! keys take the values of [`SystemConfig::default`], which describe a 30 GHz
//! ULA of 1.28 m serving 8 users over a 512 bit/s/Hz fronthaul. SNRs are
//! given in dB in the file and converted to linear scale once, on load.

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};

use crate::channel::CellRegion;
use crate::downlink::PrecoderKind;
use crate::quantizer::{Resolution, MAX_BITS};
use crate::uplink::CombinerKind;
use crate::{Error, Result};

/// An SNR stored in both dB and linear scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Snr {
    db: f64,
    linear: f64,
}

impl Snr {
    pub fn from_db(db: f64) -> Self {
        Self {
            db,
            linear: 10f64.powf(db / 10.0),
        }
    }

    pub fn db(self) -> f64 {
        self.db
    }

    pub fn linear(self) -> f64 {
        self.linear
    }
}

impl Serialize for Snr {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_f64(self.db)
    }
}

impl<'de> Deserialize<'de> for Snr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        f64::deserialize(deserializer).map(Snr::from_db)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CsiMode {
    Perfect,
    Estimated,
}

impl CsiMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CsiMode::Perfect => "perfect",
            CsiMode::Estimated => "estimated",
        }
    }
}

impl std::str::FromStr for CsiMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "perfect" => Ok(CsiMode::Perfect),
            "estimated" => Ok(CsiMode::Estimated),
            other => Err(Error::domain(format!("unknown CSI mode `{other}`"))),
        }
    }
}

/// Which CSI modes a sweep covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CsiSelection {
    Perfect,
    Estimated,
    #[default]
    Both,
}

impl CsiSelection {
    pub fn modes(self) -> &'static [CsiMode] {
        match self {
            CsiSelection::Perfect => &[CsiMode::Perfect],
            CsiSelection::Estimated => &[CsiMode::Estimated],
            CsiSelection::Both => &[CsiMode::Perfect, CsiMode::Estimated],
        }
    }
}

impl std::str::FromStr for CsiSelection {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "perfect" => Ok(CsiSelection::Perfect),
            "estimated" => Ok(CsiSelection::Estimated),
            "both" => Ok(CsiSelection::Both),
            other => Err(Error::domain(format!("unknown CSI selection `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SystemConfig {
    /// Fronthaul budget in bit/s/Hz; `B = floor(R_fh / 2Q)`.
    pub fronthaul_rate: u32,
    /// Converter resolutions to sweep.
    pub resolutions: Vec<u32>,
    pub num_users: usize,
    /// Uplink SNR of a user at the average distance.
    pub rho_ul_db: Snr,
    /// Total downlink SNR at the average distance.
    pub rho_dl_db: Snr,
    /// Carrier wavelength in meters.
    pub wavelength: f64,
    /// Physical array length in meters.
    pub aperture: f64,
    pub d_min: f64,
    pub d_max: f64,
    pub azimuth_min_deg: f64,
    pub azimuth_max_deg: f64,
    pub pilot_len: usize,
    /// Per real sample clipping probability used to set the step size.
    pub clip_prob: f64,
    pub outage_level: f64,
    /// User drops per resolution.
    pub trials: usize,
    pub seed: u64,
    pub csi: CsiSelection,
    pub combiner: CombinerKind,
    pub precoder: PrecoderKind,

    // Estimation-MSE experiments (`mse-curve`), i.i.d. Rayleigh channel.
    pub mse_antennas: usize,
    pub mse_users: usize,
    pub mse_rho_db: Snr,
    pub mse_pilot_lens: Vec<usize>,
    pub mse_resolutions: Vec<Resolution>,
    pub mse_snr_antennas: usize,
    pub mse_snr_grid_db: Vec<f64>,
    pub mse_snr_pilot_lens: Vec<usize>,
    pub mse_realizations: usize,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            fronthaul_rate: 512,
            resolutions: (1..=8).collect(),
            num_users: 8,
            rho_ul_db: Snr::from_db(5.0),
            rho_dl_db: Snr::from_db(15.0),
            wavelength: 0.01,
            aperture: 1.28,
            d_min: 50.0,
            d_max: 150.0,
            azimuth_min_deg: 30.0,
            azimuth_max_deg: 150.0,
            pilot_len: 100,
            clip_prob: 1e-4,
            outage_level: 0.1,
            trials: 500,
            seed: 1,
            csi: CsiSelection::Both,
            combiner: CombinerKind::Mr,
            precoder: PrecoderKind::Mr,
            mse_antennas: 100,
            mse_users: 10,
            mse_rho_db: Snr::from_db(10.0),
            mse_pilot_lens: vec![10, 20, 50, 100, 200, 500, 1000, 2000, 5000, 10_000],
            mse_resolutions: vec![
                Resolution::Bits(1),
                Resolution::Bits(2),
                Resolution::Bits(3),
                Resolution::Bits(4),
                Resolution::Infinite,
            ],
            mse_snr_antennas: 100,
            mse_snr_grid_db: (-5..=15).map(|k| 2.0 * k as f64).collect(),
            mse_snr_pilot_lens: vec![1, 10, 100, 1000],
            mse_realizations: 50,
        }
    }
}

impl SystemConfig {
    /// Parses a JSON object, filling missing keys with defaults, and
    /// validates the result.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let text = text.trim();
        if text.is_empty() {
            return Ok(Self::default());
        }
        let value: Value = serde_json::from_str(text)?;
        let Value::Object(user) = value else {
            return Err(Error::config("<root>", "config must be a JSON object"));
        };
        let Value::Object(defaults) = serde_json::to_value(Self::default())? else {
            unreachable!("config serializes to an object");
        };
        for (key, v) in &user {
            if !defaults.contains_key(key) {
                return Err(Error::config(key, "unknown key"));
            }
            // Deserialize each key alone so type errors name it.
            let mut probe: Map<String, Value> = defaults.clone();
            probe.insert(key.clone(), v.clone());
            if let Err(e) = serde_json::from_value::<Self>(Value::Object(probe)) {
                return Err(Error::config(key, e.to_string()));
            }
        }
        let mut merged = defaults;
        merged.extend(user);
        let cfg: Self = serde_json::from_value(Value::Object(merged))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config is always serializable")
    }

    pub fn region(&self) -> CellRegion {
        CellRegion {
            d_min: self.d_min,
            d_max: self.d_max,
            azimuth_min_deg: self.azimuth_min_deg,
            azimuth_max_deg: self.azimuth_max_deg,
        }
    }

    pub fn validate(&self) -> Result<()> {
        fn positive(key: &str, v: f64) -> Result<()> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(
                    key,
                    format!("must be positive and finite, got {v}"),
                ))
            }
        }
        fn probability(key: &str, v: f64) -> Result<()> {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::config(key, format!("must lie in (0, 1), got {v}")))
            }
        }

        if self.num_users == 0 {
            return Err(Error::config("num_users", "must be at least 1"));
        }
        if self.resolutions.is_empty() {
            return Err(Error::config("resolutions", "must not be empty"));
        }
        for &q in &self.resolutions {
            if q == 0 || q > MAX_BITS {
                return Err(Error::config(
                    "resolutions",
                    format!("Q must be in 1..={MAX_BITS}, got {q}"),
                ));
            }
            let b = self.fronthaul_rate as usize / (2 * q as usize);
            if b < self.num_users {
                return Err(Error::config(
                    "resolutions",
                    format!(
                        "B({q}) = floor({} / {}) = {b} < U = {}",
                        self.fronthaul_rate,
                        2 * q,
                        self.num_users
                    ),
                ));
            }
        }
        for (key, v) in [
            ("rho_ul_db", self.rho_ul_db.db()),
            ("rho_dl_db", self.rho_dl_db.db()),
            ("mse_rho_db", self.mse_rho_db.db()),
        ] {
            if !v.is_finite() {
                return Err(Error::config(key, format!("must be finite, got {v}")));
            }
        }
        positive("wavelength", self.wavelength)?;
        positive("aperture", self.aperture)?;
        positive("d_min", self.d_min)?;
        if !(self.d_max >= self.d_min && self.d_max.is_finite()) {
            return Err(Error::config(
                "d_max",
                format!("must be at least d_min = {}", self.d_min),
            ));
        }
        if !(self.azimuth_min_deg < self.azimuth_max_deg) {
            return Err(Error::config(
                "azimuth_max_deg",
                "must exceed azimuth_min_deg",
            ));
        }
        if self.pilot_len < self.num_users {
            return Err(Error::config(
                "pilot_len",
                format!(
                    "must be at least num_users = {}, got {}",
                    self.num_users, self.pilot_len
                ),
            ));
        }
        probability("clip_prob", self.clip_prob)?;
        probability("outage_level", self.outage_level)?;
        if self.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }

        if self.mse_antennas == 0 {
            return Err(Error::config("mse_antennas", "must be at least 1"));
        }
        if self.mse_users == 0 {
            return Err(Error::config("mse_users", "must be at least 1"));
        }
        if let Some(n) = self.mse_pilot_lens.iter().find(|n| **n < self.mse_users) {
            return Err(Error::config(
                "mse_pilot_lens",
                format!("{n} is below mse_users = {}", self.mse_users),
            ));
        }
        if self.mse_snr_antennas == 0 {
            return Err(Error::config("mse_snr_antennas", "must be at least 1"));
        }
        if self.mse_snr_pilot_lens.contains(&0) {
            return Err(Error::config(
                "mse_snr_pilot_lens",
                "pilot lengths must be at least 1",
            ));
        }
        if let Some(v) = self.mse_snr_grid_db.iter().find(|v| !v.is_finite()) {
            return Err(Error::config(
                "mse_snr_grid_db",
                format!("must be finite, got {v}"),
            ));
        }
        if self.mse_realizations == 0 {
            return Err(Error::config("mse_realizations", "must be at least 1"));
        }
        Ok(())
    }
}
