//! Physical parameters of the source-relay-destination link.
//!
//! Everything inside the crate works in linear units (watts, linear SNR).
//! Decibel quantities only exist at the configuration boundary, see
//! [`from_db_config`] and [`to_db_config`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::ParamsError;

/// Configuration keys accepted by [`from_db_config`], in canonical order.
pub const CONFIG_KEYS: [&str; 9] = [
    "ps_dbm",
    "pr_dbm",
    "eta",
    "m",
    "d1_m",
    "d2_m",
    "sigma_nr_dbm",
    "sigma_nd_dbm",
    "gamma_o_db",
];

/// Seed key; accepted in config files next to [`CONFIG_KEYS`] but not part of
/// the physical parameters.
pub const SEED_KEY: &str = "seed";

pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// System parameters in linear units.
///
/// The block time is normalized to one second, so every energy quantity in
/// the crate is numerically equal to the average power over a block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Source transmit power `Ps`, watts.
    pub source_power: f64,
    /// Preset relay transmit power `Pr`, watts.
    pub relay_power: f64,
    /// RF-to-DC conversion efficiency, strictly inside (0, 1).
    pub conversion_efficiency: f64,
    /// Path-loss exponent.
    pub path_loss_exponent: f64,
    /// Source to relay distance, meters.
    pub dist_sr: f64,
    /// Relay to destination distance, meters.
    pub dist_rd: f64,
    /// Noise variance at the relay, watts.
    pub noise_relay: f64,
    /// Noise variance at the destination, watts.
    pub noise_dest: f64,
    /// Detection threshold SNR, linear.
    pub snr_threshold: f64,
    /// Block duration, seconds.
    pub block_time: f64,
}

impl SystemParams {
    /// Parameter set used throughout the numerical study: `Ps = 46 dBm`,
    /// `m = 3`, `d1 = 35 m`, `d2 = 10 m`, `eta = 0.5`, `gamma_o = 60 dB`,
    /// relay noise `-70 dBm`, destination noise `-100 dBm`. The relay power,
    /// which the study sweeps, defaults to 0 dBm.
    pub fn paper_defaults() -> Self {
        from_db_config(&default_db_config()).expect("built-in defaults are valid")
    }

    /// Checks every invariant and returns the parameters unchanged if they hold.
    pub fn validated(self) -> Result<Self, ParamsError> {
        let positive = [
            ("source_power", self.source_power),
            ("relay_power", self.relay_power),
            ("dist_sr", self.dist_sr),
            ("dist_rd", self.dist_rd),
            ("noise_relay", self.noise_relay),
            ("noise_dest", self.noise_dest),
            ("snr_threshold", self.snr_threshold),
            ("block_time", self.block_time),
        ];
        for (name, value) in positive {
            if !value.is_finite() {
                return Err(ParamsError::NonFinite { key: name.into() });
            }
            if value <= 0.0 {
                return Err(ParamsError::Invariant(format!(
                    "{name} must be > 0, got {value}"
                )));
            }
        }
        let eta = self.conversion_efficiency;
        if !eta.is_finite() {
            return Err(ParamsError::NonFinite {
                key: "conversion_efficiency".into(),
            });
        }
        if !(eta > 0.0 && eta < 1.0) {
            return Err(ParamsError::Invariant(format!(
                "conversion_efficiency must lie in (0, 1), got {eta}"
            )));
        }
        let m = self.path_loss_exponent;
        if !m.is_finite() {
            return Err(ParamsError::NonFinite {
                key: "path_loss_exponent".into(),
            });
        }
        if m < 2.0 {
            return Err(ParamsError::Invariant(format!(
                "path_loss_exponent must be >= 2, got {m}"
            )));
        }
        Ok(self)
    }

    /// `d1^m`.
    pub fn path_loss_sr(&self) -> f64 {
        self.dist_sr.powf(self.path_loss_exponent)
    }

    /// `d2^m`.
    pub fn path_loss_rd(&self) -> f64 {
        self.dist_rd.powf(self.path_loss_exponent)
    }

    /// Energy the relay spends on one half-block transmission, `Pr * T / 2`.
    pub fn transmit_energy(&self) -> f64 {
        self.relay_power * self.block_time / 2.0
    }

    /// Energy harvested over `fraction` of a block with source-relay gain `h2`.
    pub fn harvested_energy(&self, h2: f64, fraction: f64) -> f64 {
        self.conversion_efficiency * self.source_power * h2 * fraction * self.block_time
            / self.path_loss_sr()
    }

    /// Mean number of harvest-only blocks needed to fund one transmission,
    /// `Pr d1^m / (2 eta Ps)`.
    pub fn harvest_ratio(&self) -> f64 {
        self.relay_power * self.path_loss_sr()
            / (2.0 * self.conversion_efficiency * self.source_power)
    }

    pub fn with_relay_power(mut self, watts: f64) -> Self {
        self.relay_power = watts;
        self
    }
}

/// Shorthand constants of the closed-form throughput expressions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DerivedConstants {
    /// `Ps d2^m sigma_nd^2 gamma_o`
    pub a: f64,
    /// `d1^m d2^m sigma_nr^2 sigma_nd^2 gamma_o`
    pub b: f64,
    /// `Ps Pr`
    pub c: f64,
    /// `Pr d1^m sigma_nr^2 gamma_o`
    pub d: f64,
    /// `sqrt(4 (a d + b c) / c^2)`
    pub u: f64,
    /// Relay outage gain threshold `gamma_o d1^m sigma_nr^2 / Ps`.
    pub a_bar: f64,
    /// Destination outage gain threshold `gamma_o d2^m sigma_nd^2 / Pr`.
    pub b_bar: f64,
    /// Mean harvested energy per block `eta Ps T / d1^m`.
    pub rho: f64,
}

pub fn derive_constants(p: &SystemParams) -> Result<DerivedConstants, ParamsError> {
    let l1 = p.path_loss_sr();
    let l2 = p.path_loss_rd();
    let g = p.snr_threshold;
    let a = p.source_power * l2 * p.noise_dest * g;
    let b = l1 * l2 * p.noise_relay * p.noise_dest * g;
    let c = p.source_power * p.relay_power;
    let d = p.relay_power * l1 * p.noise_relay * g;
    // (ad + bc)/c^2 rearranged to avoid squaring c.
    let u = 2.0 * ((a / c) * (d / c) + b / c).sqrt();
    let dc = DerivedConstants {
        a,
        b,
        c,
        d,
        u,
        a_bar: g * l1 * p.noise_relay / p.source_power,
        b_bar: g * l2 * p.noise_dest / p.relay_power,
        rho: p.conversion_efficiency * p.source_power * p.block_time / l1,
    };
    let fields = [
        ("a", dc.a),
        ("b", dc.b),
        ("c", dc.c),
        ("d", dc.d),
        ("u", dc.u),
        ("a_bar", dc.a_bar),
        ("b_bar", dc.b_bar),
        ("rho", dc.rho),
    ];
    for (name, v) in fields {
        if !v.is_finite() {
            return Err(ParamsError::NonFinite { key: name.into() });
        }
        if v <= 0.0 {
            return Err(ParamsError::Invariant(format!(
                "derived constant {name} underflowed to {v}"
            )));
        }
    }
    Ok(dc)
}

/// Default configuration map (decibel units) for the numerical study.
pub fn default_db_config() -> BTreeMap<String, f64> {
    [
        ("ps_dbm", 46.0),
        ("pr_dbm", 0.0),
        ("eta", 0.5),
        ("m", 3.0),
        ("d1_m", 35.0),
        ("d2_m", 10.0),
        ("sigma_nr_dbm", -70.0),
        ("sigma_nd_dbm", -100.0),
        ("gamma_o_db", 60.0),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// Builds linear-unit parameters from a flat decibel configuration map.
///
/// Every key of [`CONFIG_KEYS`] must be present. Unknown keys are rejected so
/// a typo cannot silently fall back to a default.
pub fn from_db_config(map: &BTreeMap<String, f64>) -> Result<SystemParams, ParamsError> {
    if let Some(unknown) = map.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
        return Err(ParamsError::UnknownKey(unknown.clone()));
    }
    let get = |key: &str| -> Result<f64, ParamsError> {
        let v = *map
            .get(key)
            .ok_or_else(|| ParamsError::MissingKey(key.into()))?;
        if !v.is_finite() {
            return Err(ParamsError::NonFinite { key: key.into() });
        }
        Ok(v)
    };
    SystemParams {
        source_power: dbm_to_watts(get("ps_dbm")?),
        relay_power: dbm_to_watts(get("pr_dbm")?),
        conversion_efficiency: get("eta")?,
        path_loss_exponent: get("m")?,
        dist_sr: get("d1_m")?,
        dist_rd: get("d2_m")?,
        noise_relay: dbm_to_watts(get("sigma_nr_dbm")?),
        noise_dest: dbm_to_watts(get("sigma_nd_dbm")?),
        snr_threshold: db_to_linear(get("gamma_o_db")?),
        block_time: 1.0,
    }
    .validated()
}

/// Inverse of [`from_db_config`].
pub fn to_db_config(p: &SystemParams) -> BTreeMap<String, f64> {
    [
        ("ps_dbm", watts_to_dbm(p.source_power)),
        ("pr_dbm", watts_to_dbm(p.relay_power)),
        ("eta", p.conversion_efficiency),
        ("m", p.path_loss_exponent),
        ("d1_m", p.dist_sr),
        ("d2_m", p.dist_rd),
        ("sigma_nr_dbm", watts_to_dbm(p.noise_relay)),
        ("sigma_nd_dbm", watts_to_dbm(p.noise_dest)),
        ("gamma_o_db", linear_to_db(p.snr_threshold)),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect()
}

/// Parsed JSON configuration file: a flat object with any subset of
/// [`CONFIG_KEYS`] plus an optional integer `seed`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    pub values: BTreeMap<String, f64>,
    pub seed: Option<u64>,
}

impl ConfigFile {
    pub fn from_json_str(text: &str) -> Result<Self, ParamsError> {
        let raw: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(text).map_err(|e| ParamsError::Parse(e.to_string()))?;
        let mut out = ConfigFile::default();
        for (key, value) in raw {
            if key == SEED_KEY {
                let seed = value.as_u64().ok_or_else(|| {
                    ParamsError::Parse(format!("seed must be a non-negative integer, got {value}"))
                })?;
                out.seed = Some(seed);
                continue;
            }
            if !CONFIG_KEYS.contains(&key.as_str()) {
                return Err(ParamsError::UnknownKey(key));
            }
            let v = value.as_f64().ok_or_else(|| {
                ParamsError::Parse(format!("{key} must be a number, got {value}"))
            })?;
            out.values.insert(key, v);
        }
        Ok(out)
    }

    /// Overlays these values onto `base` and returns the merged map.
    pub fn merged_over(&self, base: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
        let mut merged = base.clone();
        merged.extend(self.values.iter().map(|(k, v)| (k.clone(), *v)));
        merged
    }
}
