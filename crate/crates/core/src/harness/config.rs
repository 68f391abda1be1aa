use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerology::{range_to_rtt, ta_to_rtt, TaCode};
use crate::signaling::SessionMode;
use crate::system::SystemConfig;

/// Measurements per distance and SNR in the default (desk-scale) run.
pub const DESK_TRIALS: usize = 500;
/// Measurements per distance and SNR in a full run.
pub const FULL_TRIALS: usize = 5000;

/// Monte Carlo experiment description. Field names are the TOML keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub system: SystemConfig,
    pub distances_m: Vec<f64>,
    /// Per-subcarrier SNR points; `"inf"` selects the noiseless channel.
    #[serde(with = "snr_list")]
    pub snr_points_db: Vec<f64>,
    pub m_values: Vec<usize>,
    /// Measurements per distance per SNR, split into disjoint batches of M.
    pub trials_per_distance: usize,
    pub base_seed: u64,
    pub drift_ppm: f64,
    /// Known transceiver delay, removed before computing errors.
    pub hardware_delay_s: f64,
    pub ta_jitter_std_s: f64,
    pub mode: SessionMode,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            system: SystemConfig::default(),
            distances_m: vec![7.0, 8.0, 9.0, 10.0, 11.0],
            snr_points_db: vec![25.0, -25.0],
            m_values: vec![20, 60],
            trials_per_distance: DESK_TRIALS,
            base_seed: 0,
            drift_ppm: 2.0,
            hardware_delay_s: 0.0,
            ta_jitter_std_s: 0.0,
            mode: SessionMode::Phytest,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn full(mut self) -> Self {
        self.trials_per_distance = FULL_TRIALS;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        let cfg_err = |msg: String| Err(Error::Config(msg));
        if self.distances_m.is_empty() || self.snr_points_db.is_empty() || self.m_values.is_empty() {
            return cfg_err("distances, SNR points and M values must be non-empty".into());
        }
        if self.m_values.contains(&0) {
            return cfg_err("M must be >= 1".into());
        }
        let max_m = *self.m_values.iter().max().expect("non-empty");
        if self.trials_per_distance < max_m {
            return cfg_err(format!(
                "{} trials per distance cannot fill one batch of M = {max_m}",
                self.trials_per_distance
            ));
        }
        if let Some(s) = self.snr_points_db.iter().find(|s| s.is_nan() || **s == f64::NEG_INFINITY) {
            return cfg_err(format!("invalid SNR point {s}"));
        }
        if !(self.drift_ppm.is_finite() && self.hardware_delay_s >= 0.0 && self.ta_jitter_std_s >= 0.0) {
            return cfg_err("drift, hardware delay and TA jitter must be finite and non-negative".into());
        }
        let timing = self.system.timing()?;
        let max_rtt = ta_to_rtt(TaCode(timing.ta_cap()), &timing)?;
        for &d in &self.distances_m {
            if !(d.is_finite() && d >= 0.0) {
                return cfg_err(format!("invalid distance {d} m"));
            }
            if range_to_rtt(d) + self.hardware_delay_s > max_rtt {
                return cfg_err(format!("distance {d} m is beyond the TA range"));
            }
        }
        Ok(())
    }
}

/// SNR lists with non-finite entries written as the strings `"inf"` /
/// `"-inf"` so they survive JSON.
pub(crate) mod snr_list {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Point {
        Num(f64),
        Text(String),
    }

    pub(crate) fn to_point(v: f64) -> impl Serialize {
        if v.is_finite() {
            Point::Num(v)
        } else {
            Point::Text(label(v))
        }
    }

    pub(crate) fn label(v: f64) -> String {
        if v == f64::INFINITY {
            "inf".into()
        } else if v == f64::NEG_INFINITY {
            "-inf".into()
        } else {
            v.to_string()
        }
    }

    pub(crate) fn parse(s: &str) -> Option<f64> {
        match s.trim().to_ascii_lowercase().as_str() {
            "inf" | "+inf" | "infinity" => Some(f64::INFINITY),
            "-inf" | "-infinity" => Some(f64::NEG_INFINITY),
            other => other.parse().ok(),
        }
    }

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(|&x| to_point(x)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<Point>::deserialize(d)?
            .into_iter()
            .map(|p| match p {
                Point::Num(v) => Ok(v),
                Point::Text(t) => parse(&t).ok_or_else(|| serde::de::Error::custom(format!("bad SNR '{t}'"))),
            })
            .collect()
    }
}
