//! Refined RTT / range estimation from a batch of coarse-RTT-tagged SRS
//! channel estimates.
//!
//! * [`matched_filter_rtt`] combines the batch coherently: each estimate is
//!   rotated by its own coarse RTT before the per-measurement matched filter
//!   energies are averaged, so TA updates between occasions do not smear the
//!   peak.
//! * [`peak_detector_range`] is the per-measurement IDFT peak baseline,
//!   averaged over the batch.
//! * [`snr_estimate`] reports the uplink SNR implied by a batch.

mod mf;
mod pd;
mod snr;

use serde::{Deserialize, Serialize};

pub use mf::{
    matched_filter_rtt, matched_filter_rtt_uncompensated, mf_objective, mf_objective_uncompensated,
    steering_vector, MfSearchGrid, Refinement,
};
pub use pd::peak_detector_range;
pub use snr::snr_estimate;

use crate::channel::Measurement;
use crate::error::{Error, Result};
use crate::numerology::SPEED_OF_LIGHT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// Matched filter.
    Mf,
    /// Peak detector.
    Pd,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Mf => "mf",
            Method::Pd => "pd",
        }
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mf" => Ok(Method::Mf),
            "pd" => Ok(Method::Pd),
            other => Err(Error::Parameter(format!("unknown method '{other}'"))),
        }
    }
}

/// Refined RTT and the corresponding one-way range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeEstimate {
    pub rtt: f64,
    /// `rtt * c / 2`.
    pub range_m: f64,
    pub method: Method,
    /// Matched-filter peak value; `None` for the peak detector.
    pub objective: Option<f64>,
    pub m_used: usize,
    /// The peak sat on the edge of the search window.
    pub boundary: bool,
}

impl RangeEstimate {
    pub(crate) fn from_rtt(rtt: f64, method: Method, objective: Option<f64>, m_used: usize, boundary: bool) -> Self {
        Self {
            rtt,
            range_m: rtt * SPEED_OF_LIGHT / 2.0,
            method,
            objective,
            m_used,
            boundary,
        }
    }
}

/// Checks the batch is non-empty and every estimate shares one grid and mask.
/// Returns the sounded bin indices.
pub(crate) fn check_batch(batch: &[Measurement]) -> Result<Vec<usize>> {
    let first = batch
        .first()
        .ok_or_else(|| Error::Parameter("empty measurement batch".into()))?;
    let mask = &first.estimate.mask;
    if first.estimate.h_hat.len() != mask.len() {
        return Err(Error::Parameter("estimate and mask lengths differ".into()));
    }
    for (i, m) in batch.iter().enumerate().skip(1) {
        if m.estimate.mask != *mask || m.estimate.h_hat.len() != mask.len() {
            return Err(Error::Parameter(format!(
                "measurement {i} does not share the sounded-bin mask of measurement 0"
            )));
        }
    }
    let sounded: Vec<usize> = first.estimate.sounded_indices().collect();
    if sounded.is_empty() {
        return Err(Error::Parameter("mask has no sounded bins".into()));
    }
    Ok(sounded)
}
