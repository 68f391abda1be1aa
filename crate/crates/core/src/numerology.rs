//! NR timing constants and conversions between timing-advance codes,
//! round-trip time and range.
//!
//! The coarse RTT carried by a TA code is
//! `TA * 16 * 64 / 2^mu * Tc` with `Tc = 1 / (480 kHz * 4096)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Rounded speed of light used when reproducing the commonly quoted
/// 39.0625 m TA resolution.
pub const SPEED_OF_LIGHT_ROUNDED: f64 = 3.0e8;

/// Maximum subcarrier spacing, Hz.
pub const MAX_SUBCARRIER_SPACING: f64 = 480e3;

/// Maximum FFT size.
pub const MAX_FFT_SIZE: u32 = 4096;

/// Largest TA code that fits the 12-bit RAR timing advance command.
pub const DEFAULT_TA_CAP: u32 = 3846;

/// Basic NR time unit `Tc`, seconds.
pub const TC: f64 = 1.0 / (480_000.0 * 4096.0);

/// How a propagation delay is turned into a range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeConvention {
    /// `c = 299 792 458 m/s`.
    #[default]
    Exact,
    /// `c = 3e8 m/s`.
    PaperCompat,
}

impl RangeConvention {
    pub fn speed_of_light(self) -> f64 {
        match self {
            RangeConvention::Exact => SPEED_OF_LIGHT,
            RangeConvention::PaperCompat => SPEED_OF_LIGHT_ROUNDED,
        }
    }
}

/// Rounding used when the gNB turns a measured RTT into a TA code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaRounding {
    #[default]
    HalfUp,
    Floor,
}

/// Numerology-dependent timing quantities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NrTiming {
    mu: u8,
    delta_f: f64,
    slot_duration: f64,
    ta_cap: u32,
}

impl NrTiming {
    /// Timing for numerology `mu` (0..=5) with the default TA cap.
    pub fn new(mu: u8) -> Result<Self> {
        Self::with_ta_cap(mu, DEFAULT_TA_CAP)
    }

    pub fn with_ta_cap(mu: u8, ta_cap: u32) -> Result<Self> {
        if mu > 5 {
            return Err(Error::Parameter(format!("numerology {mu} outside 0..=5")));
        }
        let scale = f64::from(1u32 << mu);
        Ok(Self {
            mu,
            delta_f: 15_000.0 * scale,
            slot_duration: 1e-3 / scale,
            ta_cap,
        })
    }

    pub fn mu(&self) -> u8 {
        self.mu
    }

    /// Subcarrier spacing in Hz.
    pub fn delta_f(&self) -> f64 {
        self.delta_f
    }

    /// Basic time unit in seconds.
    pub fn tc(&self) -> f64 {
        TC
    }

    pub fn slot_duration(&self) -> f64 {
        self.slot_duration
    }

    pub fn ta_cap(&self) -> u32 {
        self.ta_cap
    }

    /// RTT carried by one TA code step, `16 * 64 / 2^mu * Tc`.
    pub fn ta_step(&self) -> f64 {
        // Kept as a single division so that the step for mu=1 is exactly 512*Tc.
        1024.0 / (f64::from(1u32 << self.mu) * 1_966_080_000.0)
    }
}

/// A timing advance code as signalled in the RAR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TaCode(pub u32);

impl TaCode {
    pub fn value(self) -> u32 {
        self.0
    }
}

/// Coarse RTT in seconds for a TA code.
pub fn ta_to_rtt(ta: TaCode, timing: &NrTiming) -> Result<f64> {
    if ta.0 > timing.ta_cap {
        return Err(Error::Range(format!(
            "TA code {} exceeds cap {}",
            ta.0, timing.ta_cap
        )));
    }
    Ok(f64::from(ta.0) * 1024.0 / (f64::from(1u32 << timing.mu) * 1_966_080_000.0))
}

/// One-way range for a round-trip time, using the exact speed of light.
pub fn rtt_to_range(rtt: f64) -> Result<f64> {
    rtt_to_range_with(rtt, RangeConvention::Exact)
}

pub fn rtt_to_range_with(rtt: f64, convention: RangeConvention) -> Result<f64> {
    if !(rtt >= 0.0) || !rtt.is_finite() {
        return Err(Error::Domain(format!("RTT must be finite and >= 0, got {rtt}")));
    }
    Ok(rtt * convention.speed_of_light() / 2.0)
}

/// Round-trip time for a one-way distance (exact speed of light).
pub fn range_to_rtt(range_m: f64) -> f64 {
    2.0 * range_m / SPEED_OF_LIGHT
}

/// TA code the gNB would signal for a measured RTT.
pub fn quantize_rtt_to_ta(rtt: f64, timing: &NrTiming, rounding: TaRounding) -> Result<TaCode> {
    if !(rtt >= 0.0) || !rtt.is_finite() {
        return Err(Error::Domain(format!("RTT must be finite and >= 0, got {rtt}")));
    }
    let steps = rtt / timing.ta_step();
    let code = match rounding {
        TaRounding::HalfUp => (steps + 0.5).floor(),
        TaRounding::Floor => steps.floor(),
    };
    if code > f64::from(timing.ta_cap) {
        return Err(Error::Range(format!(
            "RTT {rtt:e} s maps to TA code {code} above cap {}",
            timing.ta_cap
        )));
    }
    Ok(TaCode(code as u32))
}
