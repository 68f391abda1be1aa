//! Air-interface parameters of the simulated link.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerology::{NrTiming, DEFAULT_TA_CAP};
use crate::srs::SrsConfig;

/// NR numerology and RF parameters. Defaults describe a 40 MHz, 30 kHz
/// SCS carrier at 3.69 GHz with a comb-2 SRS over 37.44 MHz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub numerology: u8,
    pub system_bandwidth_hz: f64,
    pub carrier_frequency_hz: f64,
    pub sampling_rate_hz: f64,
    pub fft_size: usize,
    pub cp_samples: usize,
    pub ssb_bandwidth_hz: f64,
    pub srs_bandwidth_hz: f64,
    pub comb_size: usize,
    pub comb_offset: usize,
    pub zc_root: u32,
    pub ta_cap: u32,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            numerology: 1,
            system_bandwidth_hz: 38.16e6,
            carrier_frequency_hz: 3.69e9,
            sampling_rate_hz: 46.08e6,
            fft_size: 1536,
            cp_samples: 132,
            ssb_bandwidth_hz: 7.2e6,
            srs_bandwidth_hz: 37.44e6,
            comb_size: 2,
            comb_offset: 0,
            zc_root: 1,
            ta_cap: DEFAULT_TA_CAP,
        }
    }
}

impl SystemConfig {
    pub fn timing(&self) -> Result<NrTiming> {
        NrTiming::with_ta_cap(self.numerology, self.ta_cap)
    }

    pub fn delta_f(&self) -> f64 {
        15_000.0 * f64::from(1u32 << self.numerology.min(5))
    }

    /// Cyclic prefix length in seconds.
    pub fn cp_duration(&self) -> f64 {
        self.cp_samples as f64 / self.sampling_rate_hz
    }

    /// Number of subcarriers spanned by the SRS, including comb gaps.
    pub fn srs_span(&self) -> usize {
        (self.srs_bandwidth_hz / self.delta_f()).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let timing = self.timing().map_err(|e| Error::Config(e.to_string()))?;
        let fs = self.fft_size as f64 * timing.delta_f();
        if (fs - self.sampling_rate_hz).abs() > 1e-6 * fs {
            return Err(Error::Config(format!(
                "sampling rate {} Hz differs from fft_size * delta_f = {fs} Hz",
                self.sampling_rate_hz
            )));
        }
        if self.srs_bandwidth_hz > self.system_bandwidth_hz {
            return Err(Error::Config(format!(
                "SRS bandwidth {} Hz exceeds system bandwidth {} Hz",
                self.srs_bandwidth_hz, self.system_bandwidth_hz
            )));
        }
        if self.system_bandwidth_hz > fs {
            return Err(Error::Config("system bandwidth exceeds sampling rate".into()));
        }
        let span = self.srs_bandwidth_hz / timing.delta_f();
        if (span - span.round()).abs() > 1e-6 || span < 1.0 {
            return Err(Error::Config(format!(
                "SRS bandwidth is not a whole number of subcarriers ({span})"
            )));
        }
        if self.comb_size == 0 || self.srs_span() % self.comb_size != 0 {
            return Err(Error::Config(format!(
                "SRS span {} not divisible by comb size {}",
                self.srs_span(),
                self.comb_size
            )));
        }
        if self.comb_offset >= self.comb_size {
            return Err(Error::Config("comb_offset must be < comb_size".into()));
        }
        if self.cp_samples >= self.fft_size {
            return Err(Error::Config("cyclic prefix longer than the symbol".into()));
        }
        self.srs_config().map(|_| ())
    }

    /// SRS layout with the sounded band centred in the FFT grid.
    pub fn srs_config(&self) -> Result<SrsConfig> {
        let span = self.srs_span();
        if span > self.fft_size {
            return Err(Error::Config("SRS span exceeds FFT size".into()));
        }
        let cfg = SrsConfig {
            fft_size: self.fft_size,
            comb_size: self.comb_size,
            comb_offset: self.comb_offset,
            first_subcarrier: (self.fft_size - span) / 2,
            num_sounded: span / self.comb_size.max(1),
            zc_root: self.zc_root,
        };
        cfg.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }
}
