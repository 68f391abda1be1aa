//! Round-trip-time ranging for 5G NR from coarse timing advance plus
//! coherently combined SRS channel estimates.
//!
//! Layers, bottom up: [`numerology`] (timing constants and TA conversions),
//! [`srs`] (pilots and LS estimation), [`channel`] (LoS link, AWGN, clock
//! drift), [`estimators`] (matched filter, peak detector, SNR),
//! [`signaling`] (DCI trigger and session state machine) and [`harness`]
//! (Monte Carlo CDFs). [`capture`] handles file formats.

pub mod capture;
pub mod channel;
mod dsp;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod numerology;
pub mod signaling;
pub mod srs;
pub mod system;

pub use dsp::pairwise_sum;
pub use error::{Error, Result};
pub use system::SystemConfig;
