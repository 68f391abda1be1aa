//! Monte Carlo range-error experiments.
//!
//! For every SNR point and distance one signaling session produces
//! `trials_per_distance` measurements. They are cut into disjoint,
//! contiguous batches of M and each batch is ranged with the matched filter
//! and the peak detector. Absolute range errors are pooled over distances
//! into one CDF per (method, SNR, M).

mod cdf;
mod config;
mod output;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use cdf::{empirical_cdf, CdfTable};
pub use config::{ExperimentConfig, DESK_TRIALS, FULL_TRIALS};
pub use output::{read_cdf_csv, read_manifest, result_file_name, write_results, Manifest, VERSION};

use crate::channel::{ClockDriftModel, CorrectionPolicy, Measurement};
use crate::error::{Error, Result};
use crate::estimators::{matched_filter_rtt, peak_detector_range, snr_estimate, Method, MfSearchGrid};
use crate::numerology::{SPEED_OF_LIGHT, TaRounding};
use crate::signaling::{run_rtt_session, Scenario, SessionConfig, SessionMode};
use crate::system::SystemConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultEntry {
    pub method: Method,
    pub snr_db: f64,
    pub m: usize,
    pub cdf: CdfTable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResults {
    pub config: ExperimentConfig,
    /// In config order: SNR, then M, then method (MF before PD).
    pub entries: Vec<ResultEntry>,
    /// `(configured, estimated)` uplink SNR per SNR point.
    pub estimated_snr_db: Vec<(f64, f64)>,
}

impl ExperimentResults {
    pub fn get(&self, method: Method, snr_db: f64, m: usize) -> Option<&CdfTable> {
        self.entries
            .iter()
            .find(|e| e.method == method && e.snr_db == snr_db && e.m == m)
            .map(|e| &e.cdf)
    }
}

/// Session layout used by the harness for `mode`.
pub fn session_config(mode: SessionMode, rounds: usize) -> SessionConfig {
    match mode {
        SessionMode::Proposed => SessionConfig::proposed(rounds),
        SessionMode::Phytest => SessionConfig::phytest(rounds),
    }
}

/// Known RTT offset removed before computing errors: the hardware delay plus
/// the drift accumulated between the UE's timing correction and its SRS.
pub fn calibration_offset(cfg: &ExperimentConfig, session: &SessionConfig) -> Result<f64> {
    let slot = cfg.system.timing()?.slot_duration();
    Ok(cfg.hardware_delay_s + cfg.drift_ppm * 1e-6 * session.trigger_to_srs_slots() as f64 * slot)
}

fn scenario(cfg: &ExperimentConfig, distance_m: f64, snr_db: f64) -> Scenario {
    Scenario {
        distance_m,
        hardware_delay_s: cfg.hardware_delay_s,
        snr_db,
        drift: ClockDriftModel {
            drift_ppm: cfg.drift_ppm,
            correction_policy: CorrectionPolicy::OnDci,
            initial_error: 0.0,
        },
        ta_jitter_std_s: cfg.ta_jitter_std_s,
        ta_rounding: TaRounding::HalfUp,
        ..Scenario::default()
    }
}

/// Measurements of one (SNR, distance) cell. `index` selects the generator
/// seed `base_seed ^ index`.
pub fn cell_measurements(cfg: &ExperimentConfig, distance_m: f64, snr_db: f64, index: u64) -> Result<Vec<Measurement>> {
    let session = session_config(cfg.mode, cfg.trials_per_distance);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.base_seed ^ index);
    let trace = run_rtt_session(&session, &scenario(cfg, distance_m, snr_db), &cfg.system, &mut rng)?;
    Ok(trace.measurements)
}

/// Absolute range error of each estimator on one batch, after calibration.
pub fn batch_errors(batch: &[Measurement], true_range_m: f64, offset_s: f64, system: &SystemConfig) -> Result<(f64, f64)> {
    let offset_m = offset_s * SPEED_OF_LIGHT / 2.0;
    let grid = MfSearchGrid::default_for(batch, system)?;
    let mf = matched_filter_rtt(batch, &grid, system)?;
    let pd = peak_detector_range(batch, true, system)?;
    Ok((
        (mf.range_m - offset_m - true_range_m).abs(),
        (pd.range_m - offset_m - true_range_m).abs(),
    ))
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResults> {
    cfg.validate()?;
    let session = session_config(cfg.mode, cfg.trials_per_distance);
    session.validate().map_err(|e| Error::Config(e.to_string()))?;
    let offset = calibration_offset(cfg, &session)?;
    let max_m = *cfg.m_values.iter().max().expect("validated");

    let mut entries = Vec::new();
    let mut estimated = Vec::new();
    for (si, &snr) in cfg.snr_points_db.iter().enumerate() {
        // errors[m index][method index]
        let mut errors = vec![[Vec::new(), Vec::new()]; cfg.m_values.len()];
        for (di, &d) in cfg.distances_m.iter().enumerate() {
            let index = (si * cfg.distances_m.len() + di) as u64;
            let pool = cell_measurements(cfg, d, snr, index)?;
            if di == 0 {
                estimated.push((snr, snr_estimate(&pool[..max_m], &cfg.system)?));
            }
            for (mi, &m) in cfg.m_values.iter().enumerate() {
                for batch in pool.chunks_exact(m) {
                    let (mf, pd) = batch_errors(batch, d, offset, &cfg.system)?;
                    errors[mi][0].push(mf);
                    errors[mi][1].push(pd);
                }
            }
        }
        for (mi, &m) in cfg.m_values.iter().enumerate() {
            for (j, method) in [Method::Mf, Method::Pd].into_iter().enumerate() {
                entries.push(ResultEntry {
                    method,
                    snr_db: snr,
                    m,
                    cdf: empirical_cdf(&errors[mi][j])?,
                });
            }
        }
    }
    Ok(ExperimentResults {
        config: cfg.clone(),
        entries,
        estimated_snr_db: estimated,
    })
}
