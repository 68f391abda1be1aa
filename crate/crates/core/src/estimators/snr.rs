use num_complex::Complex64;

use super::{check_batch, matched_filter_rtt, MfSearchGrid};
use crate::channel::Measurement;
use crate::dsp::pairwise_sum;
use crate::error::Result;
use crate::system::SystemConfig;

/// Ratios above this are indistinguishable from rounding noise.
const NOISELESS_SNR: f64 = 1e20;

/// Per-subcarrier uplink SNR in dB implied by a batch.
///
/// The matched-filter RTT fixes the phase ramp, a lag-one correlation
/// removes what is left of it, and each estimate is then split into its mean
/// (signal) and the scatter around it (noise). Returns `+inf` for a noiseless
/// batch.
pub fn snr_estimate(batch: &[Measurement], system: &SystemConfig) -> Result<f64> {
    let sounded = check_batch(batch)?;
    let delta_f = system.delta_f();
    let grid = MfSearchGrid::default_for(batch, system)?;
    let tau = matched_filter_rtt(batch, &grid, system)?.rtt;

    let dephased: Vec<Vec<Complex64>> = batch
        .iter()
        .map(|m| {
            sounded
                .iter()
                .map(|&k| {
                    let cycles = (k as f64 * delta_f * (tau - m.tau_r)).fract();
                    m.estimate.h_hat[k] * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * cycles)
                })
                .collect()
        })
        .collect();

    // Residual slope per sounded-bin step.
    let lag1: Complex64 = dephased
        .iter()
        .flat_map(|z| z.windows(2).map(|w| w[1] * w[0].conj()))
        .sum();
    let slope = lag1.arg();

    let n = sounded.len() as f64;
    let mut signal = Vec::with_capacity(batch.len());
    let mut noise = Vec::with_capacity(batch.len());
    for z in &dephased {
        let flat: Vec<Complex64> = z
            .iter()
            .enumerate()
            .map(|(i, v)| v * Complex64::from_polar(1.0, -slope * i as f64))
            .collect();
        let mean = flat.iter().sum::<Complex64>() / n;
        signal.push(mean.norm_sqr());
        let scatter: Vec<f64> = flat.iter().map(|v| (v - mean).norm_sqr()).collect();
        noise.push(pairwise_sum(&scatter) / (n - 1.0));
    }
    let m = batch.len() as f64;
    let noise_power = pairwise_sum(&noise) / m;
    let signal_power = pairwise_sum(&signal) / m - noise_power / n;

    if noise_power <= 0.0 || signal_power / noise_power > NOISELESS_SNR {
        return Ok(f64::INFINITY);
    }
    if signal_power <= 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    Ok(10.0 * (signal_power / noise_power).log10())
}
