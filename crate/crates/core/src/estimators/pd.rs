use num_complex::Complex64;

use super::{check_batch, Method, RangeEstimate};
use crate::channel::Measurement;
use crate::dsp::{first_argmax, inverse_plan};
use crate::error::{Error, Result};
use crate::numerology::SPEED_OF_LIGHT;
use crate::system::SystemConfig;

/// Peak-detector baseline.
///
/// Each estimate goes through a size-`K` inverse DFT; the integer time bin of
/// the largest magnitude inside the unaliased window `[0, K / Kc)` is taken
/// and the bins are averaged over the batch:
/// `d = c / (2 fs M) * sum_m argmax_m`, `fs = K * delta_f`.
///
/// With `compensate_coarse` each estimate is first rotated by its coarse RTT,
/// so the bins measure the full RTT. Without it the bins measure only the
/// residual delay and the common coarse RTT is added back, which requires
/// every measurement in the batch to carry the same TA.
pub fn peak_detector_range(batch: &[Measurement], compensate_coarse: bool, system: &SystemConfig) -> Result<RangeEstimate> {
    let sounded = check_batch(batch)?;
    let k = batch[0].estimate.h_hat.len();
    let comb = system.comb_size.max(1);
    let window = k / comb;
    if window == 0 {
        return Err(Error::Parameter("FFT size smaller than comb size".into()));
    }
    let delta_f = system.delta_f();
    let fs = k as f64 * delta_f;

    let coarse = batch[0].tau_r;
    if !compensate_coarse && batch.iter().any(|m| m.tau_r != coarse) {
        return Err(Error::Parameter(
            "uncompensated peak detection needs a common coarse RTT across the batch".into(),
        ));
    }

    let plan = inverse_plan(k);
    let mut buf = vec![Complex64::new(0.0, 0.0); k];
    let mut bins = 0usize;
    for m in batch {
        buf.iter_mut().for_each(|b| *b = Complex64::new(0.0, 0.0));
        for &idx in &sounded {
            let h = m.estimate.h_hat[idx];
            buf[idx] = if compensate_coarse {
                h * Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * (idx as f64 * delta_f * m.tau_r).fract())
            } else {
                h
            };
        }
        plan.process(&mut buf);
        bins += first_argmax(buf[..window].iter().map(|v| v.norm())).unwrap_or(0);
    }

    let mut range = SPEED_OF_LIGHT * bins as f64 / (2.0 * fs * batch.len() as f64);
    if !compensate_coarse {
        range += coarse * SPEED_OF_LIGHT / 2.0;
    }
    Ok(RangeEstimate::from_rtt(
        2.0 * range / SPEED_OF_LIGHT,
        Method::Pd,
        None,
        batch.len(),
        false,
    ))
}
