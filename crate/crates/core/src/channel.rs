//! Synthetic uplink observations: LoS frequency response, AWGN, TA
//! quantization residue and UE clock drift.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerology::{ta_to_rtt, NrTiming, TaCode};
use crate::srs::{build_pilots, ls_estimate, ChannelEstimateVec, PilotGrid, SrsConfig};
use crate::system::SystemConfig;

/// Single-path channel `h[k] = alpha * exp(-j 2 pi k delta_f tau)`.
///
/// `tau` is the RTT-domain misalignment seen by the gNB. A negative value
/// means the SRS arrived early (TA rounded up past the true RTT).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LosChannelParams {
    pub tau: f64,
    pub alpha: Complex64,
    pub carrier_hz: f64,
    pub delta_f: f64,
}

impl LosChannelParams {
    /// Channel whose gain carries the physical carrier phase
    /// `path_gain * exp(-j 2 pi f_c tau)`.
    pub fn with_carrier_phase(tau: f64, path_gain: f64, carrier_hz: f64, delta_f: f64) -> Self {
        Self {
            tau,
            alpha: Complex64::from_polar(path_gain, -2.0 * PI * (carrier_hz * tau).fract()),
            carrier_hz,
            delta_f,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.tau.is_finite() {
            return Err(Error::Domain("channel delay must be finite".into()));
        }
        if !(self.alpha.norm() > 0.0) || !self.alpha.norm().is_finite() {
            return Err(Error::Domain("channel gain must be non-zero and finite".into()));
        }
        if !(self.delta_f > 0.0) {
            return Err(Error::Domain("subcarrier spacing must be positive".into()));
        }
        Ok(())
    }
}

/// Frequency response on bins `0..k`.
pub fn los_response(params: &LosChannelParams, k: usize) -> Vec<Complex64> {
    (0..k)
        .map(|n| params.alpha * phase_ramp(n, params.delta_f, params.tau))
        .collect()
}

/// `exp(-j 2 pi k delta_f tau)` with the cycle count reduced before
/// taking the phase, so that large `k * delta_f * tau` keeps precision.
pub(crate) fn phase_ramp(k: usize, delta_f: f64, tau: f64) -> Complex64 {
    let cycles = (k as f64 * delta_f * tau).fract();
    Complex64::from_polar(1.0, -2.0 * PI * cycles)
}

/// Adds circularly-symmetric complex Gaussian noise to the non-zero bins of
/// `signal` so that their mean SNR equals `snr_db`. `+inf` means noiseless.
pub fn apply_awgn<R: Rng + ?Sized>(signal: &[Complex64], snr_db: f64, rng: &mut R) -> Result<Vec<Complex64>> {
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(Error::Domain(format!("invalid SNR {snr_db} dB")));
    }
    let occupied = signal.iter().filter(|s| s.norm_sqr() > 0.0).count();
    if occupied == 0 {
        return Err(Error::Domain("SNR undefined for an all-zero signal".into()));
    }
    if snr_db == f64::INFINITY {
        return Ok(signal.to_vec());
    }
    let p_sig = signal.iter().map(|s| s.norm_sqr()).sum::<f64>() / occupied as f64;
    let sigma2 = p_sig / 10f64.powf(snr_db / 10.0);
    let scale = (sigma2 / 2.0).sqrt();
    Ok(signal
        .iter()
        .map(|&s| {
            if s.norm_sqr() > 0.0 {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                s + Complex64::new(re, im) * scale
            } else {
                s
            }
        })
        .collect())
}

/// When the UE re-aligns its downlink timing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorrectionPolicy {
    /// On every positioning trigger (DCI, or SSB in phy-test mode).
    OnDci,
    /// Implementation-specific periodic correction. A check happens every
    /// `interval_s`; the timing is corrected only if the accumulated error
    /// exceeds `residual_threshold_s`.
    Periodic {
        interval_s: f64,
        residual_threshold_s: f64,
    },
}

impl CorrectionPolicy {
    /// Legacy UE behaviour: correct every 320 ms regardless of error.
    pub fn legacy() -> Self {
        CorrectionPolicy::Periodic {
            interval_s: 0.32,
            residual_threshold_s: 0.0,
        }
    }
}

/// UE clock frequency offset relative to the gNB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClockDriftModel {
    pub drift_ppm: f64,
    pub correction_policy: CorrectionPolicy,
    /// Timing error before the first correction, seconds.
    pub initial_error: f64,
}

impl Default for ClockDriftModel {
    fn default() -> Self {
        Self {
            drift_ppm: 2.0,
            correction_policy: CorrectionPolicy::OnDci,
            initial_error: 0.0,
        }
    }
}

impl ClockDriftModel {
    pub fn none() -> Self {
        Self {
            drift_ppm: 0.0,
            ..Self::default()
        }
    }

    pub fn slope(&self) -> f64 {
        self.drift_ppm * 1e-6
    }
}

/// Accumulated UE timing error at `t`, given the sorted instants at which the
/// UE corrected its timing. The error grows linearly and resets at each
/// correction.
pub fn drift_error(t: f64, model: &ClockDriftModel, correction_times: &[f64]) -> f64 {
    let idx = correction_times.partition_point(|&c| c <= t);
    if idx == 0 {
        model.initial_error + model.slope() * t
    } else {
        model.slope() * (t - correction_times[idx - 1])
    }
}

/// Correction instants of a threshold/periodic policy evaluated at
/// `check_times` (ascending). Returns an empty list for [`CorrectionPolicy::OnDci`].
pub fn periodic_corrections(model: &ClockDriftModel, check_times: impl IntoIterator<Item = f64>) -> Vec<f64> {
    let threshold = match model.correction_policy {
        CorrectionPolicy::OnDci => return Vec::new(),
        CorrectionPolicy::Periodic {
            residual_threshold_s,
            ..
        } => residual_threshold_s,
    };
    let mut out = Vec::new();
    for t in check_times {
        if drift_error(t, model, &out).abs() > threshold {
            out.push(t);
        }
    }
    out
}

/// Drift model together with the correction instants realised in a session.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DriftTimeline {
    pub model: ClockDriftModel,
    pub corrections: Vec<f64>,
}

impl DriftTimeline {
    pub fn new(model: ClockDriftModel) -> Self {
        Self {
            model,
            corrections: Vec::new(),
        }
    }

    pub fn error_at(&self, t: f64) -> f64 {
        drift_error(t, &self.model, &self.corrections)
    }

    /// Records a correction at `t`; out-of-order instants are ignored.
    pub fn correct_at(&mut self, t: f64) {
        if self.corrections.last().is_none_or(|&last| t > last) {
            self.corrections.push(t);
        }
    }
}

/// Carrier phase of the path gain for each SRS occasion.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum CarrierPhase {
    /// Uniform in `[0, 2 pi)` per occasion.
    #[default]
    Random,
    /// `exp(-j 2 pi f_c tau)` for the occasion's residual delay.
    Physical,
    /// Fixed phase in radians.
    Fixed(f64),
}

/// One SRS observation at the gNB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub estimate: ChannelEstimateVec,
    /// Coarse RTT from the TA code, seconds.
    pub tau_r: f64,
    pub ta_code: TaCode,
    pub slot_time: f64,
    /// Ground-truth RTT (simulation only).
    pub true_rtt: f64,
    /// Residual delay fell more than one cyclic prefix away from alignment.
    pub outside_cp: bool,
}

/// Everything needed to synthesise SRS observations for one link.
#[derive(Debug, Clone)]
pub struct LinkModel {
    pub system: SystemConfig,
    pub timing: NrTiming,
    pub srs: SrsConfig,
    pub pilots: PilotGrid,
    pub phase: CarrierPhase,
    pub path_gain: f64,
}

impl LinkModel {
    pub fn new(system: &SystemConfig) -> Result<Self> {
        system.validate()?;
        let srs = system.srs_config()?;
        Ok(Self {
            timing: system.timing()?,
            pilots: build_pilots(&srs)?,
            srs,
            system: system.clone(),
            phase: CarrierPhase::Random,
            path_gain: 1.0,
        })
    }

    pub fn with_phase(mut self, phase: CarrierPhase) -> Self {
        self.phase = phase;
        self
    }

    /// Synthesises the SRS seen at time `t` for a UE at `true_rtt` that
    /// applied `ta_code`, and returns its LS estimate.
    pub fn simulate_measurement<R: Rng + ?Sized>(
        &self,
        true_rtt: f64,
        ta_code: TaCode,
        snr_db: f64,
        t: f64,
        drift: &DriftTimeline,
        rng: &mut R,
    ) -> Result<Measurement> {
        let tau_r = ta_to_rtt(ta_code, &self.timing)?;
        let residual = true_rtt - tau_r + drift.error_at(t);
        let delta_f = self.timing.delta_f();
        let alpha = match self.phase {
            CarrierPhase::Random => Complex64::from_polar(self.path_gain, rng.random::<f64>() * 2.0 * PI),
            CarrierPhase::Physical => {
                LosChannelParams::with_carrier_phase(residual, self.path_gain, self.system.carrier_frequency_hz, delta_f)
                    .alpha
            }
            CarrierPhase::Fixed(phi) => Complex64::from_polar(self.path_gain, phi),
        };
        let params = LosChannelParams {
            tau: residual,
            alpha,
            carrier_hz: self.system.carrier_frequency_hz,
            delta_f,
        };
        params.validate()?;
        let h = los_response(&params, self.srs.fft_size);
        let clean: Vec<Complex64> = h.iter().zip(&self.pilots.symbols).map(|(h, s)| h * s).collect();
        let y = apply_awgn(&clean, snr_db, rng)?;
        let mut estimate = ls_estimate(&y, &self.pilots, t)?;
        estimate.enforce_mask();
        Ok(Measurement {
            estimate,
            tau_r,
            ta_code,
            slot_time: t,
            true_rtt,
            outside_cp: residual.abs() > self.system.cp_duration(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerology::range_to_rtt;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn naive_idft(x: &[Complex64]) -> Vec<Complex64> {
        let n = x.len();
        (0..n)
            .map(|t| {
                (0..n)
                    .map(|k| x[k] * Complex64::from_polar(1.0, 2.0 * PI * (k * t % n) as f64 / n as f64))
                    .sum::<Complex64>()
                    / n as f64
            })
            .collect()
    }

    #[test]
    fn flat_channel_at_zero_delay() {
        let alpha = Complex64::new(0.3, -0.4);
        let p = LosChannelParams {
            tau: 0.0,
            alpha,
            carrier_hz: 3.69e9,
            delta_f: 30e3,
        };
        let h = los_response(&p, 64);
        assert!(h.iter().all(|&v| (v - alpha).norm() < 1e-15));
    }

    #[test]
    fn unit_modulus_ramp() {
        let p = LosChannelParams::with_carrier_phase(123e-9, 0.7, 3.69e9, 30e3);
        assert!(los_response(&p, 1536).iter().all(|v| (v.norm() - 0.7).abs() < 1e-12));
    }

    #[test]
    fn one_sample_delay_peaks_at_bin_one() {
        let k = 64;
        let df = 30e3;
        let p = LosChannelParams {
            tau: 1.0 / (k as f64 * df),
            alpha: Complex64::new(1.0, 0.0),
            carrier_hz: 0.0,
            delta_f: df,
        };
        let h = los_response(&p, k);
        for n in 1..k {
            let dphi = (h[n] * h[n - 1].conj()).arg();
            assert!((dphi + 2.0 * PI / k as f64).abs() < 1e-12);
        }
        let t = naive_idft(&h);
        let peak = (0..k).max_by(|&a, &b| t[a].norm().total_cmp(&t[b].norm())).unwrap();
        assert_eq!(peak, 1);
        assert!((t[1].norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn awgn_noiseless_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)];
        assert_eq!(apply_awgn(&s, f64::INFINITY, &mut rng).unwrap(), s);
    }

    #[test]
    fn awgn_power_at_zero_db() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 100_000;
        let s: Vec<_> = (0..n).map(|i| Complex64::from_polar(1.0, i as f64 * 0.37)).collect();
        let y = apply_awgn(&s, 0.0, &mut rng).unwrap();
        let p: f64 = y.iter().zip(&s).map(|(y, s)| (y - s).norm_sqr()).sum::<f64>() / n as f64;
        assert!((p - 1.0).abs() < 0.05, "noise power {p}");
    }

    #[test]
    fn awgn_only_on_occupied_bins() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s: Vec<_> = (0..100)
            .map(|i| if i % 2 == 0 { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) })
            .collect();
        let y = apply_awgn(&s, 10.0, &mut rng).unwrap();
        assert!(y.iter().skip(1).step_by(2).all(|v| v.norm() == 0.0));
    }

    #[test]
    fn awgn_deterministic_and_zero_signal() {
        let s = vec![Complex64::new(1.0, 1.0); 32];
        let a = apply_awgn(&s, 5.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = apply_awgn(&s, 5.0, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        let z = vec![Complex64::new(0.0, 0.0); 8];
        assert!(matches!(apply_awgn(&z, 5.0, &mut ChaCha8Rng::seed_from_u64(9)), Err(Error::Domain(_))));
    }

    #[test]
    fn drift_examples() {
        let model = ClockDriftModel {
            drift_ppm: 1.0,
            correction_policy: CorrectionPolicy::OnDci,
            initial_error: 0.0,
        };
        let corr = [0.5, 2.0];
        assert_eq!(drift_error(0.5, &model, &corr), 0.0);
        assert_eq!(drift_error(2.0, &model, &corr), 0.0);
        assert!((drift_error(1.5, &model, &corr) - 1e-6).abs() < 1e-18);
        let none = ClockDriftModel::none();
        assert_eq!(drift_error(10.0, &none, &corr), 0.0);
        let init = ClockDriftModel {
            initial_error: 5e-9,
            ..model
        };
        assert!((drift_error(0.25, &init, &corr) - (5e-9 + 0.25e-6)).abs() < 1e-18);
        assert!((drift_error(0.75, &init, &corr) - 0.25e-6).abs() < 1e-18);
    }

    #[test]
    fn periodic_sawtooth_shape() {
        let model = ClockDriftModel {
            drift_ppm: 2.0,
            correction_policy: CorrectionPolicy::legacy(),
            initial_error: 0.0,
        };
        let checks = (1..=10).map(|i| i as f64 * 0.32);
        let corr = periodic_corrections(&model, checks);
        assert_eq!(corr.len(), 10);
        let trace: Vec<f64> = (0..3000).map(|i| drift_error(i as f64 * 1e-3, &model, &corr)).collect();
        let mut resets = 0;
        for w in trace.windows(2) {
            if w[1] < w[0] {
                resets += 1;
                assert!(w[1] < 2e-6 * 1e-3 + 1e-15);
            } else {
                assert!(w[1] >= w[0]);
            }
        }
        assert_eq!(resets, 9);
    }

    #[test]
    fn threshold_policy_waits_for_error() {
        let model = ClockDriftModel {
            drift_ppm: 1.0,
            correction_policy: CorrectionPolicy::Periodic {
                interval_s: 0.1,
                residual_threshold_s: 0.25e-6,
            },
            initial_error: 0.0,
        };
        let corr = periodic_corrections(&model, (1..=10).map(|i| i as f64 * 0.1));
        // Error crosses 0.25 us only after 0.3 s since the last reset.
        assert_eq!(corr.len(), 3);
        assert!((corr[0] - 0.3).abs() < 1e-12);
        assert!((corr[1] - 0.6).abs() < 1e-12);
        assert!((corr[2] - 0.9).abs() < 1e-12);
        let on_dci = ClockDriftModel::default();
        assert!(periodic_corrections(&on_dci, [1.0, 2.0]).is_empty());
    }

    #[test]
    fn noiseless_aligned_measurement_is_flat() {
        let link = LinkModel::new(&SystemConfig::default()).unwrap().with_phase(CarrierPhase::Fixed(0.4));
        let step = link.timing.ta_step();
        let m = link
            .simulate_measurement(3.0 * step, TaCode(3), f64::INFINITY, 0.0, &DriftTimeline::default(), &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        let alpha = Complex64::from_polar(1.0, 0.4);
        for k in m.estimate.sounded_indices() {
            assert!((m.estimate.h_hat[k] - alpha).norm() < 1e-9);
        }
        assert!(!m.outside_cp);
    }

    #[test]
    fn residual_phase_slope() {
        let link = LinkModel::new(&SystemConfig::default()).unwrap().with_phase(CarrierPhase::Fixed(0.0));
        let true_rtt = range_to_rtt(10.0);
        let m = link
            .simulate_measurement(true_rtt, TaCode(0), f64::INFINITY, 0.0, &DriftTimeline::default(), &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        // Least-squares slope of the unwrapped phase versus subcarrier index.
        let ks: Vec<usize> = m.estimate.sounded_indices().collect();
        let mut phase = Vec::with_capacity(ks.len());
        let mut acc = m.estimate.h_hat[ks[0]].arg();
        phase.push(acc);
        for w in ks.windows(2) {
            acc += (m.estimate.h_hat[w[1]] * m.estimate.h_hat[w[0]].conj()).arg();
            phase.push(acc);
        }
        let n = ks.len() as f64;
        let mx = ks.iter().map(|&k| k as f64).sum::<f64>() / n;
        let my = phase.iter().sum::<f64>() / n;
        let sxy: f64 = ks.iter().zip(&phase).map(|(&k, &p)| (k as f64 - mx) * (p - my)).sum();
        let sxx: f64 = ks.iter().map(|&k| (k as f64 - mx).powi(2)).sum();
        let slope = sxy / sxx;
        let expected = -2.0 * PI * 30e3 * true_rtt;
        assert!((slope - expected).abs() < 1e-9, "{slope} vs {expected}");
    }

    #[test]
    fn far_residual_flags_cp() {
        let link = LinkModel::new(&SystemConfig::default()).unwrap();
        let m = link
            .simulate_measurement(5e-6, TaCode(0), f64::INFINITY, 0.0, &DriftTimeline::default(), &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap();
        assert!(m.outside_cp);
    }
}
