use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{check_batch, Method, RangeEstimate};
use crate::channel::Measurement;
use crate::dsp::{first_argmax, inverse_dft, pairwise_sum};
use crate::error::{Error, Result};
use crate::system::SystemConfig;

/// Local refinement applied around the best coarse grid point.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Refinement {
    /// Vertex of the parabola through the peak and its two neighbours.
    #[default]
    Parabolic,
    /// Exhaustive scan of `[peak - coarse_step, peak + coarse_step]`.
    FineGrid { step: f64 },
    None,
}

/// Candidate RTTs scanned by the matched filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MfSearchGrid {
    pub tau_min: f64,
    pub tau_max: f64,
    pub coarse_step: f64,
    pub refine: Refinement,
}

impl MfSearchGrid {
    pub fn new(tau_min: f64, tau_max: f64, coarse_step: f64, refine: Refinement) -> Result<Self> {
        let grid = Self {
            tau_min,
            tau_max,
            coarse_step,
            refine,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau_min.is_finite() && self.tau_max.is_finite() && self.tau_min < self.tau_max) {
            return Err(Error::Parameter(format!(
                "search window [{}, {}] is empty",
                self.tau_min, self.tau_max
            )));
        }
        if !(self.coarse_step > 0.0) || self.coarse_step > self.tau_max - self.tau_min {
            return Err(Error::Parameter(format!(
                "coarse step {} must lie in (0, {}]",
                self.coarse_step,
                self.tau_max - self.tau_min
            )));
        }
        if let Refinement::FineGrid { step } = self.refine {
            if !(step > 0.0 && step < self.coarse_step) {
                return Err(Error::Parameter(format!(
                    "fine step {step} must lie in (0, coarse step)"
                )));
            }
        }
        Ok(())
    }

    /// Default window for a batch: the TA localises the RTT to within half a
    /// TA step of each coarse RTT, and the residual cannot exceed the cyclic
    /// prefix. The step is an eighth of a sample.
    pub fn default_for(batch: &[Measurement], system: &SystemConfig) -> Result<Self> {
        let (lo, hi) = coarse_bounds(batch)?;
        let half_step = system.timing()?.ta_step() / 2.0;
        Self::new(
            (lo - half_step).max(0.0),
            hi + half_step + system.cp_duration(),
            1.0 / (8.0 * system.sampling_rate_hz),
            Refinement::Parabolic,
        )
    }

    /// Window used when the coarse RTTs are not applied: the objective then
    /// peaks at the residual delays, so the scan starts at zero.
    pub fn default_uncompensated(batch: &[Measurement], system: &SystemConfig) -> Result<Self> {
        let mut grid = Self::default_for(batch, system)?;
        grid.tau_min = 0.0;
        Ok(grid)
    }

    pub fn points(&self) -> usize {
        ((self.tau_max - self.tau_min) / self.coarse_step + 1e-9).floor() as usize + 1
    }

    pub fn tau_at(&self, g: usize) -> f64 {
        self.tau_min + g as f64 * self.coarse_step
    }
}

fn coarse_bounds(batch: &[Measurement]) -> Result<(f64, f64)> {
    if batch.is_empty() {
        return Err(Error::Parameter("empty measurement batch".into()));
    }
    let lo = batch.iter().map(|m| m.tau_r).fold(f64::INFINITY, f64::min);
    let hi = batch.iter().map(|m| m.tau_r).fold(f64::NEG_INFINITY, f64::max);
    Ok((lo, hi))
}

/// `v(tau)[k] = exp(-j 2 pi k delta_f tau)` on the sounded bins of `mask`,
/// zero elsewhere.
pub fn steering_vector(tau: f64, mask: &[bool], delta_f: f64) -> Vec<Complex64> {
    mask.iter()
        .enumerate()
        .map(|(k, &m)| if m { rotation(k as f64, delta_f, -tau) } else { Complex64::new(0.0, 0.0) })
        .collect()
}

/// `exp(-j 2 pi k delta_f tau)`.
fn rotation(k: f64, delta_f: f64, tau: f64) -> Complex64 {
    Complex64::from_polar(1.0, -2.0 * PI * (k * delta_f * tau).fract())
}

/// Matched-filter objective
/// `(1/M) * sum_m |v(tau)^H T(tau_r_m) h_m|^2` over the sounded bins.
pub fn mf_objective(tau: f64, batch: &[Measurement], delta_f: f64) -> Result<f64> {
    let sounded = check_batch(batch)?;
    Ok(objective_at(tau, batch, &sounded, delta_f, true))
}

/// Objective with `T(tau_r)` replaced by the identity.
pub fn mf_objective_uncompensated(tau: f64, batch: &[Measurement], delta_f: f64) -> Result<f64> {
    let sounded = check_batch(batch)?;
    Ok(objective_at(tau, batch, &sounded, delta_f, false))
}

fn objective_at(tau: f64, batch: &[Measurement], sounded: &[usize], delta_f: f64, compensate: bool) -> f64 {
    let energies: Vec<f64> = batch
        .iter()
        .map(|m| {
            let shift = if compensate { m.tau_r } else { 0.0 };
            let h = &m.estimate.h_hat;
            sounded
                .iter()
                .map(|&k| {
                    let k_f = k as f64;
                    // conj(v[k]) * T[k] * h[k]
                    rotation(k_f, delta_f, tau).conj() * rotation(k_f, delta_f, shift) * h[k]
                })
                .sum::<Complex64>()
                .norm_sqr()
        })
        .collect();
    pairwise_sum(&energies) / batch.len() as f64
}

/// Stride of the sounded bins if they form an arithmetic progression.
fn comb_stride(sounded: &[usize]) -> Option<usize> {
    match sounded {
        [] => None,
        [_] => Some(1),
        [a, b, ..] => {
            let d = b - a;
            sounded.windows(2).all(|w| w[1] - w[0] == d).then_some(d)
        }
    }
}

/// FFT length `L` with `stride * delta_f * step == 1 / L`, if one exists.
fn commensurate_fft_len(stride: usize, delta_f: f64, step: f64, n: usize) -> Option<usize> {
    let inv = 1.0 / (stride as f64 * delta_f * step);
    let l = inv.round();
    ((inv - l).abs() <= 1e-12 * inv && l as usize >= n && l <= 1.0e6).then_some(l as usize)
}

/// Per-measurement energy `|sum_k h[k] exp(j 2 pi k df (tau - shift))|^2`
/// over the coarse grid.
fn measurement_curve(
    h: &[Complex64],
    sounded: &[usize],
    grid: &MfSearchGrid,
    delta_f: f64,
    shift: f64,
) -> Vec<f64> {
    let n = grid.points();
    let fft = comb_stride(sounded).and_then(|d| {
        commensurate_fft_len(d, delta_f, grid.coarse_step, sounded.len()).map(|l| (d, l))
    });
    match fft {
        Some((stride, len)) => {
            // Sounded bins k0 + stride * i: the common k0 rotation drops out of
            // the magnitude, leaving a length-L inverse DFT over i.
            let offset = grid.tau_min - shift;
            let rate = stride as f64 * delta_f * offset;
            let mut buf = vec![Complex64::new(0.0, 0.0); len];
            for (i, &k) in sounded.iter().enumerate() {
                buf[i] = h[k] * Complex64::from_polar(1.0, 2.0 * PI * (i as f64 * rate).fract());
            }
            inverse_dft(&mut buf);
            (0..n).map(|g| buf[g % len].norm_sqr()).collect()
        }
        None => (0..n)
            .map(|g| {
                let tau = grid.tau_at(g) - shift;
                sounded
                    .iter()
                    .map(|&k| h[k] * rotation(k as f64, delta_f, tau).conj())
                    .sum::<Complex64>()
                    .norm_sqr()
            })
            .collect(),
    }
}

fn batch_curve(batch: &[Measurement], sounded: &[usize], grid: &MfSearchGrid, delta_f: f64, compensate: bool) -> Vec<f64> {
    let curves: Vec<Vec<f64>> = batch
        .iter()
        .map(|m| {
            let shift = if compensate { m.tau_r } else { 0.0 };
            measurement_curve(&m.estimate.h_hat, sounded, grid, delta_f, shift)
        })
        .collect();
    let mut column = vec![0.0; curves.len()];
    (0..grid.points())
        .map(|g| {
            for (c, curve) in column.iter_mut().zip(&curves) {
                *c = curve[g];
            }
            pairwise_sum(&column) / curves.len() as f64
        })
        .collect()
}

/// Matched-filter RTT: coarse scan of [`mf_objective`] over `grid`, then the
/// configured refinement. Ties go to the smaller RTT; a peak on the window
/// edge is returned unrefined with `boundary` set.
pub fn matched_filter_rtt(batch: &[Measurement], grid: &MfSearchGrid, system: &SystemConfig) -> Result<RangeEstimate> {
    run(batch, grid, system.delta_f(), true)
}

/// Same scan with `T(tau_r)` disabled. The result then tracks the residual
/// delays only and ignores the coarse RTTs.
pub fn matched_filter_rtt_uncompensated(
    batch: &[Measurement],
    grid: &MfSearchGrid,
    system: &SystemConfig,
) -> Result<RangeEstimate> {
    run(batch, grid, system.delta_f(), false)
}

fn run(batch: &[Measurement], grid: &MfSearchGrid, delta_f: f64, compensate: bool) -> Result<RangeEstimate> {
    grid.validate()?;
    let sounded = check_batch(batch)?;
    let curve = batch_curve(batch, &sounded, grid, delta_f, compensate);
    let best = first_argmax(curve.iter().copied())
        .ok_or_else(|| Error::Domain("matched-filter objective is undefined".into()))?;
    let tau_best = grid.tau_at(best);
    let m = batch.len();

    if best == 0 || best + 1 == curve.len() {
        return Ok(RangeEstimate::from_rtt(tau_best, Method::Mf, Some(curve[best]), m, true));
    }

    let (tau, value) = match grid.refine {
        Refinement::None => (tau_best, curve[best]),
        Refinement::Parabolic => {
            let (ym, y0, yp) = (curve[best - 1], curve[best], curve[best + 1]);
            let curvature = ym - 2.0 * y0 + yp;
            let tau = if curvature < 0.0 {
                let delta = 0.5 * (ym - yp) / curvature;
                tau_best + delta.clamp(-0.5, 0.5) * grid.coarse_step
            } else {
                tau_best
            };
            (tau, objective_at(tau, batch, &sounded, delta_f, compensate))
        }
        Refinement::FineGrid { step } => {
            let lo = tau_best - grid.coarse_step;
            let count = (2.0 * grid.coarse_step / step + 1e-9).floor() as usize + 1;
            let values: Vec<f64> = (0..count)
                .map(|i| objective_at(lo + i as f64 * step, batch, &sounded, delta_f, compensate))
                .collect();
            let i = first_argmax(values.iter().copied()).unwrap_or(0);
            (lo + i as f64 * step, values[i])
        }
    };
    Ok(RangeEstimate::from_rtt(tau, Method::Mf, Some(value), m, false))
}
