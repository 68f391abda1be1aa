//! SRS pilots: Zadoff-Chu base sequences, comb mapping onto the OFDM grid
//! and least-squares channel estimation.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Placement of the SRS on the frequency grid.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SrsConfig {
    /// FFT size `K`.
    pub fft_size: usize,
    /// Comb size `Kc`.
    pub comb_size: usize,
    pub comb_offset: usize,
    pub first_subcarrier: usize,
    pub num_sounded: usize,
    pub zc_root: u32,
}

impl Default for SrsConfig {
    fn default() -> Self {
        Self {
            fft_size: 1536,
            comb_size: 2,
            comb_offset: 0,
            first_subcarrier: 144,
            num_sounded: 624,
            zc_root: 1,
        }
    }
}

impl SrsConfig {
    /// Length of the prime-length ZC base sequence that is cyclically
    /// extended to `num_sounded` symbols.
    pub fn zc_length(&self) -> usize {
        largest_prime_at_most(self.num_sounded).unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.comb_size == 0 {
            return Err(Error::Parameter("comb size must be >= 1".into()));
        }
        if self.comb_offset >= self.comb_size {
            return Err(Error::Parameter(format!(
                "comb offset {} not in [0, {})",
                self.comb_offset, self.comb_size
            )));
        }
        if self.num_sounded < 3 {
            return Err(Error::Parameter("need at least 3 sounded subcarriers".into()));
        }
        let room = self.fft_size.saturating_sub(self.first_subcarrier);
        if self.num_sounded * self.comb_size > room {
            return Err(Error::Parameter(format!(
                "{} sounded bins at comb {} overflow the grid from index {} (K = {})",
                self.num_sounded, self.comb_size, self.first_subcarrier, self.fft_size
            )));
        }
        let len = self.zc_length() as u64;
        if gcd(u64::from(self.zc_root), len) != 1 {
            return Err(Error::Parameter(format!(
                "ZC root {} not coprime with length {len}",
                self.zc_root
            )));
        }
        Ok(())
    }

    /// Grid index of the `i`-th sounded subcarrier.
    pub fn subcarrier(&self, i: usize) -> usize {
        self.first_subcarrier + self.comb_offset + i * self.comb_size
    }
}

/// Pilot symbols on the full FFT grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotGrid {
    pub symbols: Vec<Complex64>,
    pub mask: Vec<bool>,
}

impl PilotGrid {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn num_sounded(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Frequency-domain LS channel estimate of one SRS occasion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelEstimateVec {
    pub h_hat: Vec<Complex64>,
    pub mask: Vec<bool>,
    /// Seconds since session start.
    pub slot_time: f64,
}

impl ChannelEstimateVec {
    pub fn len(&self) -> usize {
        self.h_hat.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h_hat.is_empty()
    }

    pub fn sounded_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.mask.iter().enumerate().filter(|(_, &m)| m).map(|(k, _)| k)
    }

    pub fn num_sounded(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Zeroes every bin outside the mask.
    pub(crate) fn enforce_mask(&mut self) {
        for (h, &m) in self.h_hat.iter_mut().zip(&self.mask) {
            if !m {
                *h = Complex64::new(0.0, 0.0);
            }
        }
    }
}

pub(crate) fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

fn is_prime(n: usize) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// Largest prime `<= n`.
pub fn largest_prime_at_most(n: usize) -> Option<usize> {
    (2..=n).rev().find(|&p| is_prime(p))
}

/// Zadoff-Chu sequence `x[n] = exp(-j pi u n (n+1) / N)` for odd `N`.
pub fn generate_zc(root: u32, length: usize) -> Result<Vec<Complex64>> {
    if length == 0 || length % 2 == 0 {
        return Err(Error::Parameter(format!("ZC length {length} must be odd")));
    }
    if gcd(u64::from(root), length as u64) != 1 {
        return Err(Error::Parameter(format!(
            "ZC root {root} not coprime with length {length}"
        )));
    }
    let n_len = length as u64;
    let u = u64::from(root) % n_len;
    Ok((0..n_len)
        .map(|n| {
            // n(n+1) is even, so reduce the exponent modulo 2N exactly.
            let e = (u * ((n * (n + 1)) % (2 * n_len))) % (2 * n_len);
            Complex64::from_polar(1.0, -PI * e as f64 / n_len as f64)
        })
        .collect())
}

/// ZC base sequence cyclically extended to `cfg.num_sounded` symbols.
pub fn srs_sequence(cfg: &SrsConfig) -> Result<Vec<Complex64>> {
    cfg.validate()?;
    let base = generate_zc(cfg.zc_root, cfg.zc_length())?;
    Ok((0..cfg.num_sounded).map(|i| base[i % base.len()]).collect())
}

/// Places `seq` on every `Kc`-th subcarrier starting at
/// `first_subcarrier + comb_offset`.
pub fn map_to_comb(seq: &[Complex64], cfg: &SrsConfig) -> Result<PilotGrid> {
    if seq.len() != cfg.num_sounded {
        return Err(Error::Parameter(format!(
            "sequence length {} != num_sounded {}",
            seq.len(),
            cfg.num_sounded
        )));
    }
    if cfg.comb_size == 0 || cfg.comb_offset >= cfg.comb_size {
        return Err(Error::Parameter("invalid comb".into()));
    }
    if seq.is_empty() {
        return Ok(PilotGrid {
            symbols: vec![Complex64::new(0.0, 0.0); cfg.fft_size],
            mask: vec![false; cfg.fft_size],
        });
    }
    let last = cfg.subcarrier(seq.len() - 1);
    if last >= cfg.fft_size {
        return Err(Error::Parameter(format!(
            "comb placement reaches bin {last} beyond K = {}",
            cfg.fft_size
        )));
    }
    let mut symbols = vec![Complex64::new(0.0, 0.0); cfg.fft_size];
    let mut mask = vec![false; cfg.fft_size];
    for (i, &s) in seq.iter().enumerate() {
        let k = cfg.subcarrier(i);
        symbols[k] = s;
        mask[k] = true;
    }
    Ok(PilotGrid { symbols, mask })
}

/// Pilot grid for `cfg`.
pub fn build_pilots(cfg: &SrsConfig) -> Result<PilotGrid> {
    map_to_comb(&srs_sequence(cfg)?, cfg)
}

/// `h_hat[k] = conj(s[k]) * y[k]` on sounded bins, zero elsewhere.
pub fn ls_estimate(y: &[Complex64], pilots: &PilotGrid, slot_time: f64) -> Result<ChannelEstimateVec> {
    if y.len() != pilots.len() {
        return Err(Error::Parameter(format!(
            "received vector has {} bins, pilot grid has {}",
            y.len(),
            pilots.len()
        )));
    }
    let h_hat = y
        .iter()
        .zip(&pilots.symbols)
        .zip(&pilots.mask)
        .map(|((&y, &s), &m)| if m { s.conj() * y } else { Complex64::new(0.0, 0.0) })
        .collect();
    Ok(ChannelEstimateVec {
        h_hat,
        mask: pilots.mask.clone(),
        slot_time,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn zc_root1_len3() {
        let x = generate_zc(1, 3).unwrap();
        let expected = [c(1.0, 0.0), Complex64::from_polar(1.0, -2.0 * PI / 3.0), c(1.0, 0.0)];
        for (a, b) in x.iter().zip(expected) {
            assert!((a - b).norm() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn zc_rejects_bad_params() {
        assert!(generate_zc(3, 9).is_err());
        assert!(generate_zc(1, 8).is_err());
        assert!(generate_zc(1, 0).is_err());
    }

    fn cyclic_autocorr(x: &[Complex64], lag: usize) -> Complex64 {
        let n = x.len();
        (0..n).map(|i| x[i] * x[(i + lag) % n].conj()).sum()
    }

    #[test]
    fn zc_ideal_autocorrelation() {
        for &(root, len) in &[(1u32, 619usize), (25, 619), (7, 139), (2, 15)] {
            let x = generate_zc(root, len).unwrap();
            assert!(x.iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
            for lag in 1..len {
                let r = cyclic_autocorr(&x, lag).norm();
                assert!(r < 1e-9 * len as f64, "root {root} len {len} lag {lag}: {r}");
            }
        }
    }

    #[test]
    fn largest_prime() {
        assert_eq!(largest_prime_at_most(624), Some(619));
        assert_eq!(largest_prime_at_most(2), Some(2));
        assert_eq!(largest_prime_at_most(1), None);
    }

    #[test]
    fn dense_placement() {
        let cfg = SrsConfig {
            fft_size: 16,
            comb_size: 1,
            comb_offset: 0,
            first_subcarrier: 0,
            num_sounded: 7,
            zc_root: 1,
        };
        let grid = build_pilots(&cfg).unwrap();
        assert!(grid.mask[..7].iter().all(|&m| m));
        assert!(grid.mask[7..].iter().all(|&m| !m));
    }

    #[test]
    fn comb_two_even_bins() {
        let cfg = SrsConfig {
            fft_size: 32,
            comb_size: 2,
            comb_offset: 0,
            first_subcarrier: 0,
            num_sounded: 11,
            zc_root: 1,
        };
        let grid = build_pilots(&cfg).unwrap();
        for k in 0..32 {
            assert_eq!(grid.mask[k], k % 2 == 0 && k < 22, "bin {k}");
            let expect = if grid.mask[k] { 1.0 } else { 0.0 };
            assert!((grid.symbols[k].norm() - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn default_geometry() {
        let cfg = SrsConfig::default();
        let grid = build_pilots(&cfg).unwrap();
        assert_eq!(grid.num_sounded(), 624);
        let first = grid.mask.iter().position(|&m| m).unwrap();
        let last = grid.mask.iter().rposition(|&m| m).unwrap();
        // 1248 subcarriers * 30 kHz = 37.44 MHz
        assert_eq!(last + 2 - first, 1248);
        assert!(((last + 2 - first) as f64 * 30e3 - 37.44e6).abs() < 1e-3);
        assert_eq!(first, 144);
        assert_eq!(cfg.zc_length(), 619);
    }

    #[test]
    fn comb_overflow() {
        let cfg = SrsConfig {
            first_subcarrier: 400,
            ..SrsConfig::default()
        };
        assert!(cfg.validate().is_err());
        let seq = vec![c(1.0, 0.0); 624];
        assert!(map_to_comb(&seq, &cfg).is_err());
    }

    #[test]
    fn ls_examples() {
        let cfg = SrsConfig::default();
        let pilots = build_pilots(&cfg).unwrap();
        let est = ls_estimate(&pilots.symbols, &pilots, 0.0).unwrap();
        for (h, &m) in est.h_hat.iter().zip(&pilots.mask) {
            let want = if m { c(1.0, 0.0) } else { c(0.0, 0.0) };
            assert!((h - want).norm() < 1e-12);
        }

        let zeros = vec![c(0.0, 0.0); cfg.fft_size];
        let est = ls_estimate(&zeros, &pilots, 0.0).unwrap();
        assert!(est.h_hat.iter().all(|h| h.norm() == 0.0));

        let df = 30e3;
        let tau = 37e-9;
        let y: Vec<_> = (0..cfg.fft_size)
            .map(|k| pilots.symbols[k] * Complex64::from_polar(1.0, -2.0 * PI * k as f64 * df * tau))
            .collect();
        let est = ls_estimate(&y, &pilots, 0.0).unwrap();
        for k in est.sounded_indices() {
            let want = Complex64::from_polar(1.0, -2.0 * PI * k as f64 * df * tau);
            assert!((est.h_hat[k] - want).norm() < 1e-12);
        }

        assert!(ls_estimate(&zeros[..10], &pilots, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn ls_inverts_pilot_modulation(
            re in proptest::collection::vec(-10.0f64..10.0, 64),
            im in proptest::collection::vec(-10.0f64..10.0, 64),
            offset in 0usize..2,
        ) {
            let cfg = SrsConfig {
                fft_size: 64,
                comb_size: 2,
                comb_offset: offset,
                first_subcarrier: 4,
                num_sounded: 29,
                zc_root: 5,
            };
            let pilots = build_pilots(&cfg).unwrap();
            let h: Vec<_> = re.iter().zip(&im).map(|(&a, &b)| c(a, b)).collect();
            let y: Vec<_> = h.iter().zip(&pilots.symbols).map(|(h, s)| h * s).collect();
            let est = ls_estimate(&y, &pilots, 0.0).unwrap();
            for k in 0..64 {
                if pilots.mask[k] {
                    prop_assert!((est.h_hat[k] - h[k]).norm() <= 1e-12 * h[k].norm().max(1.0));
                } else {
                    prop_assert_eq!(est.h_hat[k], c(0.0, 0.0));
                }
            }
        }
    }
}
