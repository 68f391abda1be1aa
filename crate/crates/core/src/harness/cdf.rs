use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Empirical CDF of range errors: sorted samples with `p_i = i / N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfTable {
    samples: Vec<f64>,
    probs: Vec<f64>,
}

pub fn empirical_cdf(samples: &[f64]) -> Result<CdfTable> {
    if samples.is_empty() {
        return Err(Error::Parameter("empirical CDF of an empty sample".into()));
    }
    if samples.iter().any(|s| s.is_nan()) {
        return Err(Error::Parameter("NaN in CDF samples".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let probs = (1..=sorted.len()).map(|i| i as f64 / n).collect();
    Ok(CdfTable { samples: sorted, probs })
}

impl CdfTable {
    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Smallest sample whose cumulative probability is at least `p`.
    pub fn percentile(&self, p: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Parameter(format!("percentile {p} outside [0, 1]")));
        }
        let i = self.probs.partition_point(|&q| q < p);
        Ok(self.samples[i.min(self.samples.len() - 1)])
    }

    /// Fraction of samples `<= x`.
    pub fn cum_prob(&self, x: f64) -> f64 {
        let i = self.samples.partition_point(|&s| s <= x);
        i as f64 / self.samples.len() as f64
    }

    /// Rebuilds a table from `(error, cum_prob)` rows as written to disk.
    pub fn from_rows(rows: Vec<(f64, f64)>) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::Parameter("empty CDF table".into()));
        }
        let mut last = (f64::NEG_INFINITY, 0.0);
        for &(x, p) in &rows {
            if x < last.0 || p < last.1 || !(0.0..=1.0).contains(&p) {
                return Err(Error::Format("CDF rows must be sorted with non-decreasing probabilities".into()));
            }
            last = (x, p);
        }
        let (samples, probs) = rows.into_iter().unzip();
        Ok(Self { samples, probs })
    }
}
