use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::snr_list;
use super::{CdfTable, ExperimentConfig, ExperimentResults};
use crate::error::{Error, Result};
use crate::estimators::Method;

pub const VERSION: &str = concat!("v", env!("CARGO_PKG_VERSION"));

/// Run manifest written next to the CDF files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    pub estimated_snr_db: Vec<SnrReport>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrReport {
    #[serde(with = "point")]
    pub configured: f64,
    #[serde(with = "point")]
    pub estimated: f64,
}

mod point {
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        super::snr_list::serialize(std::slice::from_ref(v), s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let v = super::snr_list::deserialize(d)?;
        v.first().copied().ok_or_else(|| serde::de::Error::custom("empty SNR value"))
    }
}

/// `{method}_snr{snr}_m{m}.csv`, e.g. `mf_snr-25_m20.csv`.
pub fn result_file_name(method: Method, snr_db: f64, m: usize) -> String {
    format!("{}_snr{}_m{m}.csv", method.as_str(), snr_list::label(snr_db))
}

/// Writes one `error_m,cum_prob` CSV per result and `manifest.json` into
/// `dir`, creating it if needed. Returns the written paths.
pub fn write_results(results: &ExperimentResults, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut names = Vec::new();
    for e in &results.entries {
        let name = result_file_name(e.method, e.snr_db, e.m);
        let path = dir.join(&name);
        write_cdf_csv(&e.cdf, fs::File::create(&path)?)?;
        names.push(name);
        written.push(path);
    }
    let manifest = Manifest {
        version: VERSION.into(),
        seed: results.config.base_seed,
        config: results.config.clone(),
        estimated_snr_db: results
            .estimated_snr_db
            .iter()
            .map(|&(configured, estimated)| SnrReport { configured, estimated })
            .collect(),
        files: names,
    };
    let path = dir.join("manifest.json");
    let mut f = fs::File::create(&path)?;
    serde_json::to_writer_pretty(&mut f, &manifest).map_err(|e| Error::Format(e.to_string()))?;
    f.write_all(b"\n")?;
    written.push(path);
    Ok(written)
}

fn write_cdf_csv<W: Write>(cdf: &CdfTable, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    let fmt = |e: csv::Error| Error::Format(e.to_string());
    wr.write_record(["error_m", "cum_prob"]).map_err(fmt)?;
    for (x, p) in cdf.samples().iter().zip(cdf.probs()) {
        wr.write_record([x.to_string(), p.to_string()]).map_err(fmt)?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads an `error_m,cum_prob` CSV. A single-column file of errors (header
/// `error_m`) is accepted and turned into a fresh empirical CDF.
pub fn read_cdf_csv(path: &Path) -> Result<CdfTable> {
    let mut rd = csv::Reader::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
    let headers = rd.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let xi = col("error_m").ok_or_else(|| Error::Format("missing error_m column".into()))?;
    let pi = col("cum_prob");
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Format(format!("bad number in row {:?}", rec)))
        };
        rows.push((num(xi)?, pi.map(num).transpose()?));
    }
    match pi {
        Some(_) => CdfTable::from_rows(rows.into_iter().map(|(x, p)| (x, p.unwrap_or(0.0))).collect()),
        None => super::empirical_cdf(&rows.into_iter().map(|(x, _)| x).collect::<Vec<_>>()),
    }
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Format(e.to_string()))
}
