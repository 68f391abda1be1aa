//! Import and export of channel estimates, measurement captures and session
//! traces.
//!
//! Binary estimate record (little-endian):
//!
//! ```text
//! u32 K
//! u32 R                 number of mask runs
//! u32 run[R]            alternating unsounded/sounded run lengths, starting
//!                       with unsounded (possibly 0); sum(run) == K
//! f64 slot_time
//! f64 re, f64 im        one pair per sounded bin, ascending k
//! ```
//!
//! A capture file is the magic `RTTCAP01`, a u32 record count and, per
//! record, `f64 tau_r`, `u32 ta_code`, `f64 true_rtt` (NaN when unknown)
//! followed by an estimate record.

use std::io::{BufRead, Read, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::Measurement;
use crate::error::{Error, Result};
use crate::numerology::TaCode;
use crate::signaling::{SessionTrace, TraceEvent};
use crate::srs::ChannelEstimateVec;

pub const CAPTURE_MAGIC: &[u8; 8] = b"RTTCAP01";

/// Refuse absurd sizes from corrupt headers before allocating.
const MAX_BINS: u32 = 1 << 20;
const MAX_RECORDS: u32 = 1 << 24;

fn fmt_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn mask_runs(mask: &[bool]) -> Vec<u32> {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0u32;
    for &m in mask {
        if m == current {
            len += 1;
        } else {
            runs.push(len);
            current = m;
            len = 1;
        }
    }
    runs.push(len);
    runs
}

pub fn write_estimate<W: Write>(w: &mut W, est: &ChannelEstimateVec) -> Result<()> {
    if est.mask.len() != est.h_hat.len() {
        return Err(Error::Parameter("mask and estimate lengths differ".into()));
    }
    let runs = mask_runs(&est.mask);
    w.write_all(&(est.len() as u32).to_le_bytes())?;
    w.write_all(&(runs.len() as u32).to_le_bytes())?;
    for r in &runs {
        w.write_all(&r.to_le_bytes())?;
    }
    w.write_all(&est.slot_time.to_le_bytes())?;
    for k in est.sounded_indices() {
        w.write_all(&est.h_hat[k].re.to_le_bytes())?;
        w.write_all(&est.h_hat[k].im.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_estimate<R: Read>(r: &mut R) -> Result<ChannelEstimateVec> {
    let k = read_u32(r)?;
    if k == 0 || k > MAX_BINS {
        return Err(fmt_err(format!("implausible FFT size {k}")));
    }
    let nruns = read_u32(r)?;
    if nruns == 0 || nruns > k + 1 {
        return Err(fmt_err(format!("implausible run count {nruns}")));
    }
    let mut mask = Vec::with_capacity(k as usize);
    let mut sounded = false;
    for _ in 0..nruns {
        let len = read_u32(r)?;
        if mask.len() as u64 + u64::from(len) > u64::from(k) {
            return Err(fmt_err("mask runs exceed K"));
        }
        mask.extend(std::iter::repeat_n(sounded, len as usize));
        sounded = !sounded;
    }
    if mask.len() != k as usize {
        return Err(fmt_err(format!("mask runs cover {} of {k} bins", mask.len())));
    }
    let slot_time = read_f64(r)?;
    let mut h_hat = vec![Complex64::new(0.0, 0.0); k as usize];
    for (h, _) in h_hat.iter_mut().zip(&mask).filter(|(_, &m)| m) {
        *h = Complex64::new(read_f64(r)?, read_f64(r)?);
    }
    Ok(ChannelEstimateVec { h_hat, mask, slot_time })
}

pub fn write_capture<W: Write>(w: &mut W, batch: &[Measurement]) -> Result<()> {
    w.write_all(CAPTURE_MAGIC)?;
    w.write_all(&(batch.len() as u32).to_le_bytes())?;
    for m in batch {
        w.write_all(&m.tau_r.to_le_bytes())?;
        w.write_all(&m.ta_code.0.to_le_bytes())?;
        w.write_all(&m.true_rtt.to_le_bytes())?;
        write_estimate(w, &m.estimate)?;
    }
    Ok(())
}

pub fn read_capture<R: Read>(r: &mut R) -> Result<Vec<Measurement>> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != CAPTURE_MAGIC {
        return Err(fmt_err("not a capture file (bad magic)"));
    }
    let n = read_u32(r)?;
    if n > MAX_RECORDS {
        return Err(fmt_err(format!("implausible record count {n}")));
    }
    let mut out = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let tau_r = read_f64(r)?;
        let ta_code = TaCode(read_u32(r)?);
        let true_rtt = read_f64(r)?;
        let estimate = read_estimate(r)?;
        out.push(Measurement {
            slot_time: estimate.slot_time,
            estimate,
            tau_r,
            ta_code,
            true_rtt,
            outside_cp: false,
        });
    }
    Ok(out)
}

/// Writes one estimate as `k,re,im` rows over its sounded bins.
pub fn write_estimate_csv<W: Write>(w: W, est: &ChannelEstimateVec) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["k", "re", "im"]).map_err(csv_err)?;
    for k in est.sounded_indices() {
        let h = est.h_hat[k];
        wr.write_record([k.to_string(), h.re.to_string(), h.im.to_string()])
            .map_err(csv_err)?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize, Serialize)]
struct BinRow {
    k: usize,
    re: f64,
    im: f64,
}

/// Reads a `k,re,im` CSV into a length-`fft_size` estimate. Listed bins form
/// the mask.
pub fn read_estimate_csv<R: Read>(r: R, fft_size: usize, slot_time: f64) -> Result<ChannelEstimateVec> {
    let mut rd = csv::Reader::from_reader(r);
    let mut h_hat = vec![Complex64::new(0.0, 0.0); fft_size];
    let mut mask = vec![false; fft_size];
    for row in rd.deserialize::<BinRow>() {
        let row = row.map_err(csv_err)?;
        if row.k >= fft_size {
            return Err(fmt_err(format!("bin {} outside FFT size {fft_size}", row.k)));
        }
        if mask[row.k] {
            return Err(fmt_err(format!("bin {} listed twice", row.k)));
        }
        mask[row.k] = true;
        h_hat[row.k] = Complex64::new(row.re, row.im);
    }
    if !mask.iter().any(|&m| m) {
        return Err(fmt_err("no bins in CSV"));
    }
    Ok(ChannelEstimateVec { h_hat, mask, slot_time })
}

#[derive(Debug, Deserialize, Serialize)]
struct CaptureRow {
    m: usize,
    tau_r: f64,
    slot_time: f64,
    k: usize,
    re: f64,
    im: f64,
}

/// Writes a batch as `m,tau_r,slot_time,k,re,im` rows.
pub fn write_capture_csv<W: Write>(w: W, batch: &[Measurement]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for (i, m) in batch.iter().enumerate() {
        for k in m.estimate.sounded_indices() {
            let h = m.estimate.h_hat[k];
            wr.serialize(CaptureRow {
                m: i,
                tau_r: m.tau_r,
                slot_time: m.slot_time,
                k,
                re: h.re,
                im: h.im,
            })
            .map_err(csv_err)?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Reads a batch written by [`write_capture_csv`]. Rows must be grouped by
/// `m`; TA codes are not part of the CSV form and come back as 0.
pub fn read_capture_csv<R: Read>(r: R, fft_size: usize) -> Result<Vec<Measurement>> {
    let mut rd = csv::Reader::from_reader(r);
    let mut out: Vec<Measurement> = Vec::new();
    let mut current: Option<usize> = None;
    for row in rd.deserialize::<CaptureRow>() {
        let row = row.map_err(csv_err)?;
        if row.k >= fft_size {
            return Err(fmt_err(format!("bin {} outside FFT size {fft_size}", row.k)));
        }
        if current != Some(row.m) {
            if current.is_some_and(|c| row.m < c) {
                return Err(fmt_err("capture rows not grouped by measurement"));
            }
            current = Some(row.m);
            out.push(Measurement {
                estimate: ChannelEstimateVec {
                    h_hat: vec![Complex64::new(0.0, 0.0); fft_size],
                    mask: vec![false; fft_size],
                    slot_time: row.slot_time,
                },
                tau_r: row.tau_r,
                ta_code: TaCode(0),
                slot_time: row.slot_time,
                true_rtt: f64::NAN,
                outside_cp: false,
            });
        }
        let est = &mut out.last_mut().expect("pushed above").estimate;
        est.mask[row.k] = true;
        est.h_hat[row.k] = Complex64::new(row.re, row.im);
    }
    if out.is_empty() {
        return Err(fmt_err("empty capture"));
    }
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

/// One line of a JSON-lines session trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
pub enum TraceLine {
    Event(TraceEvent),
    Measurement(MeasurementLine),
}

/// Measurement as written to a trace: sounded bins only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementLine {
    pub slot_time: f64,
    pub tau_r: f64,
    pub ta_code: u32,
    pub true_rtt: Option<f64>,
    pub outside_cp: bool,
    pub fft_size: usize,
    pub bins: Vec<usize>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl From<&Measurement> for MeasurementLine {
    fn from(m: &Measurement) -> Self {
        let bins: Vec<usize> = m.estimate.sounded_indices().collect();
        Self {
            slot_time: m.slot_time,
            tau_r: m.tau_r,
            ta_code: m.ta_code.0,
            true_rtt: m.true_rtt.is_finite().then_some(m.true_rtt),
            outside_cp: m.outside_cp,
            fft_size: m.estimate.len(),
            re: bins.iter().map(|&k| m.estimate.h_hat[k].re).collect(),
            im: bins.iter().map(|&k| m.estimate.h_hat[k].im).collect(),
            bins,
        }
    }
}

impl TryFrom<MeasurementLine> for Measurement {
    type Error = Error;

    fn try_from(l: MeasurementLine) -> Result<Self> {
        if l.bins.len() != l.re.len() || l.bins.len() != l.im.len() {
            return Err(fmt_err("bins/re/im lengths differ"));
        }
        let mut h_hat = vec![Complex64::new(0.0, 0.0); l.fft_size];
        let mut mask = vec![false; l.fft_size];
        for ((&k, &re), &im) in l.bins.iter().zip(&l.re).zip(&l.im) {
            if k >= l.fft_size {
                return Err(fmt_err(format!("bin {k} outside FFT size {}", l.fft_size)));
            }
            mask[k] = true;
            h_hat[k] = Complex64::new(re, im);
        }
        Ok(Measurement {
            estimate: ChannelEstimateVec {
                h_hat,
                mask,
                slot_time: l.slot_time,
            },
            tau_r: l.tau_r,
            ta_code: TaCode(l.ta_code),
            slot_time: l.slot_time,
            true_rtt: l.true_rtt.unwrap_or(f64::NAN),
            outside_cp: l.outside_cp,
        })
    }
}

/// Writes events in order, then the measurements, one JSON object per line.
pub fn write_trace_jsonl<W: Write>(mut w: W, trace: &SessionTrace) -> Result<()> {
    let lines = trace
        .events
        .iter()
        .cloned()
        .map(TraceLine::Event)
        .chain(trace.measurements.iter().map(|m| TraceLine::Measurement(m.into())));
    for line in lines {
        serde_json::to_writer(&mut w, &line).map_err(|e| fmt_err(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_jsonl<R: BufRead>(r: R) -> Result<SessionTrace> {
    let mut trace = SessionTrace::default();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: TraceLine =
            serde_json::from_str(&line).map_err(|e| fmt_err(format!("line {}: {e}", n + 1)))?;
        match parsed {
            TraceLine::Event(e) => trace.events.push(e),
            TraceLine::Measurement(m) => trace.measurements.push(m.try_into()?),
        }
    }
    Ok(trace)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{CarrierPhase, DriftTimeline, LinkModel};
    use crate::system::SystemConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn batch(n: usize) -> Vec<Measurement> {
        let link = LinkModel::new(&SystemConfig::default()).unwrap().with_phase(CarrierPhase::Random);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        (0..n)
            .map(|i| {
                link.simulate_measurement(
                    1e-6,
                    TaCode(3 + i as u32),
                    10.0,
                    i as f64 * 0.02,
                    &DriftTimeline::default(),
                    &mut rng,
                )
                .unwrap()
            })
            .collect()
    }

    #[test]
    fn estimate_binary_round_trip() {
        let m = &batch(1)[0];
        let mut buf = Vec::new();
        write_estimate(&mut buf, &m.estimate).unwrap();
        // K, R, 3 runs (144 unsounded, then alternating 1/1 ...) is long; just check payload size.
        let runs = mask_runs(&m.estimate.mask);
        assert_eq!(buf.len(), 8 + 4 * runs.len() + 8 + 16 * 624);
        let back = read_estimate(&mut buf.as_slice()).unwrap();
        assert_eq!(back, m.estimate);
    }

    #[test]
    fn mask_runs_start_unsounded() {
        assert_eq!(mask_runs(&[true, true, false]), vec![0, 2, 1]);
        assert_eq!(mask_runs(&[false, true, false, true]), vec![1, 1, 1, 1]);
    }

    #[test]
    fn truncated_or_corrupt_input() {
        let m = &batch(1)[0];
        let mut buf = Vec::new();
        write_estimate(&mut buf, &m.estimate).unwrap();
        buf.truncate(buf.len() - 3);
        assert!(read_estimate(&mut buf.as_slice()).is_err());
        let bad = [0u8; 8];
        assert!(matches!(read_estimate(&mut bad.as_slice()), Err(Error::Format(_))));
        assert!(matches!(read_capture(&mut b"NOTACAPT\0\0\0\0".as_slice()), Err(Error::Format(_))));
    }

    #[test]
    fn capture_round_trips() {
        let b = batch(3);
        let mut buf = Vec::new();
        write_capture(&mut buf, &b).unwrap();
        let back = read_capture(&mut buf.as_slice()).unwrap();
        assert_eq!(back.len(), 3);
        for (x, y) in b.iter().zip(&back) {
            assert_eq!(x.estimate, y.estimate);
            assert_eq!(x.tau_r, y.tau_r);
            assert_eq!(x.ta_code, y.ta_code);
            assert_eq!(x.true_rtt, y.true_rtt);
        }

        let mut csv_buf = Vec::new();
        write_capture_csv(&mut csv_buf, &b).unwrap();
        assert!(csv_buf.starts_with(b"m,tau_r,slot_time,k,re,im\n"));
        let back = read_capture_csv(csv_buf.as_slice(), 1536).unwrap();
        for (x, y) in b.iter().zip(&back) {
            assert_eq!(x.estimate, y.estimate);
            assert_eq!(x.tau_r, y.tau_r);
        }
    }

    #[test]
    fn estimate_csv_round_trip() {
        let m = &batch(1)[0];
        let mut buf = Vec::new();
        write_estimate_csv(&mut buf, &m.estimate).unwrap();
        assert!(buf.starts_with(b"k,re,im\n"));
        let back = read_estimate_csv(buf.as_slice(), 1536, m.estimate.slot_time).unwrap();
        assert_eq!(back, m.estimate);
        assert!(read_estimate_csv("k,re,im\n2000,1,0\n".as_bytes(), 1536, 0.0).is_err());
    }

    #[test]
    fn trace_jsonl_round_trip() {
        use crate::signaling::{run_rtt_session, Scenario, SessionConfig};
        let trace = run_rtt_session(
            &SessionConfig::proposed(2),
            &Scenario {
                snr_db: 5.0,
                ..Scenario::default()
            },
            &SystemConfig::default(),
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        let mut buf = Vec::new();
        write_trace_jsonl(&mut buf, &trace).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.lines().next().unwrap().starts_with(r#"{"record":"event""#));
        let back = read_trace_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, trace);
    }
}
