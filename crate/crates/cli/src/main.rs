use std::fs::File;
use std::io::{BufReader, BufWriter, Read};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use rtt_core::capture::{
    read_capture, read_capture_csv, read_estimate, read_estimate_csv, read_trace_jsonl, write_capture,
    write_trace_jsonl, CAPTURE_MAGIC,
};
use rtt_core::channel::{ClockDriftModel, CorrectionPolicy, Measurement};
use rtt_core::estimators::{matched_filter_rtt, peak_detector_range, Method, MfSearchGrid};
use rtt_core::harness::{read_cdf_csv, run_experiment, write_results, ExperimentConfig};
use rtt_core::numerology::{TaCode, SPEED_OF_LIGHT};
use rtt_core::signaling::{legacy_ue_trace, run_rtt_session, Scenario, SessionConfig};
use rtt_core::SystemConfig;

#[derive(Parser)]
#[command(name = "nr-rtt", version, about = "5G NR round-trip-time ranging toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a Monte Carlo experiment and write CDF CSVs plus a manifest.
    Simulate {
        /// TOML experiment config; defaults apply to missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use the full trial count (5000 measurements per distance and SNR).
        #[arg(long)]
        full: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Estimate range from captured channel estimates.
    Estimate {
        /// Binary capture/estimate, CSV (`m,tau_r,...` or `k,re,im`) or JSONL trace.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodArg::Mf)]
        method: MethodArg,
        /// Split the measurements into consecutive batches of this size.
        #[arg(long)]
        m: Option<usize>,
        /// TOML experiment config supplying the system parameters.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Run one signaling session and write its trace as JSON lines.
    Trace {
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 20)]
        rounds: usize,
        #[arg(long, default_value_t = 10.0)]
        distance: f64,
        /// Per-subcarrier SNR in dB, or `inf`.
        #[arg(long, default_value_t = f64::INFINITY)]
        snr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2.0)]
        drift_ppm: f64,
        /// Also write the measurements as a binary capture.
        #[arg(long)]
        capture: Option<PathBuf>,
    },
    /// Percentile of an error CDF (`error_m,cum_prob`) or raw error column.
    Cdf {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.9)]
        percentile: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Mf,
    Pd,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Mf => Method::Mf,
            MethodArg::Pd => Method::Pd,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Proposed,
    Phytest,
    Legacy,
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            Ok(ExperimentConfig::from_toml(&text)?)
        }
        None => Ok(ExperimentConfig::default()),
    }
}

fn simulate(config: Option<&Path>, full: bool, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut cfg = load_config(config)?;
    if full {
        cfg = cfg.full();
    }
    if let Some(s) = seed {
        cfg.base_seed = s;
    }
    let results = run_experiment(&cfg)?;
    write_results(&results, out)?;
    for e in &results.entries {
        println!(
            "{} snr={} dB M={}: p50={:.3} m p90={:.3} m ({} batches)",
            e.method,
            e.snr_db,
            e.m,
            e.cdf.percentile(0.5)?,
            e.cdf.percentile(0.9)?,
            e.cdf.len()
        );
    }
    for (configured, estimated) in &results.estimated_snr_db {
        println!("snr {configured} dB: estimated {estimated:.2} dB");
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn load_measurements(path: &Path, system: &SystemConfig) -> Result<Vec<Measurement>> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut reader = BufReader::new(file);
    let batch = match ext.as_str() {
        "jsonl" | "json" => read_trace_jsonl(reader)?.measurements,
        "csv" => {
            let mut text = String::new();
            reader.read_to_string(&mut text)?;
            if text.starts_with("m,") {
                read_capture_csv(text.as_bytes(), system.fft_size)?
            } else {
                let estimate = read_estimate_csv(text.as_bytes(), system.fft_size, 0.0)?;
                vec![Measurement {
                    estimate,
                    tau_r: 0.0,
                    ta_code: TaCode(0),
                    slot_time: 0.0,
                    true_rtt: f64::NAN,
                    outside_cp: false,
                }]
            }
        }
        _ => {
            let mut bytes = Vec::new();
            reader.read_to_end(&mut bytes)?;
            if bytes.starts_with(CAPTURE_MAGIC) {
                read_capture(&mut bytes.as_slice())?
            } else {
                let estimate = read_estimate(&mut bytes.as_slice())?;
                vec![Measurement {
                    slot_time: estimate.slot_time,
                    estimate,
                    tau_r: 0.0,
                    ta_code: TaCode(0),
                    true_rtt: f64::NAN,
                    outside_cp: false,
                }]
            }
        }
    };
    if batch.is_empty() {
        bail!("{} holds no measurements", path.display());
    }
    Ok(batch)
}

fn estimate(input: &Path, method: Method, m: Option<usize>, config: Option<&Path>) -> Result<()> {
    let system = load_config(config)?.system;
    let batch = load_measurements(input, &system)?;
    let size = m.unwrap_or(batch.len());
    if size == 0 {
        bail!("--m must be at least 1");
    }
    if size > batch.len() {
        bail!("--m {size} exceeds the {} measurements in the input", batch.len());
    }
    for (i, chunk) in batch.chunks_exact(size).enumerate() {
        let est = match method {
            Method::Mf => matched_filter_rtt(chunk, &MfSearchGrid::default_for(chunk, &system)?, &system)?,
            Method::Pd => peak_detector_range(chunk, true, &system)?,
        };
        let mut line = format!(
            "batch {i}: method={} m={} rtt_s={:.6e} range_m={:.4}",
            est.method, est.m_used, est.rtt, est.range_m
        );
        if est.boundary {
            line.push_str(" boundary=true");
        }
        let truth: Vec<f64> = chunk.iter().map(|m| m.true_rtt).filter(|t| t.is_finite()).collect();
        if truth.len() == chunk.len() {
            let true_range = truth.iter().sum::<f64>() / truth.len() as f64 * SPEED_OF_LIGHT / 2.0;
            line.push_str(&format!(" error_m={:.4}", (est.range_m - true_range).abs()));
        }
        println!("{line}");
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn trace(
    mode: ModeArg,
    out: &Path,
    rounds: usize,
    distance: f64,
    snr: f64,
    seed: u64,
    drift_ppm: f64,
    capture: Option<&Path>,
) -> Result<()> {
    let system = SystemConfig::default();
    let mut scenario = Scenario {
        distance_m: distance,
        snr_db: snr,
        drift: ClockDriftModel {
            drift_ppm,
            ..ClockDriftModel::default()
        },
        ..Scenario::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let trace = match mode {
        ModeArg::Proposed => run_rtt_session(&SessionConfig::proposed(rounds), &scenario, &system, &mut rng)?,
        ModeArg::Phytest => run_rtt_session(&SessionConfig::phytest(rounds), &scenario, &system, &mut rng)?,
        ModeArg::Legacy => {
            scenario.drift.correction_policy = CorrectionPolicy::legacy();
            legacy_ue_trace(&SessionConfig::phytest(rounds), &scenario, &system, &mut rng)?
        }
    };
    let file = File::create(out).with_context(|| format!("creating {}", out.display()))?;
    write_trace_jsonl(BufWriter::new(file), &trace)?;
    if let Some(path) = capture {
        let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
        write_capture(&mut w, &trace.measurements)?;
    }
    println!(
        "{} events, {} measurements -> {}",
        trace.events.len(),
        trace.measurements.len(),
        out.display()
    );
    Ok(())
}

fn cdf(input: &Path, p: f64) -> Result<()> {
    let table = read_cdf_csv(input)?;
    println!("{}", table.percentile(p)?);
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Simulate { config, full, seed, out } => simulate(config.as_deref(), full, seed, &out),
        Command::Estimate {
            input,
            method,
            m,
            config,
        } => estimate(&input, method.into(), m, config.as_deref()),
        Command::Trace {
            mode,
            out,
            rounds,
            distance,
            snr,
            seed,
            drift_ppm,
            capture,
        } => trace(mode, &out, rounds, distance, snr, seed, drift_ppm, capture.as_deref()),
        Command::Cdf { input, percentile } => cdf(&input, percentile),
    }
}
