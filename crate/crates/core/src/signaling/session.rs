//! Slot-driven gNB/UE exchange producing timed SRS measurements.
//!
//! Proposed mode, per round:
//!
//! ```text
//! gNB  DCI X_Y ─────────────►  UE corrects DL timing
//! UE   CF-PRACH (dedicated preamble) ──► gNB estimates TA
//! gNB  RAR(TA) ─────────────►  UE applies TA after `slots_rar_to_srs`
//! UE   SRS ─────────────────►  gNB stores (TA, channel estimate)
//! ```
//!
//! Phy-test mode keeps one TA for the whole session and sends the SRS a
//! fixed number of slots after each SSB.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::dci::{build_dci, DciIds, RrcState};
use crate::channel::{CarrierPhase, ClockDriftModel, CorrectionPolicy, DriftTimeline, LinkModel, Measurement};
use crate::error::{Error, Result};
use crate::numerology::{quantize_rtt_to_ta, range_to_rtt, TaCode, TaRounding};
use crate::system::SystemConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionMode {
    /// DCI-triggered PRACH + RAR + SRS every round.
    Proposed,
    /// Fixed TA, SRS at a fixed offset after each SSB.
    #[default]
    Phytest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub mode: SessionMode,
    /// Number of rounds, one SRS measurement each.
    pub num_rounds: usize,
    pub slots_dci_to_prach: u64,
    pub slots_prach_to_rar: u64,
    pub slots_rar_to_srs: u64,
    pub phytest_ssb_to_srs_offset: u64,
    /// Slots between the starts of consecutive rounds.
    pub round_period: u64,
    pub rrc_state: RrcState,
    pub preamble_index: u8,
    pub srs_request: u8,
    pub ids: DciIds,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            mode: SessionMode::Proposed,
            num_rounds: 1,
            slots_dci_to_prach: 6,
            slots_prach_to_rar: 2,
            slots_rar_to_srs: 6,
            phytest_ssb_to_srs_offset: 20,
            round_period: 40,
            rrc_state: RrcState::Connected,
            preamble_index: 5,
            srs_request: 1,
            ids: DciIds::default(),
        }
    }
}

impl SessionConfig {
    pub fn phytest(num_rounds: usize) -> Self {
        Self {
            mode: SessionMode::Phytest,
            num_rounds,
            ..Self::default()
        }
    }

    pub fn proposed(num_rounds: usize) -> Self {
        Self {
            mode: SessionMode::Proposed,
            num_rounds,
            ..Self::default()
        }
    }

    /// Slots from the round's trigger (DCI or SSB) to its SRS.
    pub fn trigger_to_srs_slots(&self) -> u64 {
        match self.mode {
            SessionMode::Proposed => self.slots_dci_to_prach + self.slots_prach_to_rar + self.slots_rar_to_srs,
            SessionMode::Phytest => self.phytest_ssb_to_srs_offset,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_rounds == 0 {
            return Err(Error::Parameter("a session needs at least one round".into()));
        }
        if self.mode == SessionMode::Proposed && (self.slots_dci_to_prach == 0 || self.slots_prach_to_rar == 0) {
            return Err(Error::Parameter(
                "PRACH must follow the DCI and the RAR must follow the PRACH by at least one slot".into(),
            ));
        }
        if self.round_period <= self.trigger_to_srs_slots() {
            return Err(Error::Parameter(format!(
                "round period {} slots must exceed the {}-slot trigger-to-SRS span",
                self.round_period,
                self.trigger_to_srs_slots()
            )));
        }
        Ok(())
    }
}

/// Physical situation of the UE during a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub distance_m: f64,
    /// Transceiver delay added to the propagation RTT.
    pub hardware_delay_s: f64,
    pub snr_db: f64,
    pub drift: ClockDriftModel,
    /// Standard deviation of the gNB's PRACH delay estimate, seconds.
    pub ta_jitter_std_s: f64,
    pub ta_rounding: TaRounding,
    pub phase: CarrierPhase,
}

impl Default for Scenario {
    fn default() -> Self {
        Self {
            distance_m: 10.0,
            hardware_delay_s: 0.0,
            snr_db: f64::INFINITY,
            drift: ClockDriftModel::default(),
            ta_jitter_std_s: 0.0,
            ta_rounding: TaRounding::HalfUp,
            phase: CarrierPhase::Random,
        }
    }
}

impl Scenario {
    /// RTT observed at the gNB without drift.
    pub fn true_rtt(&self) -> f64 {
        range_to_rtt(self.distance_m) + self.hardware_delay_s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Actor {
    Gnb,
    Ue,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Ssb,
    Dci,
    DlTimingCorrection,
    Prach,
    Rar,
    TaApplied,
    Srs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub slot: u64,
    pub actor: Actor,
    pub kind: EventKind,
    pub round: Option<usize>,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SessionTrace {
    pub events: Vec<TraceEvent>,
    pub measurements: Vec<Measurement>,
}

impl SessionTrace {
    pub fn events_of(&self, kind: EventKind) -> impl Iterator<Item = &TraceEvent> {
        self.events.iter().filter(move |e| e.kind == kind)
    }
}

#[derive(Debug, Clone, Copy)]
enum Action {
    GnbSsb { round: usize },
    GnbDci { round: usize },
    GnbRar { round: usize, observed_rtt: f64 },
    UeDlSync { round: usize },
    UePrach { round: usize },
    UeSrs { round: usize, ta: TaCode, apply_ta: bool },
    UePeriodicCheck,
}

impl Action {
    fn actor(&self) -> Actor {
        match self {
            Action::GnbSsb { .. } | Action::GnbDci { .. } | Action::GnbRar { .. } => Actor::Gnb,
            _ => Actor::Ue,
        }
    }
}

struct Pending {
    slot: u64,
    seq: u64,
    action: Action,
}

impl Pending {
    fn key(&self) -> (u64, Actor, u64) {
        (self.slot, self.action.actor(), self.seq)
    }
}

impl PartialEq for Pending {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Pending {}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Pending {
    // Reversed: BinaryHeap is a max-heap and the earliest key must pop first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key().cmp(&self.key())
    }
}

struct Session<'a, R: Rng + ?Sized> {
    cfg: &'a SessionConfig,
    scenario: &'a Scenario,
    link: LinkModel,
    rng: &'a mut R,
    queue: BinaryHeap<Pending>,
    seq: u64,
    drift: DriftTimeline,
    jitter: Option<Normal<f64>>,
    trace: SessionTrace,
}

impl<R: Rng + ?Sized> Session<'_, R> {
    fn schedule(&mut self, slot: u64, action: Action) {
        self.queue.push(Pending {
            slot,
            seq: self.seq,
            action,
        });
        self.seq += 1;
    }

    fn time(&self, slot: u64) -> f64 {
        slot as f64 * self.link.timing.slot_duration()
    }

    fn log(&mut self, slot: u64, actor: Actor, kind: EventKind, round: Option<usize>, digest: String) {
        self.trace.events.push(TraceEvent {
            slot,
            actor,
            kind,
            round,
            digest,
        });
    }

    fn quantize(&self, rtt: f64) -> Result<TaCode> {
        quantize_rtt_to_ta(rtt.max(0.0), &self.link.timing, self.scenario.ta_rounding)
            .map_err(|e| Error::Session(format!("RTT outside the PRACH TA range: {e}")))
    }

    fn handle(&mut self, slot: u64, action: Action) -> Result<()> {
        let t = self.time(slot);
        match action {
            Action::GnbSsb { round } => {
                self.log(slot, Actor::Gnb, EventKind::Ssb, Some(round), String::new());
                self.schedule(slot, Action::UeDlSync { round });
            }
            Action::UeDlSync { round } => {
                let proposed = self.cfg.mode == SessionMode::Proposed;
                if proposed || self.scenario.drift.correction_policy == CorrectionPolicy::OnDci {
                    let err = self.drift.error_at(t);
                    self.drift.correct_at(t);
                    self.log(slot, Actor::Ue, EventKind::DlTimingCorrection, Some(round), format!("err={err:.3e}"));
                }
                if proposed {
                    self.schedule(slot + self.cfg.slots_dci_to_prach, Action::UePrach { round });
                } else {
                    let ta = self.fixed_ta()?;
                    self.schedule(
                        slot + self.cfg.phytest_ssb_to_srs_offset,
                        Action::UeSrs {
                            round,
                            ta,
                            apply_ta: false,
                        },
                    );
                }
            }
            Action::GnbDci { round } => {
                let dci = build_dci(
                    self.cfg.rrc_state,
                    self.cfg.preamble_index,
                    self.cfg.srs_request,
                    &self.cfg.ids,
                )?;
                let digest = format!(
                    "{}:{:0width$x} preamble={} srs_req={}",
                    dci.scrambling.as_str(),
                    dci.encode()?,
                    dci.preamble_index,
                    dci.srs_request,
                    width = dci.bit_len().div_ceil(4) as usize
                );
                self.log(slot, Actor::Gnb, EventKind::Dci, Some(round), digest);
                self.schedule(slot, Action::UeDlSync { round });
            }
            Action::UePrach { round } => {
                // The PRACH leaves with the UE's current downlink timing error.
                let observed_rtt = self.scenario.true_rtt() + self.drift.error_at(t);
                self.log(
                    slot,
                    Actor::Ue,
                    EventKind::Prach,
                    Some(round),
                    format!("preamble={}", self.cfg.preamble_index),
                );
                self.schedule(slot + self.cfg.slots_prach_to_rar, Action::GnbRar { round, observed_rtt });
            }
            Action::GnbRar { round, observed_rtt } => {
                let jitter = match self.jitter {
                    Some(d) => d.sample(&mut *self.rng),
                    None => 0.0,
                };
                let ta = self.quantize(observed_rtt + jitter)?;
                self.log(slot, Actor::Gnb, EventKind::Rar, Some(round), format!("ta={}", ta.0));
                self.schedule(
                    slot + self.cfg.slots_rar_to_srs,
                    Action::UeSrs {
                        round,
                        ta,
                        apply_ta: true,
                    },
                );
            }
            Action::UeSrs { round, ta, apply_ta } => {
                if apply_ta {
                    self.log(slot, Actor::Ue, EventKind::TaApplied, Some(round), format!("ta={}", ta.0));
                }
                self.log(slot, Actor::Ue, EventKind::Srs, Some(round), format!("ta={}", ta.0));
                let m = self.link.simulate_measurement(
                    self.scenario.true_rtt(),
                    ta,
                    self.scenario.snr_db,
                    t,
                    &self.drift,
                    &mut *self.rng,
                )?;
                self.trace.measurements.push(m);
            }
            Action::UePeriodicCheck => {
                if let CorrectionPolicy::Periodic {
                    residual_threshold_s,
                    ..
                } = self.scenario.drift.correction_policy
                {
                    let err = self.drift.error_at(t);
                    if err.abs() > residual_threshold_s {
                        self.drift.correct_at(t);
                        self.log(slot, Actor::Ue, EventKind::DlTimingCorrection, None, format!("err={err:.3e}"));
                    }
                }
            }
        }
        Ok(())
    }

    fn fixed_ta(&self) -> Result<TaCode> {
        self.quantize(self.scenario.true_rtt())
    }
}

/// Runs one RTT session and returns its event trace and the measurements the
/// gNB collected, one per round.
pub fn run_rtt_session<R: Rng + ?Sized>(
    cfg: &SessionConfig,
    scenario: &Scenario,
    system: &SystemConfig,
    rng: &mut R,
) -> Result<SessionTrace> {
    cfg.validate()?;
    let link = LinkModel::new(system)?.with_phase(scenario.phase);
    let jitter = if scenario.ta_jitter_std_s > 0.0 {
        Some(Normal::new(0.0, scenario.ta_jitter_std_s).map_err(|e| Error::Parameter(e.to_string()))?)
    } else {
        None
    };
    if !scenario.distance_m.is_finite() || scenario.distance_m < 0.0 {
        return Err(Error::Session(format!("invalid distance {} m", scenario.distance_m)));
    }
    let mut session = Session {
        cfg,
        scenario,
        link,
        rng,
        queue: BinaryHeap::new(),
        seq: 0,
        drift: DriftTimeline::new(scenario.drift),
        jitter,
        trace: SessionTrace::default(),
    };
    session.fixed_ta()?;

    for round in 0..cfg.num_rounds {
        let slot = round as u64 * cfg.round_period;
        let action = match cfg.mode {
            SessionMode::Proposed => Action::GnbDci { round },
            SessionMode::Phytest => Action::GnbSsb { round },
        };
        session.schedule(slot, action);
    }
    if let CorrectionPolicy::Periodic { interval_s, .. } = scenario.drift.correction_policy {
        let every = (interval_s / session.link.timing.slot_duration()).round() as u64;
        if every == 0 {
            return Err(Error::Parameter("periodic correction interval shorter than a slot".into()));
        }
        let horizon = (cfg.num_rounds as u64 - 1) * cfg.round_period + cfg.trigger_to_srs_slots();
        let mut slot = every;
        while slot <= horizon {
            session.schedule(slot, Action::UePeriodicCheck);
            slot += every;
        }
    }

    while let Some(p) = session.queue.pop() {
        session.handle(p.slot, p.action)?;
    }
    Ok(session.trace)
}

/// Phy-test session with the UE correcting its timing only on its own
/// periodic schedule, as commercial Release-15 UEs do. An `OnDci` policy in
/// the scenario is replaced by [`CorrectionPolicy::legacy`].
pub fn legacy_ue_trace<R: Rng + ?Sized>(
    cfg: &SessionConfig,
    scenario: &Scenario,
    system: &SystemConfig,
    rng: &mut R,
) -> Result<SessionTrace> {
    let cfg = SessionConfig {
        mode: SessionMode::Phytest,
        ..cfg.clone()
    };
    let mut scenario = scenario.clone();
    if scenario.drift.correction_policy == CorrectionPolicy::OnDci {
        scenario.drift.correction_policy = CorrectionPolicy::legacy();
    }
    run_rtt_session(&cfg, &scenario, system, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn quiet() -> Scenario {
        Scenario {
            drift: ClockDriftModel::none(),
            phase: CarrierPhase::Fixed(0.0),
            ..Scenario::default()
        }
    }

    #[test]
    fn single_round_proposed() {
        let sys = SystemConfig::default();
        let scenario = Scenario {
            distance_m: 100.0,
            ..quiet()
        };
        let trace = run_rtt_session(&SessionConfig::proposed(1), &scenario, &sys, &mut rng(1)).unwrap();
        assert_eq!(trace.measurements.len(), 1);
        let m = &trace.measurements[0];
        let timing = sys.timing().unwrap();
        let ta = quantize_rtt_to_ta(scenario.true_rtt(), &timing, TaRounding::HalfUp).unwrap();
        assert_eq!(m.ta_code, ta);
        let residual = scenario.true_rtt() - m.tau_r;
        for k in m.estimate.sounded_indices() {
            let want = crate::channel::phase_ramp(k, sys.delta_f(), residual);
            assert!((m.estimate.h_hat[k] - want).norm() < 1e-9);
        }
    }

    #[test]
    fn event_ordering_per_round() {
        let sys = SystemConfig::default();
        let cfg = SessionConfig::proposed(5);
        let trace = run_rtt_session(&cfg, &quiet(), &sys, &mut rng(2)).unwrap();
        for w in trace.events.windows(2) {
            assert!(
                (w[0].slot, w[0].actor) <= (w[1].slot, w[1].actor),
                "{:?} then {:?}",
                w[0],
                w[1]
            );
        }
        for round in 0..5 {
            let slot_of = |kind| {
                trace
                    .events
                    .iter()
                    .find(|e| e.kind == kind && e.round == Some(round))
                    .map(|e| e.slot)
                    .unwrap()
            };
            let (dci, prach, rar, srs) = (
                slot_of(EventKind::Dci),
                slot_of(EventKind::Prach),
                slot_of(EventKind::Rar),
                slot_of(EventKind::Srs),
            );
            assert!(dci < prach && prach < rar);
            assert_eq!(srs, rar + cfg.slots_rar_to_srs);
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let sys = SystemConfig::default();
        let scenario = Scenario {
            snr_db: 0.0,
            ta_jitter_std_s: 1e-7,
            ..Scenario::default()
        };
        let a = run_rtt_session(&SessionConfig::proposed(4), &scenario, &sys, &mut rng(3)).unwrap();
        let b = run_rtt_session(&SessionConfig::proposed(4), &scenario, &sys, &mut rng(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn proposed_drift_bounded_by_trigger_gap() {
        let sys = SystemConfig::default();
        let cfg = SessionConfig::proposed(20);
        let scenario = Scenario {
            drift: ClockDriftModel {
                drift_ppm: 2.0,
                ..ClockDriftModel::default()
            },
            ..quiet()
        };
        let trace = run_rtt_session(&cfg, &scenario, &sys, &mut rng(4)).unwrap();
        let gap = cfg.trigger_to_srs_slots() as f64 * sys.timing().unwrap().slot_duration();
        let bound = 2e-6 * gap;
        let corrections: Vec<f64> = trace
            .events_of(EventKind::DlTimingCorrection)
            .map(|e| e.slot as f64 * 0.5e-3)
            .collect();
        assert_eq!(corrections.len(), 20);
        for m in &trace.measurements {
            let e = crate::channel::drift_error(m.slot_time, &scenario.drift, &corrections);
            assert!(e.abs() <= bound * (1.0 + 1e-9));
        }
    }

    #[test]
    fn phytest_keeps_ta_fixed() {
        let sys = SystemConfig::default();
        let scenario = Scenario {
            distance_m: 300.0,
            ..quiet()
        };
        let trace = run_rtt_session(&SessionConfig::phytest(6), &scenario, &sys, &mut rng(5)).unwrap();
        assert_eq!(trace.measurements.len(), 6);
        let ta = trace.measurements[0].ta_code;
        assert!(trace.measurements.iter().all(|m| m.ta_code == ta));
        assert_eq!(trace.events_of(EventKind::Prach).count(), 0);
        for ssb in trace.events_of(EventKind::Ssb) {
            let srs = trace
                .events_of(EventKind::Srs)
                .find(|e| e.round == ssb.round)
                .unwrap();
            assert_eq!(srs.slot, ssb.slot + 20);
        }
    }

    #[test]
    fn legacy_periodic_resets() {
        let sys = SystemConfig::default();
        let scenario = Scenario {
            drift: ClockDriftModel {
                drift_ppm: 2.0,
                correction_policy: CorrectionPolicy::legacy(),
                initial_error: 0.0,
            },
            ..quiet()
        };
        let trace = legacy_ue_trace(&SessionConfig::phytest(40), &scenario, &sys, &mut rng(6)).unwrap();
        // 40 rounds of 20 ms: checks at 320, 640 ms.
        let corr: Vec<u64> = trace.events_of(EventKind::DlTimingCorrection).map(|e| e.slot).collect();
        assert_eq!(corr, vec![640, 1280]);
    }

    #[test]
    fn legacy_threshold_defers_reset() {
        let sys = SystemConfig::default();
        let scenario = Scenario {
            drift: ClockDriftModel {
                drift_ppm: 2.0,
                correction_policy: CorrectionPolicy::Periodic {
                    interval_s: 0.1,
                    residual_threshold_s: 0.5e-6,
                },
                initial_error: 0.0,
            },
            ..quiet()
        };
        let trace = legacy_ue_trace(&SessionConfig::phytest(60), &scenario, &sys, &mut rng(7)).unwrap();
        // 2 ppm reaches 0.5 us after 250 ms; the first check past that is 300 ms.
        let corr: Vec<u64> = trace.events_of(EventKind::DlTimingCorrection).map(|e| e.slot).collect();
        assert_eq!(corr, vec![600, 1200, 1800]);
    }

    #[test]
    fn session_errors() {
        let sys = SystemConfig::default();
        let far = Scenario {
            distance_m: 200_000.0,
            ..quiet()
        };
        assert!(matches!(
            run_rtt_session(&SessionConfig::proposed(1), &far, &sys, &mut rng(0)),
            Err(Error::Session(_))
        ));
        let idle = SessionConfig {
            rrc_state: RrcState::Idle,
            ..SessionConfig::proposed(1)
        };
        assert!(matches!(
            run_rtt_session(&idle, &quiet(), &sys, &mut rng(0)),
            Err(Error::UnsupportedState(_))
        ));
        let tight = SessionConfig {
            round_period: 10,
            ..SessionConfig::proposed(2)
        };
        assert!(run_rtt_session(&tight, &quiet(), &sys, &mut rng(0)).is_err());
    }

    #[test]
    fn inactive_dci_digest() {
        let sys = SystemConfig::default();
        let cfg = SessionConfig {
            rrc_state: RrcState::Inactive,
            ..SessionConfig::proposed(1)
        };
        let trace = run_rtt_session(&cfg, &quiet(), &sys, &mut rng(0)).unwrap();
        let dci = trace.events_of(EventKind::Dci).next().unwrap();
        assert!(dci.digest.starts_with("P-RNTI:"), "{}", dci.digest);
    }
}
