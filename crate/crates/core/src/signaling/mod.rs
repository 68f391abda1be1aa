//! Positioning trigger and the gNB/UE exchange that produces SRS batches.

mod dci;
mod session;

pub use dci::{
    build_dci, DciFormatXY, DciIds, IRnti, RrcState, Scrambling, PRACH_MASK_BITS, PREAMBLE_INDEX_BITS, SSB_INDEX_BITS,
    UL_SUL_BITS,
};
pub use session::{
    legacy_ue_trace, run_rtt_session, Actor, EventKind, Scenario, SessionConfig, SessionMode, SessionTrace, TraceEvent,
};
