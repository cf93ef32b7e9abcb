//! Replay clock (RepCl) toolkit.
//!
//! A RepCl timestamp combines an HLC-like epoch (`mx`) with a sparse set of
//! per-process offsets and counters. Processes that have not been heard from
//! within the clock-skew window cost nothing to store, so the timestamp stays
//! small while still separating causally ordered events from events that could
//! have happened in either order.
//!
//! The crate is organised as:
//!
//! * [`config`] / [`clock`]: the timestamp value type, update rules and the
//!   comparison relation.
//! * [`packed`]: the bit-exact word encoding (mx word, bitmap, offset lanes,
//!   counter lanes).
//! * [`sim`]: a deterministic discrete-event simulator with noisy node-local
//!   clocks and a vector-clock oracle.
//! * [`trace`]: JSONL, binary and legacy ASCII trace formats.
//! * [`replay`]: frontier computation, guided/random/exhaustive replay and
//!   sequence validation.
//! * [`metrics`]: overhead statistics, trend checks and feasibility sweeps.

pub mod clock;
pub mod config;
pub mod error;
pub mod metrics;
pub mod packed;
pub mod replay;
pub mod sim;
pub mod trace;

mod lanes;

pub use clock::{
    advance_receive, advance_send_local, compare, compare_trusted, epoch_of, equal_offset,
    knowledge_of, merge_same_epoch, shift, CompareResult, RepClTimestamp,
};
pub use config::{ClockConfig, CounterMode, Epoch, ProcessId};
pub use error::{ClockError, PackError, ReplayError, SimError, TraceError};
pub use packed::{decode_timestamp, encode_timestamp, PackedTimestamp};
pub use replay::{ReplaySession, Verdict};
pub use sim::{SimParams, SimOutput};
pub use trace::{EventRecord, EventType, TraceLog};
