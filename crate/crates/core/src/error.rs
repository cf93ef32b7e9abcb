use thiserror::Error;

use crate::config::{Epoch, ProcessId};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClockError {
    #[error("invalid clock config: {0}")]
    InvalidConfig(String),
    #[error("cannot shift timestamp backwards from mx {mx} to {newmx}")]
    InvalidShift { mx: Epoch, newmx: Epoch },
    #[error("merge requires equal epochs, got {left} and {right}")]
    EpochMismatch { left: Epoch, right: Epoch },
    #[error("process {pid} out of range for n = {n}")]
    ProcessOutOfRange { pid: ProcessId, n: usize },
    #[error("timestamp is not valid under this config: {0}")]
    IncompatibleTimestamp(String),
    #[error("process {0} cannot receive its own message")]
    SelfMessage(ProcessId),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PackError {
    #[error("cannot extract {bits} bits at position {pos} from a {width}-bit word")]
    BitRange { bits: u32, pos: u32, width: u32 },
    #[error("lane index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("value {value} does not fit in {bits} bits")]
    ValueOverflow { value: u64, bits: u32 },
    #[error("{field} value {value} overflows its {bits}-bit field")]
    EncodingOverflow { field: &'static str, value: u64, bits: u32 },
    #[error("packed timestamp has {got} words, expected {expected}")]
    BadLength { got: usize, expected: String },
    #[error(transparent)]
    Clock(#[from] ClockError),
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("trace mixes JSONL and ASCII records (line {line})")]
    MixedFormats { line: usize },
    #[error("trace is missing its config header")]
    MissingHeader,
    #[error("invalid trace: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Pack(#[from] PackError),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Clock(#[from] ClockError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Why an event cannot be replayed yet.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Constraint {
    /// A remaining event has a timestamp that is Before this one.
    Before { predecessor: usize },
    /// An earlier event on the same node has not been replayed.
    SameNode { predecessor: usize },
    /// The matching SEND has not been replayed.
    SendRecv { predecessor: usize },
    /// The event has already been replayed.
    AlreadyReplayed,
}

impl std::fmt::Display for Constraint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Constraint::Before { predecessor } => {
                write!(f, "event {predecessor} has a smaller timestamp and is not replayed")
            }
            Constraint::SameNode { predecessor } => {
                write!(f, "earlier event {predecessor} on the same node is not replayed")
            }
            Constraint::SendRecv { predecessor } => {
                write!(f, "matching send {predecessor} is not replayed")
            }
            Constraint::AlreadyReplayed => write!(f, "event was already replayed"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("unknown event key {0}")]
    UnknownEvent(usize),
    #[error("event {key} is not in the frontier: {constraint}")]
    NotInFrontier { key: usize, constraint: Constraint },
    #[error("ordering cycle between events {a} and {b}")]
    Cycle { a: usize, b: usize },
    #[error("trace has {events} events, above the exhaustive bound of {bound}; use random sampling or set a limit")]
    TooManyEvents { events: usize, bound: usize },
    #[error("sequence is not a permutation of the trace: {0}")]
    NotPermutation(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Clock(#[from] ClockError),
}
