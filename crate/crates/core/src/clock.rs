//! The RepCl timestamp and its update and comparison rules.
//!
//! A timestamp `⟨mx, offsets, counters⟩` records, for every process `k`, the
//! latest epoch of `k` the owner knows about as `mx - offset(k)`. Entries whose
//! offset would reach `epsilon` are not stored: the clock-skew bound already
//! guarantees that much knowledge, so an absent entry *means* `offset = epsilon`.
//!
//! All operations are pure and return new values.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::{ClockConfig, CounterMode, Epoch, ProcessId};
use crate::error::ClockError;
use crate::lanes::SparseLanes;

/// Outcome of comparing two timestamps under the RepCl `<` relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompareResult {
    Before,
    After,
    Concurrent,
    Equal,
}

impl CompareResult {
    pub fn reverse(self) -> Self {
        match self {
            CompareResult::Before => CompareResult::After,
            CompareResult::After => CompareResult::Before,
            other => other,
        }
    }

    pub fn is_ordered(self) -> bool {
        matches!(self, CompareResult::Before | CompareResult::After)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum Counters {
    /// Non-zero counters only.
    Full(SparseLanes),
    Sum(u32),
}

/// A RepCl timestamp owned by one process.
///
/// The representation is canonical: offsets are stored only when `< epsilon`
/// and counters only when non-zero, so structural equality is value equality.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RepClTimestamp {
    mx: Epoch,
    owner: ProcessId,
    offsets: SparseLanes,
    counters: Counters,
}

/// `floor(pt_us / interval_us)`.
pub fn epoch_of(pt_us: u64, config: &ClockConfig) -> Epoch {
    pt_us / config.interval_us
}

impl RepClTimestamp {
    /// State of a process before its first event: no knowledge at all.
    pub fn initial(owner: ProcessId, config: &ClockConfig) -> Self {
        RepClTimestamp {
            mx: 0,
            owner,
            offsets: SparseLanes::new(),
            counters: empty_counters(config.counter_mode),
        }
    }

    /// Timestamp of a first event at `epoch`: `⟨epoch, {owner: 0}⟩`.
    pub fn fresh(owner: ProcessId, epoch: Epoch, config: &ClockConfig) -> Self {
        let mut ts = Self::initial(owner, config);
        ts.mx = epoch;
        ts.offsets.insert(owner, 0);
        ts
    }

    /// Builds a timestamp from explicit offsets. Offsets `>= epsilon` are
    /// treated as absent. Counters start at zero.
    pub fn from_offsets(
        owner: ProcessId,
        mx: Epoch,
        offsets: impl IntoIterator<Item = (ProcessId, u32)>,
        config: &ClockConfig,
    ) -> Result<Self, ClockError> {
        check_pid(owner, config)?;
        let mut lanes = SparseLanes::new();
        for (pid, off) in offsets {
            check_pid(pid, config)?;
            if off < config.epsilon {
                lanes.insert(pid, off);
            }
        }
        Ok(RepClTimestamp {
            mx,
            owner,
            offsets: lanes,
            counters: empty_counters(config.counter_mode),
        })
    }

    /// Replaces the per-process counters. Only valid in [`CounterMode::Full`].
    pub fn with_counters(
        mut self,
        counters: impl IntoIterator<Item = (ProcessId, u32)>,
    ) -> Result<Self, ClockError> {
        let Counters::Full(_) = self.counters else {
            return Err(ClockError::IncompatibleTimestamp(
                "per-process counters on a sum-mode timestamp".into(),
            ));
        };
        let lanes = counters.into_iter().filter(|&(_, c)| c != 0).collect();
        self.counters = Counters::Full(lanes);
        Ok(self)
    }

    /// Replaces the scalar counter. Only valid in [`CounterMode::Sum`].
    pub fn with_counter_sum(mut self, sum: u32) -> Result<Self, ClockError> {
        let Counters::Sum(_) = self.counters else {
            return Err(ClockError::IncompatibleTimestamp(
                "scalar counter on a full-mode timestamp".into(),
            ));
        };
        self.counters = Counters::Sum(sum);
        Ok(self)
    }

    pub fn mx(&self) -> Epoch {
        self.mx
    }

    pub fn owner(&self) -> ProcessId {
        self.owner
    }

    pub fn counter_mode(&self) -> CounterMode {
        match self.counters {
            Counters::Full(_) => CounterMode::Full,
            Counters::Sum(_) => CounterMode::Sum,
        }
    }

    /// Stored offset for `pid`, `None` when absent (i.e. `epsilon`).
    pub fn offset(&self, pid: ProcessId) -> Option<u32> {
        self.offsets.get(pid)
    }

    /// Offset with the absent-means-epsilon rule applied.
    pub fn offset_or_epsilon(&self, pid: ProcessId, config: &ClockConfig) -> u32 {
        self.offsets.get(pid).unwrap_or(config.epsilon)
    }

    /// Stored `(pid, offset)` pairs in ascending pid order.
    pub fn offsets(&self) -> impl Iterator<Item = (ProcessId, u32)> + '_ {
        self.offsets.iter()
    }

    /// Bit `k` is set iff an offset for process `k` is stored.
    pub fn bitmap(&self) -> u64 {
        self.offsets.bitmap()
    }

    /// Number of stored offsets.
    pub fn offsets_stored(&self) -> usize {
        self.offsets.len()
    }

    /// Stored offsets excluding the owner's own entry.
    pub fn remote_offsets_stored(&self) -> usize {
        self.offsets.len() - usize::from(self.offsets.contains(self.owner))
    }

    /// Counter of `pid` (0 in sum mode or when unset).
    pub fn counter(&self, pid: ProcessId) -> u32 {
        match &self.counters {
            Counters::Full(l) => l.get(pid).unwrap_or(0),
            Counters::Sum(_) => 0,
        }
    }

    /// Non-zero `(pid, counter)` pairs. Empty in sum mode.
    pub fn counters(&self) -> Vec<(ProcessId, u32)> {
        match &self.counters {
            Counters::Full(l) => l.iter().collect(),
            Counters::Sum(_) => Vec::new(),
        }
    }

    /// Sum of all counters (the scalar itself in sum mode).
    pub fn counter_sum(&self) -> u64 {
        match &self.counters {
            Counters::Full(l) => l.iter().map(|(_, c)| c as u64).sum(),
            Counters::Sum(s) => *s as u64,
        }
    }

    /// Largest single counter value (the scalar in sum mode).
    pub fn max_counter(&self) -> u32 {
        match &self.counters {
            Counters::Full(l) => l.iter().map(|(_, c)| c).max().unwrap_or(0),
            Counters::Sum(s) => *s,
        }
    }

    pub fn has_counters(&self) -> bool {
        match &self.counters {
            Counters::Full(l) => !l.is_empty(),
            Counters::Sum(s) => *s != 0,
        }
    }

    /// Dense knowledge vector `mx - offset(k)` for `k in 0..n`.
    pub fn knowledge_vector(&self, config: &ClockConfig) -> Vec<i64> {
        (0..config.n)
            .map(|k| self.mx as i64 - self.offset_or_epsilon(k, config) as i64)
            .collect()
    }

    /// Checks that the timestamp can live under `config`.
    pub fn validate(&self, config: &ClockConfig) -> Result<(), ClockError> {
        let bad = |m: String| Err(ClockError::IncompatibleTimestamp(m));
        if self.owner >= config.n {
            return bad(format!("owner {} >= n = {}", self.owner, config.n));
        }
        if self.offsets.bitmap() & !config.process_mask() != 0 {
            return bad(format!("offset entry for a process >= n = {}", config.n));
        }
        if let Some((pid, off)) = self.offsets.iter().find(|&(_, o)| o >= config.epsilon) {
            return bad(format!("offset {off} for process {pid} >= epsilon {}", config.epsilon));
        }
        match (&self.counters, config.counter_mode) {
            (Counters::Full(l), CounterMode::Full) => {
                if l.bitmap() & !config.process_mask() != 0 {
                    return bad(format!("counter for a process >= n = {}", config.n));
                }
            }
            (Counters::Sum(_), CounterMode::Sum) => {}
            _ => return bad("counter mode does not match config".into()),
        }
        Ok(())
    }

    fn set_own_counter_incremented(&mut self, config: &ClockConfig) {
        let max = config.counter_max();
        match &mut self.counters {
            Counters::Full(l) => {
                let c = l.get(self.owner).unwrap_or(0);
                l.insert(self.owner, c.saturating_add(1).min(max));
            }
            Counters::Sum(s) => *s = s.saturating_add(1).min(max),
        }
    }

    fn reset_counters(&mut self) {
        match &mut self.counters {
            Counters::Full(l) => l.clear(),
            Counters::Sum(s) => *s = 0,
        }
    }
}

impl fmt::Debug for RepClTimestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "⟨{}, {{", self.mx)?;
        for (i, (pid, off)) in self.offsets.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{pid}:{off}")?;
        }
        write!(f, "}}")?;
        match &self.counters {
            Counters::Full(l) if !l.is_empty() => {
                write!(f, ", ctr {{")?;
                for (i, (pid, c)) in l.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{pid}:{c}")?;
                }
                write!(f, "}}")?;
            }
            Counters::Sum(s) if *s != 0 => write!(f, ", ctr Σ{s}")?,
            _ => {}
        }
        write!(f, " @p{}⟩", self.owner)
    }
}

fn empty_counters(mode: CounterMode) -> Counters {
    match mode {
        CounterMode::Full => Counters::Full(SparseLanes::new()),
        CounterMode::Sum => Counters::Sum(0),
    }
}

fn check_pid(pid: ProcessId, config: &ClockConfig) -> Result<(), ClockError> {
    if pid >= config.n {
        Err(ClockError::ProcessOutOfRange { pid, n: config.n })
    } else {
        Ok(())
    }
}

/// Moves `mx` forward to `newmx`, keeping every entry's knowledge
/// `mx - offset` fixed. Entries whose offset reaches `epsilon` are dropped.
pub fn shift(
    ts: &RepClTimestamp,
    newmx: Epoch,
    config: &ClockConfig,
) -> Result<RepClTimestamp, ClockError> {
    if newmx < ts.mx {
        return Err(ClockError::InvalidShift { mx: ts.mx, newmx });
    }
    let mut out = ts.clone();
    shift_in_place(&mut out, newmx, config);
    Ok(out)
}

fn shift_in_place(ts: &mut RepClTimestamp, newmx: Epoch, config: &ClockConfig) {
    let delta = newmx - ts.mx;
    if delta > 0 {
        let eps = config.epsilon as u64;
        ts.offsets.retain_map(|_, off| {
            let shifted = off as u64 + delta;
            (shifted < eps).then_some(shifted as u32)
        });
        ts.mx = newmx;
    }
}

/// Pointwise minimum of offsets for two timestamps at the same epoch.
/// The result keeps `t1`'s owner and counters.
pub fn merge_same_epoch(
    t1: &RepClTimestamp,
    t2: &RepClTimestamp,
    _config: &ClockConfig,
) -> Result<RepClTimestamp, ClockError> {
    if t1.mx != t2.mx {
        return Err(ClockError::EpochMismatch { left: t1.mx, right: t2.mx });
    }
    let mut out = t1.clone();
    merge_offsets_into(&mut out, t2);
    Ok(out)
}

fn merge_offsets_into(dst: &mut RepClTimestamp, src: &RepClTimestamp) {
    for (pid, off) in src.offsets.iter() {
        match dst.offsets.get(pid) {
            Some(cur) if cur <= off => {}
            _ => dst.offsets.insert(pid, off),
        }
    }
}

/// True iff `mx` and every offset match. Counters are ignored.
pub fn equal_offset(t1: &RepClTimestamp, t2: &RepClTimestamp) -> bool {
    t1.mx == t2.mx && t1.offsets == t2.offsets
}

/// Timestamp of a send or local event at local epoch `epoch_now`.
///
/// If neither `mx` nor the owner's offset moves, only the owner's counter is
/// bumped. Otherwise the timestamp is shifted to the new `mx`, the owner's
/// offset is set from `epoch_now`, and counters are reset. A local epoch
/// older than the owner's recorded knowledge is treated as that knowledge.
pub fn advance_send_local(
    ts: &RepClTimestamp,
    epoch_now: Epoch,
    config: &ClockConfig,
) -> RepClTimestamp {
    let eps = config.epsilon as u64;
    let own_known = ts.mx as i64 - ts.offset_or_epsilon(ts.owner, config) as i64;
    let epoch_now = if ts.offsets.contains(ts.owner) {
        epoch_now.max(own_known.max(0) as u64)
    } else {
        epoch_now
    };
    let newmx = ts.mx.max(epoch_now);
    let new_offset = (newmx - epoch_now).min(eps) as u32;
    let mut out = ts.clone();
    if newmx == ts.mx && ts.offset_or_epsilon(ts.owner, config) == new_offset {
        out.set_own_counter_incremented(config);
    } else {
        shift_in_place(&mut out, newmx, config);
        set_own_offset(&mut out, new_offset, config);
        out.reset_counters();
    }
    out
}

fn set_own_offset(ts: &mut RepClTimestamp, offset: u32, config: &ClockConfig) {
    if offset < config.epsilon {
        ts.offsets.insert(ts.owner, offset);
    } else {
        ts.offsets.remove(ts.owner);
    }
}

/// Timestamp of a receive event at local epoch `epoch_now` for a message
/// stamped `msg`.
///
/// Both timestamps are shifted to `max(mx, msg.mx, epoch_now)` and merged; the
/// owner's own entry additionally reflects `epoch_now`. Counters follow the
/// four cases of whether the result has the same epoch and offsets as the
/// local timestamp, the message, both, or neither.
pub fn advance_receive(
    ts: &RepClTimestamp,
    msg: &RepClTimestamp,
    epoch_now: Epoch,
    config: &ClockConfig,
) -> Result<RepClTimestamp, ClockError> {
    ts.validate(config)?;
    msg.validate(config)?;
    if ts.owner == msg.owner {
        return Err(ClockError::SelfMessage(ts.owner));
    }
    let newmx = ts.mx.max(msg.mx).max(epoch_now);
    let mut merged = ts.clone();
    shift_in_place(&mut merged, newmx, config);
    let mut shifted_msg = msg.clone();
    shift_in_place(&mut shifted_msg, newmx, config);
    merge_offsets_into(&mut merged, &shifted_msg);

    let from_clock = (newmx - epoch_now).min(config.epsilon as u64) as u32;
    if from_clock < merged.offset_or_epsilon(merged.owner, config) {
        set_own_offset(&mut merged, from_clock, config);
    }

    let same_as_local = equal_offset(ts, &merged);
    let same_as_msg = equal_offset(msg, &merged);
    let max = config.counter_max();
    merged.counters = match (&ts.counters, &msg.counters) {
        (Counters::Full(local), Counters::Full(remote)) => {
            let lanes = match (same_as_local, same_as_msg) {
                (true, true) => {
                    let mut l = local.clone();
                    for (pid, c) in remote.iter() {
                        if l.get(pid).unwrap_or(0) < c {
                            l.insert(pid, c);
                        }
                    }
                    Some(l)
                }
                (true, false) => Some(local.clone()),
                (false, true) => Some(remote.clone()),
                (false, false) => None,
            };
            match lanes {
                Some(mut l) => {
                    let c = l.get(ts.owner).unwrap_or(0);
                    l.insert(ts.owner, c.saturating_add(1).min(max));
                    Counters::Full(l)
                }
                None => Counters::Full(SparseLanes::new()),
            }
        }
        (Counters::Sum(local), Counters::Sum(remote)) => {
            let base = match (same_as_local, same_as_msg) {
                (true, true) => Some((*local).max(*remote)),
                (true, false) => Some(*local),
                (false, true) => Some(*remote),
                (false, false) => None,
            };
            Counters::Sum(base.map_or(0, |b| b.saturating_add(1).min(max)))
        }
        _ => unreachable!("validated against the same config"),
    };
    Ok(merged)
}

/// Latest epoch of process `k` known to `ts`: `mx - offset(k)`, with an
/// absent entry counting as `epsilon`. May be negative early in a run.
pub fn knowledge_of(
    ts: &RepClTimestamp,
    k: ProcessId,
    config: &ClockConfig,
) -> Result<i64, ClockError> {
    check_pid(k, config)?;
    Ok(ts.mx as i64 - ts.offset_or_epsilon(k, config) as i64)
}

/// Compares two timestamps after checking both are valid under `config`.
pub fn compare(
    t1: &RepClTimestamp,
    t2: &RepClTimestamp,
    config: &ClockConfig,
) -> Result<CompareResult, ClockError> {
    t1.validate(config)?;
    t2.validate(config)?;
    Ok(compare_trusted(t1, t2, config))
}

/// The RepCl `<` relation, evaluated in both directions.
///
/// `t1 < t2` iff `t2.mx > t1.mx + epsilon`, or the epochs are within
/// `epsilon` and the knowledge vectors satisfy the vector-clock `<`, or the
/// knowledge vectors are identical and the counters satisfy it (scalar `<` in
/// sum mode). Runs in time proportional to the number of stored entries.
///
/// The caller guarantees both timestamps are valid under `config`.
pub fn compare_trusted(
    t1: &RepClTimestamp,
    t2: &RepClTimestamp,
    config: &ClockConfig,
) -> CompareResult {
    let eps = config.epsilon as u64;
    if t2.mx > t1.mx + eps {
        return CompareResult::Before;
    }
    if t1.mx > t2.mx + eps {
        return CompareResult::After;
    }

    let (mut lt, mut gt) = (false, false);
    let union = t1.offsets.bitmap() | t2.offsets.bitmap();
    if union != config.process_mask() {
        // Processes absent from both: knowledge is mx - epsilon on each side.
        note_order(t1.mx as i64, t2.mx as i64, &mut lt, &mut gt);
    }
    for pid in crate::packed::SetBits::new(union) {
        let k1 = t1.mx as i64 - t1.offset_or_epsilon(pid, config) as i64;
        let k2 = t2.mx as i64 - t2.offset_or_epsilon(pid, config) as i64;
        note_order(k1, k2, &mut lt, &mut gt);
        if lt && gt {
            return CompareResult::Concurrent;
        }
    }
    match (lt, gt) {
        (true, false) => return CompareResult::Before,
        (false, true) => return CompareResult::After,
        (true, true) => return CompareResult::Concurrent,
        (false, false) => {}
    }

    let (mut lt, mut gt) = (false, false);
    match (&t1.counters, &t2.counters) {
        (Counters::Full(a), Counters::Full(b)) => {
            for pid in crate::packed::SetBits::new(a.bitmap() | b.bitmap()) {
                let c1 = a.get(pid).unwrap_or(0);
                let c2 = b.get(pid).unwrap_or(0);
                note_order(c1 as i64, c2 as i64, &mut lt, &mut gt);
            }
        }
        (Counters::Sum(a), Counters::Sum(b)) => note_order(*a as i64, *b as i64, &mut lt, &mut gt),
        _ => return CompareResult::Concurrent,
    }
    match (lt, gt) {
        (true, false) => CompareResult::Before,
        (false, true) => CompareResult::After,
        (true, true) => CompareResult::Concurrent,
        (false, false) if t1.mx == t2.mx => CompareResult::Equal,
        (false, false) => CompareResult::Concurrent,
    }
}

#[inline]
fn note_order(a: i64, b: i64, lt: &mut bool, gt: &mut bool) {
    if a < b {
        *lt = true;
    } else if a > b {
        *gt = true;
    }
}
