//! Replay of a logged computation.
//!
//! An event may be replayed once every event that must precede it has been
//! replayed. Precedence comes from two sources: the clock relation (a remaining
//! event whose timestamp is Before this one) and hard edges taken from the log
//! itself (earlier events on the same node, and the SEND of a RECV). Events are
//! identified by their index in the trace.
//!
//! Timestamps more than `epsilon` epochs apart are always ordered by `mx`, so
//! only remaining events whose `mx` is within `epsilon` of the smallest
//! remaining `mx` can be replayable. The session keeps, for each such
//! candidate, the number of remaining events in its `mx` window that are
//! Before it, and updates those counts as events are replayed.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::sync::Arc;

use rand::seq::IteratorRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::clock::{compare_trusted, CompareResult};
use crate::error::{Constraint, ReplayError};
use crate::trace::{EventType, TraceLog};

/// Default size limit for exhaustive enumeration without an explicit limit.
pub const DEFAULT_ENUMERATION_BOUND: usize = 12;

/// Static ordering structure shared by every session on one trace.
#[derive(Debug)]
struct Structure {
    trace: Arc<TraceLog>,
    /// Event indices sorted by `(mx, index)`.
    by_mx: Vec<usize>,
    /// `mx` of `by_mx[i]`, for range searches.
    mx_sorted: Vec<u64>,
    /// Rank of each event under the `(mx, node, event_id, index)` tie-break.
    tie_rank: Vec<usize>,
    /// Inverse of `tie_rank`.
    by_rank: Vec<usize>,
    /// Hard predecessors of each event: previous event on its node, and the
    /// matching SEND for a RECV.
    hard_preds: Vec<Vec<(usize, Constraint)>>,
    hard_succs: Vec<Vec<usize>>,
}

impl Structure {
    fn build(trace: Arc<TraceLog>) -> Result<Self, ReplayError> {
        trace.validate()?;
        let events = &trace.events;
        let m = events.len();
        let mut by_mx: Vec<usize> = (0..m).collect();
        by_mx.sort_by_key(|&i| (events[i].ts.mx(), i));
        let mx_sorted = by_mx.iter().map(|&i| events[i].ts.mx()).collect();
        let mut by_rank: Vec<usize> = (0..m).collect();
        by_rank.sort_by(|&a, &b| {
            let (ea, eb) = (&events[a], &events[b]);
            (ea.ts.mx(), &ea.node, ea.event_id, a).cmp(&(eb.ts.mx(), &eb.node, eb.event_id, b))
        });
        let mut tie_rank = vec![0; m];
        for (r, &i) in by_rank.iter().enumerate() {
            tie_rank[i] = r;
        }

        let mut hard_preds: Vec<Vec<(usize, Constraint)>> = vec![Vec::new(); m];
        let mut hard_succs = vec![Vec::new(); m];
        let mut last: HashMap<&str, usize> = HashMap::new();
        let sends: HashMap<u64, usize> = events
            .iter()
            .enumerate()
            .filter(|(_, e)| e.event_type == EventType::Send)
            .map(|(i, e)| (e.event_id, i))
            .collect();
        for (i, e) in events.iter().enumerate() {
            if let Some(&p) = last.get(e.node.as_str()) {
                hard_preds[i].push((p, Constraint::SameNode { predecessor: p }));
                hard_succs[p].push(i);
            }
            last.insert(&e.node, i);
            if e.event_type == EventType::Recv {
                let s = sends[&e.event_id];
                if !hard_preds[i].iter().any(|&(p, _)| p == s) {
                    hard_preds[i].push((s, Constraint::SendRecv { predecessor: s }));
                    hard_succs[s].push(i);
                }
            }
        }
        Ok(Structure { trace, by_mx, mx_sorted, tie_rank, by_rank, hard_preds, hard_succs })
    }

    fn mx(&self, i: usize) -> u64 {
        self.trace.events[i].ts.mx()
    }

    fn eps(&self) -> u64 {
        self.trace.config.epsilon as u64
    }

    /// Events (in `by_mx` order) with `mx` in `lo..=hi`.
    fn in_mx_range(&self, lo: u64, hi: u64) -> &[usize] {
        let a = self.mx_sorted.partition_point(|&x| x < lo);
        let b = self.mx_sorted.partition_point(|&x| x <= hi);
        &self.by_mx[a..b]
    }

    fn before(&self, a: usize, b: usize) -> bool {
        let ev = &self.trace.events;
        compare_trusted(&ev[a].ts, &ev[b].ts, &self.trace.config) == CompareResult::Before
    }
}

/// Mutable replay state over one trace.
#[derive(Debug, Clone)]
pub struct ReplaySession {
    s: Arc<Structure>,
    remaining: Vec<bool>,
    remaining_count: usize,
    replayed: Vec<usize>,
    /// Position in `by_mx` of the first remaining event.
    first_remaining: usize,
    /// Number of `by_mx` entries whose window counts are initialised.
    zone_end: usize,
    before_count: Vec<u32>,
    hard_pending: Vec<u32>,
    /// Frontier as tie-break ranks.
    frontier: BTreeSet<usize>,
    sorted: Arc<Vec<usize>>,
}

/// Outcome of checking a full sequence. A rejection names an event that was
/// placed while one of its predecessors had not been replayed yet.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    Rejected { position: usize, event: usize, constraint: Constraint },
}

impl Verdict {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Verdict::Accepted)
    }
}

impl ReplaySession {
    /// Builds a session, checking the trace and that its ordering constraints
    /// are acyclic. The deterministic sorted order is computed once and kept.
    pub fn new(trace: impl Into<Arc<TraceLog>>) -> Result<Self, ReplayError> {
        let s = Arc::new(Structure::build(trace.into())?);
        let mut probe = Self::fresh(s, Arc::new(Vec::new()));
        let sorted = probe.drain_sorted()?;
        Ok(Self::fresh(probe.s, Arc::new(sorted)))
    }

    fn fresh(s: Arc<Structure>, sorted: Arc<Vec<usize>>) -> Self {
        let m = s.trace.events.len();
        let hard_pending = s.hard_preds.iter().map(|p| p.len() as u32).collect();
        let mut session = ReplaySession {
            s,
            remaining: vec![true; m],
            remaining_count: m,
            replayed: Vec::with_capacity(m),
            first_remaining: 0,
            zone_end: 0,
            before_count: vec![0; m],
            hard_pending,
            frontier: BTreeSet::new(),
            sorted,
        };
        session.extend_zone();
        session
    }

    pub fn trace(&self) -> &TraceLog {
        &self.s.trace
    }

    pub fn trace_arc(&self) -> Arc<TraceLog> {
        self.s.trace.clone()
    }

    pub fn total(&self) -> usize {
        self.remaining.len()
    }

    pub fn replayed(&self) -> &[usize] {
        &self.replayed
    }

    pub fn remaining_count(&self) -> usize {
        self.remaining_count
    }

    pub fn is_done(&self) -> bool {
        self.remaining_count == 0
    }

    pub fn is_remaining(&self, key: usize) -> bool {
        self.remaining.get(key).copied().unwrap_or(false)
    }

    /// The deterministic full order: at every step the frontier event with the
    /// smallest `(mx, node, event_id, index)`.
    pub fn sorted_order(&self) -> &[usize] {
        &self.sorted
    }

    /// Replayable events, ordered by `(mx, node, event_id, index)`.
    pub fn frontier(&self) -> Vec<usize> {
        self.frontier.iter().map(|&r| self.s.by_rank[r]).collect()
    }

    pub fn frontier_len(&self) -> usize {
        self.frontier.len()
    }

    pub fn in_frontier(&self, key: usize) -> bool {
        key < self.remaining.len() && self.frontier.contains(&self.s.tie_rank[key])
    }

    /// Returns the session to its initial state.
    pub fn reset(&mut self) {
        *self = Self::fresh(self.s.clone(), self.sorted.clone());
    }

    /// Why `key` cannot be replayed now, or `None` if it can.
    pub fn blocking_constraint(&self, key: usize) -> Result<Option<Constraint>, ReplayError> {
        if key >= self.remaining.len() {
            return Err(ReplayError::UnknownEvent(key));
        }
        if !self.remaining[key] {
            return Ok(Some(Constraint::AlreadyReplayed));
        }
        for (p, c) in &self.s.hard_preds[key] {
            if self.remaining[*p] {
                return Ok(Some(c.clone()));
            }
        }
        let first = self.s.by_mx[self.first_remaining];
        let eps = self.s.eps();
        let mx = self.s.mx(key);
        if mx > self.s.mx(first) + eps {
            return Ok(Some(Constraint::Before { predecessor: first }));
        }
        let lo = mx.saturating_sub(eps);
        for &e in self.s.in_mx_range(lo, mx + eps) {
            if self.remaining[e] && self.s.before(e, key) {
                return Ok(Some(Constraint::Before { predecessor: e }));
            }
        }
        Ok(None)
    }

    /// Replays `key`, which must be in the frontier.
    pub fn choose(&mut self, key: usize) -> Result<(), ReplayError> {
        if key >= self.remaining.len() {
            return Err(ReplayError::UnknownEvent(key));
        }
        if !self.in_frontier(key) {
            let constraint = self
                .blocking_constraint(key)?
                .expect("an event outside the frontier has a blocking constraint");
            return Err(ReplayError::NotInFrontier { key, constraint });
        }
        self.remove(key);
        Ok(())
    }

    fn remove(&mut self, e: usize) {
        let s = self.s.clone();
        self.frontier.remove(&s.tie_rank[e]);
        self.remaining[e] = false;
        self.remaining_count -= 1;
        self.replayed.push(e);

        let eps = s.eps();
        let mx = s.mx(e);
        let lo = mx.saturating_sub(eps);
        for &f in s.in_mx_range(lo, mx + eps) {
            if !self.remaining[f] || !self.in_zone(f) {
                continue;
            }
            if s.before(e, f) {
                self.before_count[f] -= 1;
                self.maybe_ready(f);
            }
        }
        for &f in &s.hard_succs[e] {
            self.hard_pending[f] -= 1;
            if self.in_zone(f) {
                self.maybe_ready(f);
            }
        }
        while self.first_remaining < s.by_mx.len() && !self.remaining[s.by_mx[self.first_remaining]]
        {
            self.first_remaining += 1;
        }
        self.extend_zone();
    }

    /// Whether `f` has its window count initialised.
    fn in_zone(&self, f: usize) -> bool {
        // Zone membership is a prefix of `by_mx`, so compare positions by key.
        let s = &self.s;
        if self.zone_end == 0 {
            return false;
        }
        let last = s.by_mx[self.zone_end - 1];
        (s.mx(f), f) <= (s.mx(last), last)
    }

    fn maybe_ready(&mut self, f: usize) {
        if self.remaining[f] && self.before_count[f] == 0 && self.hard_pending[f] == 0 {
            self.frontier.insert(self.s.tie_rank[f]);
        }
    }

    fn extend_zone(&mut self) {
        let s = self.s.clone();
        if self.first_remaining >= s.by_mx.len() {
            return;
        }
        let limit = s.mx(s.by_mx[self.first_remaining]) + s.eps();
        while self.zone_end < s.by_mx.len() && s.mx(s.by_mx[self.zone_end]) <= limit {
            let g = s.by_mx[self.zone_end];
            self.zone_end += 1;
            if !self.remaining[g] {
                continue;
            }
            let mx = s.mx(g);
            let count = s
                .in_mx_range(mx.saturating_sub(s.eps()), mx + s.eps())
                .iter()
                .filter(|&&e| self.remaining[e] && s.before(e, g))
                .count();
            self.before_count[g] = count as u32;
            self.maybe_ready(g);
        }
    }

    fn drain_sorted(&mut self) -> Result<Vec<usize>, ReplayError> {
        while !self.is_done() {
            let Some(&r) = self.frontier.first() else {
                return Err(self.cycle_error());
            };
            self.remove(self.s.by_rank[r]);
        }
        Ok(std::mem::take(&mut self.replayed))
    }

    /// Follows blocking constraints from a remaining event until one repeats.
    fn cycle_error(&self) -> ReplayError {
        let mut seen = HashSet::new();
        let mut cur = self.s.by_mx[self.first_remaining];
        let mut prev = cur;
        loop {
            if !seen.insert(cur) {
                return ReplayError::Cycle { a: prev, b: cur };
            }
            let next = match self.blocking_constraint(cur) {
                Ok(Some(
                    Constraint::Before { predecessor }
                    | Constraint::SameNode { predecessor }
                    | Constraint::SendRecv { predecessor },
                )) => predecessor,
                _ => return ReplayError::Cycle { a: prev, b: cur },
            };
            prev = cur;
            cur = next;
        }
    }

    /// Replays everything, picking uniformly among frontier events.
    pub fn auto_replay(&mut self, seed: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        while !self.is_done() {
            let &r = self.frontier.iter().choose(&mut rng).expect("acyclic trace has a frontier");
            self.remove(self.s.by_rank[r]);
        }
        self.replayed.clone()
    }
}

/// Deterministic topological order of the trace.
pub fn sort_events(trace: impl Into<Arc<TraceLog>>) -> Result<Vec<usize>, ReplayError> {
    Ok(ReplaySession::new(trace)?.sorted_order().to_vec())
}

/// Every valid replay order, by backtracking over frontiers. Without a limit,
/// traces above [`DEFAULT_ENUMERATION_BOUND`] events are refused; with one,
/// at most `limit` sequences are returned.
pub fn enumerate_replays(
    trace: impl Into<Arc<TraceLog>>,
    limit: Option<usize>,
) -> Result<Vec<Vec<usize>>, ReplayError> {
    let session = ReplaySession::new(trace)?;
    if limit.is_none() && session.total() > DEFAULT_ENUMERATION_BOUND {
        return Err(ReplayError::TooManyEvents {
            events: session.total(),
            bound: DEFAULT_ENUMERATION_BOUND,
        });
    }
    let mut out = Vec::new();
    let cap = limit.unwrap_or(usize::MAX);
    enumerate_from(&session, cap, &mut out);
    Ok(out)
}

fn enumerate_from(session: &ReplaySession, cap: usize, out: &mut Vec<Vec<usize>>) {
    if out.len() >= cap {
        return;
    }
    if session.is_done() {
        out.push(session.replayed.clone());
        return;
    }
    for key in session.frontier() {
        let mut next = session.clone();
        next.remove(key);
        enumerate_from(&next, cap, out);
        if out.len() >= cap {
            return;
        }
    }
}

/// Checks a full sequence pairwise: no event may follow one whose timestamp it
/// is Before, and no hard edge may be reversed. Reports the earliest position
/// at which a violation shows up.
pub fn validate_sequence(trace: &TraceLog, sequence: &[usize]) -> Result<Verdict, ReplayError> {
    let m = trace.events.len();
    if sequence.len() != m {
        return Err(ReplayError::NotPermutation(format!(
            "{} entries for {m} events",
            sequence.len()
        )));
    }
    let mut pos = vec![usize::MAX; m];
    for (p, &k) in sequence.iter().enumerate() {
        if k >= m {
            return Err(ReplayError::NotPermutation(format!("event {k} out of range")));
        }
        if pos[k] != usize::MAX {
            return Err(ReplayError::NotPermutation(format!("event {k} repeated")));
        }
        pos[k] = p;
    }
    let s = Structure::build(Arc::new(trace.clone()))?;
    let eps = s.eps();
    // Largest mx seen so far, and where.
    let mut prefix_max: Option<usize> = None;
    for (p, &f) in sequence.iter().enumerate() {
        for (q, c) in &s.hard_preds[f] {
            if pos[*q] > p {
                return Ok(Verdict::Rejected { position: p, event: f, constraint: c.clone() });
            }
        }
        let mx = s.mx(f);
        if let Some(h) = prefix_max {
            if s.mx(h) > mx + eps {
                // `f` is far below an earlier event, so it is Before it.
                return Ok(Verdict::Rejected {
                    position: pos[h],
                    event: h,
                    constraint: Constraint::Before { predecessor: f },
                });
            }
        }
        for &e in s.in_mx_range(mx.saturating_sub(eps), mx + eps) {
            if pos[e] < p && s.before(f, e) {
                return Ok(Verdict::Rejected {
                    position: pos[e],
                    event: e,
                    constraint: Constraint::Before { predecessor: f },
                });
            }
        }
        if prefix_max.is_none_or(|h| s.mx(h) < mx) {
            prefix_max = Some(f);
        }
    }
    Ok(Verdict::Accepted)
}

#[cfg(test)]
mod tests;
