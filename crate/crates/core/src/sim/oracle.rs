//! Checks a simulated trace against its vector-clock ground truth.
//!
//! Pairs whose `mx` values differ by more than `epsilon` are ordered by the
//! clock on `mx` alone, so only pairs inside that window are compared one by
//! one. The remaining pairs are covered by checking that `mx` never decreases
//! along a direct causal edge and that `mx` equals the epoch of the largest
//! known physical time.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::SimOutput;
use crate::clock::{compare_trusted, CompareResult};
use crate::trace::EventType;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderingReport {
    pub events: u64,
    /// Unordered pairs compared explicitly (inside the `mx` window).
    pub pairs_in_window: u64,
    /// Happened-before pairs compared.
    pub hb_pairs: u64,
    pub hb_violations: u64,
    /// Direct causal edges (same process, send to receive) where `mx` decreases.
    pub edge_mx_decreases: u64,
    /// Events whose `mx` is not the epoch of the largest known physical time.
    pub mx_mismatches: u64,
    /// Causally concurrent pairs with `|mx.e - mx.f| <= epsilon`.
    pub close_concurrent_pairs: u64,
    pub close_violations: u64,
    /// Causally concurrent pairs whose physical knowledge differs by at most
    /// `clockskew - interval`.
    pub tight_concurrent_pairs: u64,
    pub tight_violations: u64,
    /// Pairs whose physical knowledge differs by more than `clockskew + interval`,
    /// over the whole trace. Only those inside the `mx` window can be misordered
    /// while `mx_mismatches` is zero, so only those are compared.
    pub far_pairs: u64,
    pub far_violations: u64,
    /// A few violating pairs, as trace indices with a short reason.
    pub samples: Vec<String>,
}

impl OrderingReport {
    fn merge(mut self, o: OrderingReport) -> OrderingReport {
        self.pairs_in_window += o.pairs_in_window;
        self.hb_pairs += o.hb_pairs;
        self.hb_violations += o.hb_violations;
        self.close_concurrent_pairs += o.close_concurrent_pairs;
        self.close_violations += o.close_violations;
        self.tight_concurrent_pairs += o.tight_concurrent_pairs;
        self.tight_violations += o.tight_violations;
        self.far_violations += o.far_violations;
        for s in o.samples {
            if self.samples.len() < MAX_SAMPLES {
                self.samples.push(s);
            }
        }
        self
    }

    fn sample(&mut self, s: impl FnOnce() -> String) {
        if self.samples.len() < MAX_SAMPLES {
            self.samples.push(s());
        }
    }
}

const MAX_SAMPLES: usize = 8;

/// Runs every pairwise check. Needs a run made with `record_oracle`.
pub fn check_ordering(out: &SimOutput) -> Option<OrderingReport> {
    let oracle = out.oracle.as_ref()?;
    let cfg = out.trace.config;
    let events = &out.trace.events;
    let eps = cfg.epsilon as u64;
    let skew = cfg.clockskew_us();
    let interval = cfg.interval_us;
    let far = skew + interval;
    let tight = skew.saturating_sub(interval);

    let mut report = OrderingReport { events: events.len() as u64, ..Default::default() };
    report.mx_mismatches = events
        .iter()
        .zip(&oracle.mxph)
        .filter(|(e, &ph)| e.ts.mx() != ph / interval)
        .count() as u64;
    report.edge_mx_decreases = edge_mx_decreases(out);
    let mut known = oracle.mxph.clone();
    known.sort_unstable();
    report.far_pairs = known
        .iter()
        .map(|&k| (known.len() - known.partition_point(|&x| x <= k + far)) as u64)
        .sum();

    let mut order: Vec<usize> = (0..events.len()).collect();
    order.sort_by_key(|&i| (events[i].ts.mx(), i));

    let pairs = order
        .par_iter()
        .enumerate()
        .fold(OrderingReport::default, |mut r, (pos, &a)| {
            let ea = &events[a];
            for &b in &order[pos + 1..] {
                let eb = &events[b];
                if eb.ts.mx() > ea.ts.mx() + eps {
                    break;
                }
                r.pairs_in_window += 1;
                // Orient by trace order so `e` is the earlier event.
                let (e, f) = if a < b { (a, b) } else { (b, a) };
                let (te, tf) = (&events[e].ts, &events[f].ts);
                let got = compare_trusted(te, tf, &cfg);
                let e_hb_f = oracle.happened_before(e, f, te.owner());
                let f_hb_e = oracle.happened_before(f, e, tf.owner());
                if e_hb_f || f_hb_e {
                    r.hb_pairs += 1;
                    let want = if e_hb_f { CompareResult::Before } else { CompareResult::After };
                    if got != want {
                        r.hb_violations += 1;
                        r.sample(|| format!("hb {e}->{f}: got {got:?}"));
                    }
                } else {
                    r.close_concurrent_pairs += 1;
                    if got != CompareResult::Concurrent {
                        r.close_violations += 1;
                        r.sample(|| format!("concurrent {e},{f}: got {got:?}"));
                    }
                    if oracle.mxph[e].abs_diff(oracle.mxph[f]) <= tight {
                        r.tight_concurrent_pairs += 1;
                        if got != CompareResult::Concurrent {
                            r.tight_violations += 1;
                        }
                    }
                }
                let (pe, pf) = (oracle.mxph[e], oracle.mxph[f]);
                let far_want = if pf > pe + far {
                    Some(CompareResult::Before)
                } else if pe > pf + far {
                    Some(CompareResult::After)
                } else {
                    None
                };
                if let Some(want) = far_want {
                    if got != want {
                        r.far_violations += 1;
                        r.sample(|| format!("far {e},{f}: got {got:?}"));
                    }
                }
            }
            r
        })
        .reduce(OrderingReport::default, OrderingReport::merge);
    Some(report.merge(pairs))
}

fn edge_mx_decreases(out: &SimOutput) -> u64 {
    let events = &out.trace.events;
    let mut last: HashMap<&str, usize> = HashMap::new();
    let mut send_of: HashMap<u64, usize> = HashMap::new();
    let mut bad = 0;
    for (i, e) in events.iter().enumerate() {
        if let Some(&p) = last.get(e.node.as_str()) {
            bad += u64::from(events[p].ts.mx() > e.ts.mx());
        }
        last.insert(&e.node, i);
        match e.event_type {
            EventType::Send => {
                send_of.insert(e.event_id, i);
            }
            EventType::Recv => {
                if let Some(&s) = send_of.get(&e.event_id) {
                    bad += u64::from(events[s].ts.mx() > e.ts.mx());
                }
            }
            EventType::Local => {}
        }
    }
    bad
}
