//! Deterministic discrete-event simulator.
//!
//! Every tick each process, in pid order, reads its noisy clock, delivers the
//! messages due by now, and then with probability `alpha_pct / 100` either
//! sends a message to a uniformly chosen peer or performs a local event.
//! Messages arrive exactly `delta_us` after they are sent. Alongside the RepCl
//! timestamps the simulator keeps dense vector clocks and the largest
//! physical time each event knows of, which tests use as ground truth.

mod clock;
pub mod oracle;

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use clock::NoisyClock;

use crate::clock::{
    advance_receive, advance_send_local, compare_trusted, epoch_of, CompareResult, RepClTimestamp,
};
use crate::config::{ClockConfig, ProcessId};
use crate::error::SimError;
use crate::trace::{EventRecord, EventType, TraceLog};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub config: ClockConfig,
    pub delta_us: u64,
    /// Per-tick probability, in percent, that a process fires an event.
    pub alpha_pct: f64,
    pub ticks: u64,
    pub tick_us: u64,
    pub seed: u64,
    /// Fraction of fired events that are local rather than sends.
    pub local_ratio: f64,
    /// Physical clock skew in microseconds. Defaults to `epsilon * interval_us`;
    /// set it larger than that to run the clock with a smaller configured skew.
    pub physical_skew_us: Option<u64>,
    /// Permit `delta_us` above the clock skew.
    pub allow_long_delay: bool,
    /// Keep per-event vector clocks and physical knowledge.
    pub record_oracle: bool,
}

impl SimParams {
    pub fn new(config: ClockConfig) -> Self {
        SimParams {
            config,
            delta_us: 1,
            alpha_pct: 10.0,
            ticks: 10_000,
            tick_us: 1,
            seed: 0,
            local_ratio: 0.5,
            physical_skew_us: None,
            allow_long_delay: false,
            record_oracle: false,
        }
    }

    pub fn skew_us(&self) -> u64 {
        self.physical_skew_us.unwrap_or_else(|| self.config.clockskew_us())
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidParams(m));
        self.config.validate()?;
        if !(0.0..=100.0).contains(&self.alpha_pct) {
            return bad(format!("alpha {} outside 0..=100", self.alpha_pct));
        }
        if !(0.0..=1.0).contains(&self.local_ratio) {
            return bad(format!("local ratio {} outside 0..=1", self.local_ratio));
        }
        if self.tick_us == 0 {
            return bad("tick_us must be positive".into());
        }
        if self.delta_us > self.skew_us() && !self.allow_long_delay {
            return bad(format!(
                "delta {} us exceeds the clock skew {} us (pass the long-delay override to allow it)",
                self.delta_us,
                self.skew_us()
            ));
        }
        Ok(())
    }
}

/// Returns true with probability `alpha_pct / 100`.
pub fn decide_send(rng: &mut impl Rng, alpha_pct: f64) -> bool {
    rng.gen::<f64>() * 100.0 < alpha_pct
}

/// Per-run counters and per-event overhead samples.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimMetrics {
    pub events: u64,
    pub sends: u64,
    pub recvs: u64,
    pub locals: u64,
    /// Non-owner offsets stored, one sample per event.
    pub remote_offsets: Vec<u8>,
    pub events_with_counters: u64,
    pub max_counter: u32,
    /// Events whose counter hit the lane maximum.
    pub saturated_counters: u64,
    pub max_observed_skew_us: u64,
    /// RECV events not ordered after their SEND by the clock.
    pub send_recv_violations: u64,
    /// Events where `mx` differs from the epoch of the largest known physical time.
    pub mx_mismatches: u64,
}

impl SimMetrics {
    pub fn avg_offsets_stored(&self) -> f64 {
        if self.remote_offsets.is_empty() {
            return 0.0;
        }
        self.remote_offsets.iter().map(|&v| v as f64).sum::<f64>() / self.remote_offsets.len() as f64
    }

    /// Nearest-rank 99th percentile.
    pub fn p99_offsets_stored(&self) -> f64 {
        if self.remote_offsets.is_empty() {
            return 0.0;
        }
        let mut v = self.remote_offsets.clone();
        v.sort_unstable();
        let rank = ((0.99 * v.len() as f64).ceil() as usize).clamp(1, v.len());
        v[rank - 1] as f64
    }

    pub fn pct_events_with_counters(&self) -> f64 {
        if self.events == 0 {
            0.0
        } else {
            100.0 * self.events_with_counters as f64 / self.events as f64
        }
    }
}

/// Ground truth recorded per event, in trace order.
#[derive(Debug, Clone, Default)]
pub struct Oracle {
    pub n: usize,
    /// Flattened vector clocks, `n` entries per event.
    pub vc: Vec<u32>,
    /// Largest physical time (us) known to each event.
    pub mxph: Vec<u64>,
    /// Node-local clock reading at each event.
    pub pt: Vec<u64>,
    /// Simulator time of each event.
    pub sim_us: Vec<u64>,
}

impl Oracle {
    pub fn vc(&self, event: usize) -> &[u32] {
        &self.vc[event * self.n..(event + 1) * self.n]
    }

    /// Lamport happened-before between two events of the trace.
    pub fn happened_before(&self, e: usize, f: usize, owner_e: ProcessId) -> bool {
        e != f && self.vc(e)[owner_e] <= self.vc(f)[owner_e]
    }

    pub fn len(&self) -> usize {
        self.mxph.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mxph.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct SimOutput {
    pub params: SimParams,
    pub trace: TraceLog,
    pub oracle: Option<Oracle>,
    pub metrics: SimMetrics,
}

struct Message {
    deliver_at: u64,
    event_id: u64,
    from: ProcessId,
    send_index: usize,
    ts: RepClTimestamp,
    vc: Vec<u32>,
    mxph: u64,
}

struct ProcessState {
    pid: ProcessId,
    clock: NoisyClock,
    rng: ChaCha8Rng,
    ts: RepClTimestamp,
    vc: Vec<u32>,
    mxph: u64,
    inbox: VecDeque<Message>,
}

struct Sim<'a> {
    p: &'a SimParams,
    trace: TraceLog,
    oracle: Option<Oracle>,
    metrics: SimMetrics,
    next_id: u64,
}

impl Sim<'_> {
    fn record(&mut self, st: &ProcessState, now: u64, event: EventRecord) {
        let ts = &event.ts;
        let m = &mut self.metrics;
        m.events += 1;
        match event.event_type {
            EventType::Send => m.sends += 1,
            EventType::Recv => m.recvs += 1,
            EventType::Local => m.locals += 1,
        }
        m.remote_offsets.push(ts.remote_offsets_stored() as u8);
        if ts.has_counters() {
            m.events_with_counters += 1;
        }
        let mc = ts.max_counter();
        m.max_counter = m.max_counter.max(mc);
        if mc > 0 && mc == self.p.config.counter_max() {
            m.saturated_counters += 1;
        }
        if ts.mx() != epoch_of(st.mxph, &self.p.config) {
            m.mx_mismatches += 1;
        }
        if let Some(o) = self.oracle.as_mut() {
            o.vc.extend_from_slice(&st.vc);
            o.mxph.push(st.mxph);
            o.pt.push(st.clock.now());
            o.sim_us.push(now);
        }
        self.trace.events.push(event);
    }
}

impl Sim<'_> {
    fn deliver(&mut self, st: &mut ProcessState, msg: Message, now: u64) -> Result<(), SimError> {
        let cfg = self.p.config;
        let pid = st.pid;
        let nt = st.clock.read(now, &mut st.rng);
        st.ts = advance_receive(&st.ts, &msg.ts, epoch_of(nt, &cfg), &cfg)?;
        for (a, b) in st.vc.iter_mut().zip(&msg.vc) {
            *a = (*a).max(*b);
        }
        st.vc[pid] += 1;
        st.mxph = st.mxph.max(msg.mxph).max(nt);
        let send_ts = &self.trace.events[msg.send_index].ts;
        if compare_trusted(send_ts, &st.ts, &cfg) != CompareResult::Before {
            self.metrics.send_recv_violations += 1;
        }
        let event = EventRecord {
            event_id: msg.event_id,
            event_type: EventType::Recv,
            node: self.trace.nodes[pid].clone(),
            ts: st.ts.clone(),
            sender: self.trace.nodes[msg.from].clone(),
            receiver: self.trace.nodes[pid].clone(),
        };
        self.record(st, now, event);
        Ok(())
    }
}

/// Runs one simulation.
pub fn run(params: &SimParams) -> Result<SimOutput, SimError> {
    params.validate()?;
    let cfg = params.config;
    let n = cfg.n;
    let skew = params.skew_us();
    let mut procs: Vec<ProcessState> = (0..n)
        .map(|pid| {
            let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
            rng.set_stream(pid as u64);
            ProcessState {
                pid,
                clock: NoisyClock::new(skew),
                rng,
                ts: RepClTimestamp::initial(pid, &cfg),
                vc: vec![0; n],
                mxph: 0,
                inbox: VecDeque::new(),
            }
        })
        .collect();
    let nodes = TraceLog::default_nodes(n);
    let mut sim = Sim {
        p: params,
        trace: TraceLog::new(cfg, nodes.clone()),
        oracle: params.record_oracle.then(|| Oracle { n, ..Default::default() }),
        metrics: SimMetrics::default(),
        next_id: 1,
    };

    for tick in 0..params.ticks {
        let now = tick * params.tick_us;
        // Messages due strictly inside the previous tick arrive at their own
        // time, earliest first, ties by receiver.
        loop {
            let due = procs
                .iter()
                .filter_map(|st| st.inbox.front().map(|m| (m.deliver_at, st.pid)))
                .filter(|&(at, _)| at < now)
                .min();
            let Some((at, pid)) = due else { break };
            let msg = procs[pid].inbox.pop_front().expect("checked");
            sim.deliver(&mut procs[pid], msg, at)?;
        }

        let (mut lo, mut hi) = (u64::MAX, 0u64);
        for st in procs.iter_mut() {
            let nt = st.clock.read(now, &mut st.rng);
            lo = lo.min(nt);
            hi = hi.max(nt);
        }
        sim.metrics.max_observed_skew_us = sim.metrics.max_observed_skew_us.max(hi - lo);
        debug_assert!(hi - lo <= skew);

        for pid in 0..n {
            while procs[pid].inbox.front().is_some_and(|m| m.deliver_at <= now) {
                let msg = procs[pid].inbox.pop_front().expect("checked");
                sim.deliver(&mut procs[pid], msg, now)?;
            }

            let st = &mut procs[pid];
            if !decide_send(&mut st.rng, params.alpha_pct) {
                continue;
            }
            let local = n == 1 || st.rng.gen::<f64>() < params.local_ratio;
            let peer = if local {
                pid
            } else {
                let k = st.rng.gen_range(0..n - 1);
                if k >= pid {
                    k + 1
                } else {
                    k
                }
            };
            let nt = st.clock.read(now, &mut st.rng);
            st.ts = advance_send_local(&st.ts, epoch_of(nt, &cfg), &cfg);
            st.vc[pid] += 1;
            st.mxph = st.mxph.max(nt);
            let event_id = sim.next_id;
            sim.next_id += 1;
            let event = EventRecord {
                event_id,
                event_type: if local { EventType::Local } else { EventType::Send },
                node: nodes[pid].clone(),
                ts: st.ts.clone(),
                sender: nodes[pid].clone(),
                receiver: nodes[peer].clone(),
            };
            let msg = (!local).then(|| Message {
                deliver_at: now + params.delta_us,
                event_id,
                from: pid,
                send_index: sim.trace.events.len(),
                ts: st.ts.clone(),
                vc: st.vc.clone(),
                mxph: st.mxph,
            });
            sim.record(&procs[pid], now, event);
            if let Some(msg) = msg {
                procs[peer].inbox.push_back(msg);
            }
        }
    }
    debug_assert!(procs.iter().all(|p| p.pid < n));

    Ok(SimOutput {
        params: *params,
        trace: sim.trace,
        oracle: sim.oracle,
        metrics: sim.metrics,
    })
}
