//! Overhead statistics, trend helpers and feasibility sweeps.
//!
//! `offsetsize` here counts the offsets a timestamp stores for processes
//! other than its owner. The owner's own entry is present on almost every
//! event and carries no information about communication.

use std::collections::BTreeMap;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::clock::{compare_trusted, CompareResult};
use crate::config::{ClockConfig, CounterMode};
use crate::error::SimError;
use crate::packed::encode_timestamp;
use crate::sim::{self, SimOutput, SimParams};
use crate::trace::TraceLog;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OverheadStats {
    pub events: usize,
    /// Mean non-owner offsets stored per event.
    pub avg_offsets_stored: f64,
    /// Mean offsets stored per event, owner included.
    pub avg_entries_stored: f64,
    /// Mean bits spent on stored offsets per event.
    pub avg_offset_bits: f64,
    pub pct_events_with_counters: f64,
    /// Mean bits spent on non-zero counters per event.
    pub avg_counter_bits: f64,
    pub max_counter: u32,
    /// Encoded size in words -> number of events.
    pub words_per_timestamp: BTreeMap<usize, usize>,
}

/// Per-event overhead averages over a trace.
pub fn offset_stats(trace: &TraceLog) -> OverheadStats {
    let cfg = &trace.config;
    let m = trace.events.len();
    if m == 0 {
        log::warn!("overhead statistics requested for an empty trace");
        return OverheadStats::default();
    }
    let mut remote = 0usize;
    let mut entries = 0usize;
    let mut counter_lanes = 0usize;
    let mut with_counters = 0usize;
    let mut max_counter = 0;
    let mut words = BTreeMap::new();
    for e in &trace.events {
        remote += e.ts.remote_offsets_stored();
        entries += e.ts.offsets_stored();
        if e.ts.has_counters() {
            with_counters += 1;
        }
        counter_lanes += match cfg.counter_mode {
            CounterMode::Full => e.ts.counters().len(),
            CounterMode::Sum => usize::from(e.ts.has_counters()),
        };
        max_counter = max_counter.max(e.ts.max_counter());
        let w = encode_timestamp(&e.ts, cfg).map(|p| p.len()).unwrap_or(0);
        *words.entry(w).or_insert(0) += 1;
    }
    let mf = m as f64;
    OverheadStats {
        events: m,
        avg_offsets_stored: remote as f64 / mf,
        avg_entries_stored: entries as f64 / mf,
        avg_offset_bits: entries as f64 * cfg.offset_bits as f64 / mf,
        pct_events_with_counters: 100.0 * with_counters as f64 / mf,
        avg_counter_bits: counter_lanes as f64 * cfg.counter_bits as f64 / mf,
        max_counter,
        words_per_timestamp: words,
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CounterStats {
    /// Fraction (0..=1) of events with any non-zero counter.
    pub fraction_with_counters: f64,
    pub max_counter: u32,
}

pub fn counter_stats(trace: &TraceLog) -> CounterStats {
    let m = trace.events.len();
    if m == 0 {
        return CounterStats::default();
    }
    let with = trace.events.iter().filter(|e| e.ts.has_counters()).count();
    CounterStats {
        fraction_with_counters: with as f64 / m as f64,
        max_counter: trace.events.iter().map(|e| e.ts.max_counter()).max().unwrap_or(0),
    }
}

/// One line of the metrics CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run_id: String,
    pub n: usize,
    pub epsilon: u32,
    pub interval_us: u64,
    pub delta_us: u64,
    pub alpha: f64,
    pub events: u64,
    pub sends: u64,
    pub recvs: u64,
    pub locals: u64,
    pub avg_offsets_stored: f64,
    pub p99_offsets_stored: f64,
    pub pct_events_with_counters: f64,
    pub max_counter: u32,
    pub max_observed_skew_us: u64,
}

pub fn run_id(p: &SimParams) -> String {
    let c = &p.config;
    format!(
        "n{}-eps{}-i{}-d{}-a{}-s{}",
        c.n, c.epsilon, c.interval_us, p.delta_us, p.alpha_pct, p.seed
    )
}

impl MetricsRow {
    pub fn from_run(out: &SimOutput) -> Self {
        let p = &out.params;
        let m = &out.metrics;
        MetricsRow {
            run_id: run_id(p),
            n: p.config.n,
            epsilon: p.config.epsilon,
            interval_us: p.config.interval_us,
            delta_us: p.delta_us,
            alpha: p.alpha_pct,
            events: m.events,
            sends: m.sends,
            recvs: m.recvs,
            locals: m.locals,
            avg_offsets_stored: m.avg_offsets_stored(),
            p99_offsets_stored: m.p99_offsets_stored(),
            pct_events_with_counters: m.pct_events_with_counters(),
            max_counter: m.max_counter,
            max_observed_skew_us: m.max_observed_skew_us,
        }
    }
}

pub fn write_metrics_csv<'a>(
    rows: impl IntoIterator<Item = &'a MetricsRow>,
    out: impl Write,
) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Relative spread `(max - min) / mean`; zero for an all-zero series.
pub fn spread(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let max = values.iter().cloned().fold(f64::MIN, f64::max);
    let min = values.iter().cloned().fold(f64::MAX, f64::min);
    let mean = mean(values);
    if mean == 0.0 {
        0.0
    } else {
        (max - min) / mean
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// `series[seed][point]`. True when, for every pair of adjacent points, a
/// strict majority of seeds does not decrease, and the mean over seeds rises
/// from the first point to the last.
pub fn increasing_by_majority(series: &[Vec<f64>]) -> bool {
    let Some(first) = series.first() else {
        return false;
    };
    let points = first.len();
    let seeds = series.len();
    let steps_ok = (1..points).all(|k| {
        let up = series.iter().filter(|s| s[k] >= s[k - 1]).count();
        2 * up > seeds
    });
    let col_mean = |k: usize| series.iter().map(|s| s[k]).sum::<f64>() / seeds as f64;
    steps_ok && points >= 2 && col_mean(points - 1) > col_mean(0)
}

/// Mean offsetsize for `base` under each seed in `seeds`, in parallel.
pub fn offsets_by_seed(base: &SimParams, seeds: &[u64]) -> Result<Vec<f64>, SimError> {
    seeds
        .par_iter()
        .map(|&seed| {
            let mut p = *base;
            p.seed = seed;
            p.record_oracle = false;
            Ok(sim::run(&p)?.metrics.avg_offsets_stored())
        })
        .collect()
}

/// Grid description for a feasibility sweep, read from TOML or JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub n: usize,
    pub epsilon: u32,
    pub interval_us: u64,
    pub alpha: Vec<f64>,
    pub delta_us: Vec<u64>,
    #[serde(default = "default_ticks")]
    pub ticks: u64,
    #[serde(default = "default_tick_us")]
    pub tick_us: u64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub counter_mode: CounterMode,
    #[serde(default = "default_local_ratio")]
    pub local_ratio: f64,
}

fn default_ticks() -> u64 {
    10_000
}
fn default_tick_us() -> u64 {
    1
}
fn default_seeds() -> Vec<u64> {
    (1..=5).collect()
}
fn default_local_ratio() -> f64 {
    0.5
}

impl SweepGrid {
    pub fn params(&self, alpha: f64, delta_us: u64, seed: u64) -> Result<SimParams, SimError> {
        let cfg = ClockConfig::new(self.n, self.epsilon, self.interval_us)?
            .with_counter_mode(self.counter_mode);
        let mut p = SimParams::new(cfg);
        p.alpha_pct = alpha;
        p.delta_us = delta_us;
        p.ticks = self.ticks;
        p.tick_us = self.tick_us;
        p.seed = seed;
        p.local_ratio = self.local_ratio;
        p.allow_long_delay = true;
        Ok(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityPoint {
    pub alpha: f64,
    pub delta_us: u64,
    pub epsilon: u32,
    pub interval_us: u64,
    pub n: usize,
    /// Mean offsetsize over seeds.
    pub offsetsize: f64,
    /// Mean over seeds of the per-run 99th percentile.
    pub p99_offsetsize: f64,
    pub feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityReport {
    pub budget: f64,
    pub points: Vec<FeasibilityPoint>,
    /// Per-run rows, in grid order, for the CSV.
    pub runs: Vec<(MetricsRow, bool)>,
    /// For each delta, the largest alpha whose point is feasible.
    pub boundary: Vec<(u64, Option<f64>)>,
}

impl FeasibilityReport {
    /// Feasible points of every delta column form a prefix of increasing alpha.
    pub fn downward_closed_in_alpha(&self) -> bool {
        let mut cols: BTreeMap<u64, Vec<&FeasibilityPoint>> = BTreeMap::new();
        for p in &self.points {
            cols.entry(p.delta_us).or_default().push(p);
        }
        cols.values_mut().all(|col| {
            col.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
            col.windows(2).all(|w| w[0].feasible || !w[1].feasible)
        })
    }

    pub fn all_feasible(&self) -> bool {
        self.points.iter().all(|p| p.feasible)
    }

    pub fn none_feasible(&self) -> bool {
        self.points.iter().all(|p| !p.feasible)
    }

    pub fn write_csv(&self, out: impl Write) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "run_id",
            "n",
            "epsilon",
            "interval_us",
            "delta_us",
            "alpha",
            "events",
            "sends",
            "recvs",
            "locals",
            "avg_offsets_stored",
            "p99_offsets_stored",
            "pct_events_with_counters",
            "max_counter",
            "max_observed_skew_us",
            "feasible",
        ])?;
        for (row, feasible) in &self.runs {
            let r = row;
            w.write_record(&[
                r.run_id.clone(),
                r.n.to_string(),
                r.epsilon.to_string(),
                r.interval_us.to_string(),
                r.delta_us.to_string(),
                r.alpha.to_string(),
                r.events.to_string(),
                r.sends.to_string(),
                r.recvs.to_string(),
                r.locals.to_string(),
                r.avg_offsets_stored.to_string(),
                r.p99_offsets_stored.to_string(),
                r.pct_events_with_counters.to_string(),
                r.max_counter.to_string(),
                r.max_observed_skew_us.to_string(),
                feasible.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Scatter of the grid (alpha across, delta up), feasible points filled,
    /// with the boundary drawn through the largest feasible alpha per delta.
    pub fn svg(&self) -> String {
        let mut alphas: Vec<f64> = self.points.iter().map(|p| p.alpha).collect();
        alphas.sort_by(f64::total_cmp);
        alphas.dedup();
        let mut deltas: Vec<u64> = self.points.iter().map(|p| p.delta_us).collect();
        deltas.sort_unstable();
        deltas.dedup();
        let (w, h, pad, step) = (
            120.0 + 60.0 * alphas.len() as f64,
            120.0 + 60.0 * deltas.len() as f64,
            80.0,
            60.0,
        );
        let x = |a: f64| pad + step * alphas.iter().position(|&v| v == a).unwrap_or(0) as f64;
        let y = |d: u64| h - pad - step * deltas.iter().position(|&v| v == d).unwrap_or(0) as f64;
        let mut s = format!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n"
        );
        s += &format!(
            "<text x=\"{}\" y=\"20\">offsetsize &lt;= {} (filled = feasible)</text>\n",
            pad, self.budget
        );
        for &a in &alphas {
            s += &format!("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{a}</text>\n", x(a), h - pad + 30.0);
        }
        s += &format!("<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">alpha (%)</text>\n", w / 2.0, h - 15.0);
        for &d in &deltas {
            s += &format!("<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{d}</text>\n", pad - 20.0, y(d) + 4.0);
        }
        s += &format!("<text x=\"15\" y=\"{}\" transform=\"rotate(-90 15 {})\">delta (us)</text>\n", h / 2.0, h / 2.0);
        for p in &self.points {
            let fill = if p.feasible { "#1f5fbf" } else { "none" };
            s += &format!(
                "<circle cx=\"{}\" cy=\"{}\" r=\"8\" fill=\"{fill}\" stroke=\"#1f5fbf\"><title>{:.3}</title></circle>\n",
                x(p.alpha),
                y(p.delta_us),
                p.offsetsize
            );
        }
        let line: Vec<String> = self
            .boundary
            .iter()
            .filter_map(|&(d, a)| a.map(|a| format!("{},{}", x(a) + step / 2.0, y(d))))
            .collect();
        if !line.is_empty() {
            s += &format!(
                "<polyline points=\"{}\" fill=\"none\" stroke=\"#c0392b\" stroke-width=\"2\"/>\n",
                line.join(" ")
            );
        }
        s += "</svg>\n";
        s
    }
}

/// Runs every (alpha, delta, seed) combination in parallel and classifies each
/// (alpha, delta) point by its seed-averaged offsetsize.
pub fn feasibility_sweep(grid: &SweepGrid, budget: f64) -> Result<FeasibilityReport, SimError> {
    let mut jobs = Vec::new();
    for &delta in &grid.delta_us {
        for &alpha in &grid.alpha {
            for &seed in &grid.seeds {
                jobs.push(grid.params(alpha, delta, seed)?);
            }
        }
    }
    let rows: Vec<MetricsRow> = jobs
        .par_iter()
        .map(|p| sim::run(p).map(|o| MetricsRow::from_run(&o)))
        .collect::<Result<_, _>>()?;
    Ok(classify(grid, budget, rows))
}

/// Builds a report from precomputed per-run rows (grid order: delta, alpha, seed).
pub fn classify(grid: &SweepGrid, budget: f64, rows: Vec<MetricsRow>) -> FeasibilityReport {
    let per_point = grid.seeds.len().max(1);
    let mut points = Vec::new();
    let mut runs = Vec::new();
    for chunk in rows.chunks(per_point) {
        let offs: Vec<f64> = chunk.iter().map(|r| r.avg_offsets_stored).collect();
        let p99: Vec<f64> = chunk.iter().map(|r| r.p99_offsets_stored).collect();
        let first = &chunk[0];
        let offsetsize = mean(&offs);
        let feasible = offsetsize <= budget;
        points.push(FeasibilityPoint {
            alpha: first.alpha,
            delta_us: first.delta_us,
            epsilon: first.epsilon,
            interval_us: first.interval_us,
            n: first.n,
            offsetsize,
            p99_offsetsize: mean(&p99),
            feasible,
        });
        runs.extend(chunk.iter().map(|r| (r.clone(), feasible)));
    }
    let boundary = grid
        .delta_us
        .iter()
        .map(|&d| {
            let best = points
                .iter()
                .filter(|p| p.delta_us == d && p.feasible)
                .map(|p| p.alpha)
                .fold(None, |acc: Option<f64>, a| Some(acc.map_or(a, |b| b.max(a))));
            (d, best)
        })
        .collect();
    FeasibilityReport { budget, points, runs, boundary }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PartialReplayStats {
    /// Causally unordered pairs that the full-skew clock leaves concurrent.
    pub concurrent_pairs: u64,
    /// Of those, pairs the smaller configured skew orders.
    pub forced_pairs: u64,
}

impl PartialReplayStats {
    pub fn forced_rate(&self) -> f64 {
        if self.concurrent_pairs == 0 {
            0.0
        } else {
            self.forced_pairs as f64 / self.concurrent_pairs as f64
        }
    }
}

/// Runs the same computation twice, once with the clock configured for the
/// actual skew and once for a smaller one, and counts the pairs the smaller
/// setting orders although the full one left them concurrent.
pub fn partial_replay(
    base: &SimParams,
    epsilon_configured: u32,
    epsilon_actual: u32,
) -> Result<PartialReplayStats, SimError> {
    if epsilon_configured > epsilon_actual {
        return Err(SimError::InvalidParams(format!(
            "configured epsilon {epsilon_configured} exceeds actual {epsilon_actual}"
        )));
    }
    let interval = base.config.interval_us;
    let mut full = *base;
    full.config = ClockConfig { epsilon: epsilon_actual, ..base.config }
        .with_offset_bits(crate::config::min_offset_bits(epsilon_actual))?;
    full.physical_skew_us = Some(epsilon_actual as u64 * interval);
    full.record_oracle = false;
    let mut part = full;
    part.config = ClockConfig { epsilon: epsilon_configured, ..base.config }
        .with_offset_bits(crate::config::min_offset_bits(epsilon_configured))?;
    part.allow_long_delay = true;
    full.allow_long_delay = true;
    let (a, b) = rayon::join(|| sim::run(&full), || sim::run(&part));
    let (a, b) = (a?, b?);
    let same = a.trace.events.len() == b.trace.events.len()
        && a.trace.events.iter().zip(&b.trace.events).all(|(x, y)| {
            x.event_id == y.event_id && x.event_type == y.event_type && x.node == y.node
        });
    if !same {
        return Err(SimError::InvalidParams("runs diverged; event sequence differs".into()));
    }
    let ev_a = &a.trace.events;
    let ev_b = &b.trace.events;
    let eps = epsilon_actual as u64;
    let mut order: Vec<usize> = (0..ev_a.len()).collect();
    order.sort_by_key(|&i| (ev_a[i].ts.mx(), i));
    let (concurrent_pairs, forced_pairs) = order
        .par_iter()
        .enumerate()
        .map(|(pos, &i)| {
            let mut c = 0u64;
            let mut f = 0u64;
            for &j in &order[pos + 1..] {
                if ev_a[j].ts.mx() > ev_a[i].ts.mx() + eps {
                    break;
                }
                if compare_trusted(&ev_a[i].ts, &ev_a[j].ts, &a.trace.config) == CompareResult::Concurrent {
                    c += 1;
                    if compare_trusted(&ev_b[i].ts, &ev_b[j].ts, &b.trace.config).is_ordered() {
                        f += 1;
                    }
                }
            }
            (c, f)
        })
        .reduce(|| (0, 0), |x, y| (x.0 + y.0, x.1 + y.1));
    Ok(PartialReplayStats { concurrent_pairs, forced_pairs })
}
