//! Python bindings: timestamps, the simulator, and replay over trace text.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;

use repcl::clock::{self, CompareResult, RepClTimestamp};
use repcl::metrics::MetricsRow;
use repcl::packed::{decode_timestamp, encode_timestamp, PackedTimestamp};
use repcl::replay::{self, ReplaySession, Verdict};
use repcl::sim::{self, SimParams};
use repcl::trace::{parse_trace, TraceLog};
use repcl::{ClockConfig, CounterMode};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn mode(name: &str) -> PyResult<CounterMode> {
    name.parse().map_err(PyValueError::new_err)
}

#[pyclass(name = "Config", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyConfig {
    inner: ClockConfig,
}

#[pymethods]
impl PyConfig {
    #[new]
    #[pyo3(signature = (n, epsilon, interval_us = 1, counter_mode = "full", counter_bits = None))]
    fn new(n: usize, epsilon: u32, interval_us: u64, counter_mode: &str, counter_bits: Option<u32>) -> PyResult<Self> {
        let mut c = ClockConfig::new(n, epsilon, interval_us).map_err(err)?.with_counter_mode(mode(counter_mode)?);
        if let Some(b) = counter_bits {
            c = c.with_counter_bits(b).map_err(err)?;
        }
        Ok(PyConfig { inner: c })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn epsilon(&self) -> u32 {
        self.inner.epsilon
    }

    fn __repr__(&self) -> String {
        format!("Config(n={}, epsilon={}, interval_us={})", self.inner.n, self.inner.epsilon, self.inner.interval_us)
    }
}

#[pyclass(name = "Timestamp", frozen, eq, skip_from_py_object)]
#[derive(Clone, PartialEq)]
struct PyTimestamp {
    inner: RepClTimestamp,
    cfg: ClockConfig,
}

impl PyTimestamp {
    fn wrap(&self, inner: RepClTimestamp) -> Self {
        PyTimestamp { inner, cfg: self.cfg }
    }
}

#[pymethods]
impl PyTimestamp {
    /// `offsets` maps process id to offset; absent processes sit at epsilon.
    #[new]
    #[pyo3(signature = (owner, mx, offsets, config, counters = None))]
    fn new(
        owner: usize,
        mx: u64,
        offsets: BTreeMap<usize, u32>,
        config: &PyConfig,
        counters: Option<BTreeMap<usize, u32>>,
    ) -> PyResult<Self> {
        let cfg = config.inner;
        let mut t = RepClTimestamp::from_offsets(owner, mx, offsets, &cfg).map_err(err)?;
        if let Some(c) = counters {
            t = t.with_counters(c).map_err(err)?;
        }
        Ok(PyTimestamp { inner: t, cfg })
    }

    #[staticmethod]
    fn initial(owner: usize, config: &PyConfig) -> Self {
        PyTimestamp { inner: RepClTimestamp::initial(owner, &config.inner), cfg: config.inner }
    }

    #[getter]
    fn mx(&self) -> u64 {
        self.inner.mx()
    }

    #[getter]
    fn owner(&self) -> usize {
        self.inner.owner()
    }

    #[getter]
    fn offsets(&self) -> BTreeMap<usize, u32> {
        self.inner.offsets().collect()
    }

    #[getter]
    fn counters(&self) -> BTreeMap<usize, u32> {
        self.inner.counters().into_iter().collect()
    }

    fn knowledge(&self, k: usize) -> PyResult<i64> {
        clock::knowledge_of(&self.inner, k, &self.cfg).map_err(err)
    }

    fn shift(&self, newmx: u64) -> PyResult<Self> {
        Ok(self.wrap(clock::shift(&self.inner, newmx, &self.cfg).map_err(err)?))
    }

    fn merge_same_epoch(&self, other: &PyTimestamp) -> PyResult<Self> {
        Ok(self.wrap(clock::merge_same_epoch(&self.inner, &other.inner, &self.cfg).map_err(err)?))
    }

    /// One of "before", "after", "concurrent", "equal".
    fn compare(&self, other: &PyTimestamp) -> PyResult<&'static str> {
        Ok(match clock::compare(&self.inner, &other.inner, &self.cfg).map_err(err)? {
            CompareResult::Before => "before",
            CompareResult::After => "after",
            CompareResult::Concurrent => "concurrent",
            CompareResult::Equal => "equal",
        })
    }

    fn send_local(&self, epoch: u64) -> Self {
        self.wrap(clock::advance_send_local(&self.inner, epoch, &self.cfg))
    }

    fn receive(&self, message: &PyTimestamp, epoch: u64) -> PyResult<Self> {
        Ok(self.wrap(clock::advance_receive(&self.inner, &message.inner, epoch, &self.cfg).map_err(err)?))
    }

    fn encode(&self) -> PyResult<Vec<u32>> {
        Ok(encode_timestamp(&self.inner, &self.cfg).map_err(err)?.words)
    }

    #[staticmethod]
    fn decode(words: Vec<u32>, owner: usize, config: &PyConfig) -> PyResult<Self> {
        let t = decode_timestamp(&PackedTimestamp { words }, owner, &config.inner).map_err(err)?;
        Ok(PyTimestamp { inner: t, cfg: config.inner })
    }

    fn __repr__(&self) -> String {
        format!("Timestamp(owner={}, mx={}, offsets={:?})", self.inner.owner(), self.inner.mx(), self.offsets())
    }
}

fn load(trace: &str) -> PyResult<TraceLog> {
    parse_trace(trace).map_err(err)
}

/// Runs the simulator. Returns `(metrics, trace_jsonl)`.
#[pyfunction]
#[pyo3(signature = (n, epsilon, interval_us, delta_us = 1, alpha = 10.0, ticks = 10_000, tick_us = 1,
                    seed = 0, counter_mode = "full", local_ratio = 0.5))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    n: usize,
    epsilon: u32,
    interval_us: u64,
    delta_us: u64,
    alpha: f64,
    ticks: u64,
    tick_us: u64,
    seed: u64,
    counter_mode: &str,
    local_ratio: f64,
) -> PyResult<(BTreeMap<String, f64>, String)> {
    let cfg = ClockConfig::new(n, epsilon, interval_us).map_err(err)?.with_counter_mode(mode(counter_mode)?);
    let mut p = SimParams::new(cfg);
    p.delta_us = delta_us;
    p.alpha_pct = alpha;
    p.ticks = ticks;
    p.tick_us = tick_us;
    p.seed = seed;
    p.local_ratio = local_ratio;
    let out = sim::run(&p).map_err(err)?;
    let r = MetricsRow::from_run(&out);
    let metrics = BTreeMap::from([
        ("events".to_string(), r.events as f64),
        ("sends".into(), r.sends as f64),
        ("recvs".into(), r.recvs as f64),
        ("locals".into(), r.locals as f64),
        ("avg_offsets_stored".into(), r.avg_offsets_stored),
        ("p99_offsets_stored".into(), r.p99_offsets_stored),
        ("pct_events_with_counters".into(), r.pct_events_with_counters),
        ("max_counter".into(), r.max_counter as f64),
        ("max_observed_skew_us".into(), r.max_observed_skew_us as f64),
    ]);
    Ok((metrics, out.trace.to_jsonl()))
}

#[pyfunction]
fn sort_events(trace: &str) -> PyResult<Vec<usize>> {
    replay::sort_events(load(trace)?).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (trace, limit = None))]
fn enumerate_replays(trace: &str, limit: Option<usize>) -> PyResult<Vec<Vec<usize>>> {
    replay::enumerate_replays(load(trace)?, limit).map_err(err)
}

/// `None` if accepted, else `(position, event, reason)`.
#[pyfunction]
fn validate_sequence(trace: &str, sequence: Vec<usize>) -> PyResult<Option<(usize, usize, String)>> {
    Ok(match replay::validate_sequence(&load(trace)?, &sequence).map_err(err)? {
        Verdict::Accepted => None,
        Verdict::Rejected { position, event, constraint } => Some((position, event, constraint.to_string())),
    })
}

#[pyclass(name = "Session")]
struct PySession {
    inner: ReplaySession,
}

#[pymethods]
impl PySession {
    #[new]
    fn new(trace: &str) -> PyResult<Self> {
        Ok(PySession { inner: ReplaySession::new(load(trace)?).map_err(err)? })
    }

    fn frontier(&self) -> Vec<usize> {
        self.inner.frontier()
    }

    fn choose(&mut self, key: usize) -> PyResult<()> {
        self.inner.choose(key).map_err(|e| PyKeyError::new_err(e.to_string()))
    }

    fn reset(&mut self) {
        self.inner.reset();
    }

    fn auto_replay(&mut self, seed: u64) -> Vec<usize> {
        self.inner.auto_replay(seed)
    }

    #[getter]
    fn replayed(&self) -> Vec<usize> {
        self.inner.replayed().to_vec()
    }

    #[getter]
    fn done(&self) -> bool {
        self.inner.is_done()
    }

    fn __len__(&self) -> usize {
        self.inner.total()
    }
}

#[pymodule]
fn repcl_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyConfig>()?;
    m.add_class::<PyTimestamp>()?;
    m.add_class::<PySession>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(sort_events, m)?)?;
    m.add_function(wrap_pyfunction!(enumerate_replays, m)?)?;
    m.add_function(wrap_pyfunction!(validate_sequence, m)?)?;
    Ok(())
}
