//! Event records and trace files.
//!
//! Three formats are understood:
//!
//! * JSONL (canonical): a header line carrying the clock config and node
//!   names, then one event per line.
//! * Binary: a small header followed by packed timestamps, little-endian.
//! * ASCII listing (read only): lines such as
//!   `[(EventID=1, EventType=SEND, EventTime=[(NodeId=10.1.1.3, HLC=21,
//!   Offsets=[-15, -15, 0, -15, -15], Counters=0)], Sender=10.1.1.3,
//!   Receiver=10.1.1.4)]`, where negative offsets mean "absent".

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::clock::RepClTimestamp;
use crate::config::{ClockConfig, CounterMode, ProcessId};
use crate::error::TraceError;
use crate::packed::{decode_timestamp, encode_timestamp, PackedTimestamp};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum EventType {
    Send,
    Recv,
    Local,
}

impl EventType {
    pub fn as_str(self) -> &'static str {
        match self {
            EventType::Send => "SEND",
            EventType::Recv => "RECV",
            EventType::Local => "LOCAL",
        }
    }
}

impl std::fmt::Display for EventType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EventType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "SEND" => Ok(EventType::Send),
            "RECV" => Ok(EventType::Recv),
            "LOCAL" => Ok(EventType::Local),
            other => Err(format!("unknown event type `{other}`")),
        }
    }
}

/// One logged event. For SEND and LOCAL `node == sender`; for RECV
/// `node == receiver`. SEND/RECV pairs share `event_id`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventRecord {
    pub event_id: u64,
    pub event_type: EventType,
    pub node: String,
    pub ts: RepClTimestamp,
    pub sender: String,
    pub receiver: String,
}

/// A parsed trace: clock config, node names (index = process id) and events
/// in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceLog {
    pub config: ClockConfig,
    pub nodes: Vec<String>,
    pub events: Vec<EventRecord>,
}

#[derive(Serialize, Deserialize)]
struct HeaderLine {
    format: String,
    version: u32,
    config: ClockConfig,
    nodes: Vec<String>,
}

const FORMAT_NAME: &str = "repcl-trace";
const FORMAT_VERSION: u32 = 1;
const BINARY_MAGIC: &[u8; 4] = b"RPCL";

#[derive(Serialize, Deserialize)]
struct EventLine {
    event_id: u64,
    event_type: EventType,
    node: String,
    mx: u64,
    offsets: BTreeMap<ProcessId, u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    counters: Option<BTreeMap<ProcessId, u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    counter_sum: Option<u32>,
    sender: String,
    receiver: String,
}

impl TraceLog {
    pub fn new(config: ClockConfig, nodes: Vec<String>) -> Self {
        TraceLog { config, nodes, events: Vec::new() }
    }

    /// Node names `p0 .. p{n-1}`.
    pub fn default_nodes(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("p{i}")).collect()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn node_index(&self, name: &str) -> Option<ProcessId> {
        self.nodes.iter().position(|n| n == name)
    }

    /// Checks structural invariants: known nodes, owners matching nodes,
    /// timestamps valid under the config, unique SEND ids and every RECV
    /// paired with exactly one SEND.
    pub fn validate(&self) -> Result<(), TraceError> {
        let bad = |i: usize, msg: String| Err(TraceError::Invalid(format!("event {i}: {msg}")));
        if self.nodes.len() != self.config.n {
            return Err(TraceError::Invalid(format!(
                "{} node names for n = {}",
                self.nodes.len(),
                self.config.n
            )));
        }
        let index: HashMap<&str, usize> =
            self.nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let mut sends = HashSet::new();
        let mut recvs = HashSet::new();
        for (i, e) in self.events.iter().enumerate() {
            let Some(&pid) = index.get(e.node.as_str()) else {
                return bad(i, format!("unknown node `{}`", e.node));
            };
            if e.ts.owner() != pid {
                return bad(i, format!("timestamp owner {} is not node {}", e.ts.owner(), e.node));
            }
            if let Err(err) = e.ts.validate(&self.config) {
                return bad(i, err.to_string());
            }
            let expected = match e.event_type {
                EventType::Send | EventType::Local => &e.sender,
                EventType::Recv => &e.receiver,
            };
            if *expected != e.node {
                return bad(i, format!("{} on node {} names {expected}", e.event_type, e.node));
            }
            match e.event_type {
                EventType::Send => {
                    if !sends.insert(e.event_id) {
                        return bad(i, format!("duplicate SEND id {}", e.event_id));
                    }
                }
                EventType::Recv => {
                    if !recvs.insert(e.event_id) {
                        return bad(i, format!("duplicate RECV id {}", e.event_id));
                    }
                }
                EventType::Local => {}
            }
        }
        for (i, e) in self.events.iter().enumerate() {
            if e.event_type == EventType::Recv && !sends.contains(&e.event_id) {
                return bad(i, format!("RECV id {} has no matching SEND", e.event_id));
            }
        }
        Ok(())
    }

    pub fn write_jsonl(&self, mut out: impl Write) -> Result<(), TraceError> {
        let header = HeaderLine {
            format: FORMAT_NAME.into(),
            version: FORMAT_VERSION,
            config: self.config,
            nodes: self.nodes.clone(),
        };
        serde_json::to_writer(&mut out, &header).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
        for e in &self.events {
            let line = EventLine {
                event_id: e.event_id,
                event_type: e.event_type,
                node: e.node.clone(),
                mx: e.ts.mx(),
                offsets: e.ts.offsets().collect(),
                counters: match self.config.counter_mode {
                    CounterMode::Full => Some(e.ts.counters().into_iter().collect()),
                    CounterMode::Sum => None,
                },
                counter_sum: match self.config.counter_mode {
                    CounterMode::Full => None,
                    CounterMode::Sum => Some(e.ts.counter_sum() as u32),
                },
                sender: e.sender.clone(),
                receiver: e.receiver.clone(),
            };
            serde_json::to_writer(&mut out, &line).map_err(std::io::Error::from)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("JSON is UTF-8")
    }

    /// Binary layout: magic, version, config, node names, event count, then
    /// per event: id, type, node/sender/receiver indices, word count, words.
    pub fn write_binary(&self, mut out: impl Write) -> Result<(), TraceError> {
        let c = &self.config;
        out.write_all(BINARY_MAGIC)?;
        out.write_all(&FORMAT_VERSION.to_le_bytes())?;
        out.write_all(&(c.n as u32).to_le_bytes())?;
        out.write_all(&c.epsilon.to_le_bytes())?;
        out.write_all(&c.interval_us.to_le_bytes())?;
        out.write_all(&c.offset_bits.to_le_bytes())?;
        out.write_all(&c.counter_bits.to_le_bytes())?;
        out.write_all(&[match c.counter_mode {
            CounterMode::Full => 0u8,
            CounterMode::Sum => 1u8,
        }])?;
        for name in &self.nodes {
            out.write_all(&(name.len() as u32).to_le_bytes())?;
            out.write_all(name.as_bytes())?;
        }
        out.write_all(&(self.events.len() as u64).to_le_bytes())?;
        let idx = |name: &str| -> Result<u16, TraceError> {
            self.node_index(name)
                .map(|i| i as u16)
                .ok_or_else(|| TraceError::Invalid(format!("unknown node `{name}`")))
        };
        for e in &self.events {
            out.write_all(&e.event_id.to_le_bytes())?;
            out.write_all(&[match e.event_type {
                EventType::Send => 0u8,
                EventType::Recv => 1,
                EventType::Local => 2,
            }])?;
            for name in [&e.node, &e.sender, &e.receiver] {
                out.write_all(&idx(name)?.to_le_bytes())?;
            }
            let packed = encode_timestamp(&e.ts, c)?;
            out.write_all(&(packed.words.len() as u16).to_le_bytes())?;
            for w in &packed.words {
                out.write_all(&w.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_binary(&self) -> Result<Vec<u8>, TraceError> {
        let mut buf = Vec::new();
        self.write_binary(&mut buf)?;
        Ok(buf)
    }

    pub fn read_binary(mut input: impl Read) -> Result<Self, TraceError> {
        let mut buf = Vec::new();
        input.read_to_end(&mut buf)?;
        let mut r = ByteReader { buf: &buf, pos: 0 };
        if r.take(4)? != BINARY_MAGIC {
            return Err(TraceError::Invalid("not a binary trace".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(TraceError::Invalid(format!("unsupported version {version}")));
        }
        let n = r.u32()? as usize;
        let epsilon = r.u32()?;
        let interval_us = r.u64()?;
        let offset_bits = r.u32()?;
        let counter_bits = r.u32()?;
        let counter_mode = match r.u8()? {
            0 => CounterMode::Full,
            1 => CounterMode::Sum,
            m => return Err(TraceError::Invalid(format!("bad counter mode {m}"))),
        };
        let config = ClockConfig { n, epsilon, interval_us, offset_bits, counter_bits, counter_mode };
        config.validate().map_err(|e| TraceError::Invalid(e.to_string()))?;
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let len = r.u32()? as usize;
            let bytes = r.take(len)?;
            nodes.push(
                String::from_utf8(bytes.to_vec())
                    .map_err(|_| TraceError::Invalid("node name is not UTF-8".into()))?,
            );
        }
        let count = r.u64()? as usize;
        let mut log = TraceLog::new(config, nodes);
        for i in 0..count {
            let event_id = r.u64()?;
            let event_type = match r.u8()? {
                0 => EventType::Send,
                1 => EventType::Recv,
                2 => EventType::Local,
                t => return Err(TraceError::Invalid(format!("event {i}: bad type {t}"))),
            };
            let mut names = [0usize; 3];
            for slot in &mut names {
                *slot = r.u16()? as usize;
                if *slot >= n {
                    return Err(TraceError::Invalid(format!("event {i}: node index {slot}")));
                }
            }
            let words = r.u16()? as usize;
            let mut packed = PackedTimestamp { words: Vec::with_capacity(words) };
            for _ in 0..words {
                packed.words.push(r.u32()?);
            }
            let ts = decode_timestamp(&packed, names[0], &config)?;
            log.events.push(EventRecord {
                event_id,
                event_type,
                node: log.nodes[names[0]].clone(),
                ts,
                sender: log.nodes[names[1]].clone(),
                receiver: log.nodes[names[2]].clone(),
            });
        }
        if r.pos != buf.len() {
            return Err(TraceError::Invalid("trailing bytes after last event".into()));
        }
        Ok(log)
    }

    /// Reads a trace file, detecting the binary format by its magic bytes.
    pub fn read_file(path: impl AsRef<Path>) -> Result<Self, TraceError> {
        let bytes = std::fs::read(path)?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TraceError> {
        if bytes.starts_with(BINARY_MAGIC) {
            return Self::read_binary(bytes);
        }
        let text = std::str::from_utf8(bytes)
            .map_err(|e| TraceError::Invalid(format!("trace is not UTF-8: {e}")))?;
        parse_trace(text)
    }

    pub fn write_file(&self, path: impl AsRef<Path>, binary: bool) -> Result<(), TraceError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        if binary {
            self.write_binary(&mut out)?;
        } else {
            self.write_jsonl(&mut out)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Renders one event as an ASCII listing line.
    pub fn ascii_line(&self, e: &EventRecord) -> String {
        let eps = self.config.epsilon as i64;
        let offsets: Vec<String> = (0..self.config.n)
            .map(|k| e.ts.offset(k).map(i64::from).unwrap_or(-eps).to_string())
            .collect();
        let counters = match self.config.counter_mode {
            CounterMode::Sum => e.ts.counter_sum().to_string(),
            CounterMode::Full => {
                let c: Vec<String> =
                    (0..self.config.n).map(|k| e.ts.counter(k).to_string()).collect();
                format!("[{}]", c.join(", "))
            }
        };
        // Listings print the node that logged a RECV in the Sender slot.
        let (sender, receiver) = match e.event_type {
            EventType::Recv => (&e.receiver, &e.sender),
            _ => (&e.sender, &e.receiver),
        };
        format!(
            "[(EventID={}, EventType={}, EventTime=[(NodeId={}, HLC={}, Offsets=[{}], Counters={})], Sender={}, Receiver={})]",
            e.event_id,
            e.event_type,
            e.node,
            e.ts.mx(),
            offsets.join(", "),
            counters,
            sender,
            receiver
        )
    }
}

struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn take(&mut self, len: usize) -> Result<&'a [u8], TraceError> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            return Err(TraceError::Invalid(format!("truncated at byte {}", self.pos)));
        };
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, TraceError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, TraceError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, TraceError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, TraceError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum LineKind {
    Json,
    Ascii,
}

fn classify(line: &str) -> LineKind {
    if line.starts_with('{') {
        LineKind::Json
    } else {
        LineKind::Ascii
    }
}

/// Parses a JSONL or ASCII-listing trace. Blank lines are skipped, as are
/// `#` comments in ASCII listings. An empty input yields an empty trace with
/// a one-process placeholder config.
pub fn parse_trace(input: &str) -> Result<TraceLog, TraceError> {
    let mut kind = None;
    for (i, line) in input.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let k = classify(t);
        match kind {
            None => kind = Some(k),
            Some(prev) if prev != k => return Err(TraceError::MixedFormats { line: i + 1 }),
            _ => {}
        }
    }
    match kind {
        None => Ok(TraceLog::new(
            ClockConfig::new(1, 1, 1).expect("placeholder config"),
            TraceLog::default_nodes(1),
        )),
        Some(LineKind::Json) => parse_jsonl(input),
        Some(LineKind::Ascii) => parse_ascii(input, None),
    }
}

pub fn parse_jsonl(input: &str) -> Result<TraceLog, TraceError> {
    let mut log: Option<TraceLog> = None;
    for (i, line) in input.lines().enumerate() {
        let lineno = i + 1;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let malformed = |message: String| TraceError::Malformed { line: lineno, message };
        let Some(log) = log.as_mut() else {
            let header: HeaderLine = serde_json::from_str(t)
                .map_err(|e| malformed(format!("expected header: {e}")))?;
            if header.format != FORMAT_NAME || header.version != FORMAT_VERSION {
                return Err(malformed(format!(
                    "unsupported header {} v{}",
                    header.format, header.version
                )));
            }
            header.config.validate().map_err(|e| malformed(e.to_string()))?;
            if header.nodes.len() != header.config.n {
                return Err(malformed(format!(
                    "{} node names for n = {}",
                    header.nodes.len(),
                    header.config.n
                )));
            }
            log = Some(TraceLog::new(header.config, header.nodes));
            continue;
        };
        let ev: EventLine = serde_json::from_str(t).map_err(|e| malformed(e.to_string()))?;
        let owner = log
            .node_index(&ev.node)
            .ok_or_else(|| malformed(format!("unknown node `{}`", ev.node)))?;
        let cfg = &log.config;
        let mut ts = RepClTimestamp::from_offsets(owner, ev.mx, ev.offsets, cfg)
            .map_err(|e| malformed(e.to_string()))?;
        ts = match (cfg.counter_mode, ev.counters, ev.counter_sum) {
            (CounterMode::Full, c, None) => ts.with_counters(c.unwrap_or_default()),
            (CounterMode::Sum, None, s) => ts.with_counter_sum(s.unwrap_or(0)),
            _ => return Err(malformed("counter fields do not match the counter mode".into())),
        }
        .map_err(|e| malformed(e.to_string()))?;
        ts.validate(cfg).map_err(|e| malformed(e.to_string()))?;
        log.events.push(EventRecord {
            event_id: ev.event_id,
            event_type: ev.event_type,
            node: ev.node,
            ts,
            sender: ev.sender,
            receiver: ev.receiver,
        });
    }
    log.ok_or(TraceError::MissingHeader)
}

fn ascii_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(concat!(
            r"^(?:\d+\.\s*)?\[\(\s*EventID=(\d+),\s*EventType=(\w+),\s*",
            r"EventTime=\[\(\s*NodeId=([^,\s]+),\s*HLC=(\d+),\s*Offsets=\[([^\]]*)\],\s*",
            r"Counters=(\d+)\s*\)\],\s*Sender=([^,\s]+),\s*Receiver=([^)\s]+)\s*\)\]$"
        ))
        .expect("valid regex")
    })
}

struct AsciiRow {
    line: usize,
    event_id: u64,
    event_type: EventType,
    node: String,
    mx: u64,
    offsets: Vec<i64>,
    counters: u32,
    sender: String,
    receiver: String,
}

fn node_sort_key(name: &str) -> (u8, Vec<u32>, String) {
    match name.parse::<std::net::Ipv4Addr>() {
        Ok(ip) => (0, ip.octets().iter().map(|&o| o as u32).collect(), String::new()),
        Err(_) => (1, Vec::new(), name.to_string()),
    }
}

/// Listings only name processes that appear in some event. Silent ones still
/// own an offset lane, so fill the gaps: next free address in the same /24 for
/// IPv4 names, `node<k>` otherwise.
fn pad_node_names(names: &mut Vec<String>, n: usize) {
    let prefix = names
        .iter()
        .filter_map(|s| s.parse::<std::net::Ipv4Addr>().ok())
        .min()
        .map(|ip| ip.octets());
    let mut k = 0u32;
    while names.len() < n {
        k += 1;
        let cand = match prefix {
            Some([a, b, c, _]) if k < 256 => format!("{a}.{b}.{c}.{k}"),
            _ => format!("node{k}"),
        };
        if !names.contains(&cand) {
            names.push(cand);
        }
    }
}

/// Parses an ASCII listing. Node indices follow the sorted node names (IPv4
/// addresses numerically). `epsilon`, when not given, is the magnitude of the
/// negative offsets printed for absent entries. Listings carry one scalar
/// counter, so the trace uses [`CounterMode::Sum`].
pub fn parse_ascii(input: &str, epsilon: Option<u32>) -> Result<TraceLog, TraceError> {
    let re = ascii_regex();
    let mut rows = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let lineno = i + 1;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let malformed = |message: String| TraceError::Malformed { line: lineno, message };
        let caps = re
            .captures(t)
            .ok_or_else(|| malformed("not a recognised event line".into()))?;
        let num = |idx: usize| -> Result<u64, TraceError> {
            caps[idx].parse().map_err(|e| malformed(format!("{e}")))
        };
        let offsets = caps[5]
            .split(',')
            .map(|s| s.trim().parse::<i64>().map_err(|e| malformed(format!("offset `{}`: {e}", s.trim()))))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(AsciiRow {
            line: lineno,
            event_id: num(1)?,
            event_type: caps[2].parse().map_err(malformed)?,
            node: caps[3].to_string(),
            mx: num(4)?,
            offsets,
            counters: u32::try_from(num(6)?).map_err(|e| malformed(e.to_string()))?,
            sender: caps[7].to_string(),
            receiver: caps[8].to_string(),
        });
    }
    if rows.is_empty() {
        return parse_trace("");
    }
    let n = rows[0].offsets.len();
    if let Some(r) = rows.iter().find(|r| r.offsets.len() != n) {
        return Err(TraceError::Malformed {
            line: r.line,
            message: format!("{} offsets, expected {n}", r.offsets.len()),
        });
    }
    let epsilon = match epsilon {
        Some(e) => e,
        None => {
            let neg = rows.iter().flat_map(|r| &r.offsets).filter(|&&o| o < 0).map(|o| -o).max();
            let pos = rows.iter().flat_map(|r| &r.offsets).filter(|&&o| o >= 0).max();
            match (neg, pos) {
                (Some(e), _) => e as u32,
                (None, Some(p)) => *p as u32 + 1,
                (None, None) => 1,
            }
        }
    };
    let mut names: Vec<String> = rows
        .iter()
        .flat_map(|r| [r.node.clone(), r.sender.clone(), r.receiver.clone()])
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    pad_node_names(&mut names, n);
    names.sort_by_key(|n| node_sort_key(n));
    if names.len() != n {
        return Err(TraceError::Invalid(format!(
            "{} distinct nodes but offset arrays of length {n}",
            names.len()
        )));
    }
    let config = ClockConfig::new(n, epsilon, 1)
        .map_err(|e| TraceError::Invalid(e.to_string()))?
        .with_counter_mode(CounterMode::Sum);
    let mut log = TraceLog::new(config, names);
    for r in rows {
        let malformed = |message: String| TraceError::Malformed { line: r.line, message };
        let owner = log.node_index(&r.node).expect("collected above");
        let entries = r
            .offsets
            .iter()
            .enumerate()
            .filter(|&(_, &o)| o >= 0)
            .map(|(k, &o)| (k, o.min(u32::MAX as i64) as u32));
        let ts = RepClTimestamp::from_offsets(owner, r.mx, entries, &config)
            .and_then(|t| t.with_counter_sum(r.counters))
            .map_err(|e| malformed(e.to_string()))?;
        // RECV lines print the receiving node as Sender.
        let (sender, receiver) = match r.event_type {
            EventType::Recv if r.sender == r.node => (r.receiver, r.sender),
            _ => (r.sender, r.receiver),
        };
        log.events.push(EventRecord {
            event_id: r.event_id,
            event_type: r.event_type,
            node: r.node,
            ts,
            sender,
            receiver,
        });
    }
    Ok(log)
}

/// Reads a JSONL trace from a buffered reader, line by line.
pub fn read_jsonl(input: impl BufRead) -> Result<TraceLog, TraceError> {
    let mut text = String::new();
    for line in input.lines() {
        text.push_str(&line?);
        text.push('\n');
    }
    parse_jsonl(&text)
}
