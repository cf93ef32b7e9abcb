use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Parser;
use repcl::metrics::{write_metrics_csv, MetricsRow};
use repcl::sim::{self, SimParams};
use repcl::{ClockConfig, CounterMode};

/// Simulate a message-passing computation stamped with replay clocks.
#[derive(Parser, Debug)]
#[command(version)]
struct Args {
    /// Number of processes (1..=64).
    #[arg(long, default_value_t = 8)]
    n: usize,
    /// Clock skew bound, in intervals.
    #[arg(long, default_value_t = 10)]
    epsilon: u32,
    /// Epoch length in microseconds.
    #[arg(long, default_value_t = 100)]
    interval_us: u64,
    /// Message delay in microseconds.
    #[arg(long, default_value_t = 1)]
    delta_us: u64,
    /// Percent chance per tick that a process fires an event.
    #[arg(long, default_value_t = 10.0)]
    alpha: f64,
    #[arg(long, default_value_t = 10_000)]
    ticks: u64,
    /// Simulated time per tick in microseconds.
    #[arg(long, default_value_t = 1)]
    tick_us: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Mode::Full)]
    counter_mode: Mode,
    /// Fraction of fired events that are local.
    #[arg(long, default_value_t = 0.5)]
    local_ratio: f64,
    /// Allow a delay above the clock skew.
    #[arg(long)]
    allow_long_delay: bool,
    /// Trace output (JSONL unless --binary).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Metrics CSV output.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Write the trace in the compact binary format.
    #[arg(long)]
    binary: bool,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug)]
enum Mode {
    Full,
    Sum,
}

fn main() -> Result<()> {
    env_logger::init();
    let a = Args::parse();
    let mode = match a.counter_mode {
        Mode::Full => CounterMode::Full,
        Mode::Sum => CounterMode::Sum,
    };
    let cfg = ClockConfig::new(a.n, a.epsilon, a.interval_us)?.with_counter_mode(mode);
    let mut p = SimParams::new(cfg);
    p.delta_us = a.delta_us;
    p.alpha_pct = a.alpha;
    p.ticks = a.ticks;
    p.tick_us = a.tick_us;
    p.seed = a.seed;
    p.local_ratio = a.local_ratio;
    p.allow_long_delay = a.allow_long_delay;
    let out = sim::run(&p)?;
    if let Some(path) = &a.out {
        out.trace
            .write_file(path, a.binary)
            .with_context(|| format!("writing trace to {}", path.display()))?;
    }
    let row = MetricsRow::from_run(&out);
    if let Some(path) = &a.metrics {
        let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        write_metrics_csv([&row], BufWriter::new(f))?;
    }
    eprintln!(
        "{}: {} events ({} sends, {} recvs, {} locals), offsetsize avg {:.3} p99 {}, {:.2}% with counters, max counter {}",
        row.run_id,
        row.events,
        row.sends,
        row.recvs,
        row.locals,
        row.avg_offsets_stored,
        row.p99_offsets_stored,
        row.pct_events_with_counters,
        row.max_counter
    );
    Ok(())
}
