use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::Parser;
use repcl::replay::{enumerate_replays, validate_sequence, ReplaySession, Verdict};
use repcl::trace::TraceLog;
use repcl_cli::run_interactive;

/// Replay a clock-stamped trace. Event keys are 0-based positions in the trace file.
#[derive(Parser, Debug)]
#[command(version)]
struct Args {
    /// JSONL, ASCII listing, or binary trace.
    #[arg(long)]
    trace: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Random)]
    mode: Mode,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// random: number of replays (seeds seed, seed+1, ...). exhaustive: cap on sequences.
    #[arg(long)]
    limit: Option<usize>,
    /// validate: keys to check, comma or space separated, or a file holding
    /// them. Defaults to the order of the trace file.
    #[arg(long)]
    sequence: Option<String>,
    /// Where to write the result: the replayed trace as JSONL (interactive,
    /// random), the sequences as JSON (exhaustive), or the verdict as JSON (validate).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Mode {
    Interactive,
    Random,
    Exhaustive,
    Validate,
}

fn main() -> Result<ExitCode> {
    env_logger::init();
    let a = Args::parse();
    let trace = Arc::new(
        TraceLog::read_file(&a.trace).with_context(|| format!("reading {}", a.trace.display()))?,
    );
    let stdout = io::stdout();
    let mut out = stdout.lock();
    match a.mode {
        Mode::Interactive => {
            let mut s = ReplaySession::new(trace.clone())?;
            let seq = run_interactive(&mut s, io::stdin().lock(), &mut out)?;
            write_reordered(&a.out, &trace, &seq)?;
        }
        Mode::Random => {
            let runs = a.limit.unwrap_or(1).max(1);
            let mut first = None;
            for i in 0..runs as u64 {
                let seq = ReplaySession::new(trace.clone())?.auto_replay(a.seed + i);
                if runs > 1 {
                    writeln!(out, "# replay {} (seed {})", i + 1, a.seed + i)?;
                }
                for &k in &seq {
                    writeln!(out, "{}", trace.ascii_line(&trace.events[k]))?;
                }
                first.get_or_insert(seq);
            }
            write_reordered(&a.out, &trace, first.as_deref().unwrap_or_default())?;
        }
        Mode::Exhaustive => {
            let all = enumerate_replays(trace.clone(), a.limit)?;
            for seq in &all {
                writeln!(out, "{}", join(seq))?;
            }
            eprintln!("{} sequences", all.len());
            if let Some(p) = &a.out {
                fs::write(p, serde_json::to_string(&all)?)?;
            }
        }
        Mode::Validate => {
            let seq = match &a.sequence {
                None => (0..trace.len()).collect(),
                Some(s) => parse_sequence(s)?,
            };
            let verdict = validate_sequence(&trace, &seq)?;
            match &verdict {
                Verdict::Accepted => writeln!(out, "accepted")?,
                Verdict::Rejected { position, event, constraint } => {
                    writeln!(out, "rejected at position {position}: event {event}: {constraint}")?
                }
            }
            if let Some(p) = &a.out {
                fs::write(p, serde_json::to_string(&verdict)?)?;
            }
            if !verdict.is_accepted() {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn join(seq: &[usize]) -> String {
    seq.iter().map(usize::to_string).collect::<Vec<_>>().join(" ")
}

fn parse_sequence(s: &str) -> Result<Vec<usize>> {
    let text = match fs::read_to_string(s) {
        Ok(t) => t,
        Err(_) => s.to_string(),
    };
    let keys = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<usize>().with_context(|| format!("bad event key `{t}`")))
        .collect::<Result<Vec<_>>>()?;
    if keys.is_empty() {
        bail!("empty sequence");
    }
    Ok(keys)
}

/// Writes the replayed events, in replay order, as a JSONL trace.
fn write_reordered(path: &Option<PathBuf>, trace: &TraceLog, seq: &[usize]) -> Result<()> {
    let Some(p) = path else { return Ok(()) };
    let mut t = TraceLog::new(trace.config, trace.nodes.clone());
    t.events = seq.iter().map(|&k| trace.events[k].clone()).collect();
    t.write_file(p, false).with_context(|| format!("writing {}", p.display()))?;
    Ok(())
}
