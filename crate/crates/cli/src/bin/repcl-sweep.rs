use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Parser;
use repcl::metrics::{feasibility_sweep, partial_replay, PartialReplayStats, SweepGrid};

/// Sweep an (alpha, delta) grid and classify each point against an offset budget.
#[derive(Parser, Debug)]
#[command(version)]
struct Args {
    /// Grid description, TOML or JSON (chosen by extension, else by content).
    #[arg(long)]
    grid: PathBuf,
    /// Largest acceptable mean offsetsize.
    #[arg(long, default_value_t = 8.0)]
    budget: f64,
    /// Use seeds 1..=N instead of the grid's list.
    #[arg(long)]
    seeds: Option<u64>,
    /// Per-run metrics with a feasible column.
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// SVG plot of the feasible region.
    #[arg(long)]
    out_plot: Option<PathBuf>,
    /// Epsilon the clock runs with, for the partial-replay report.
    #[arg(long, requires = "epsilon_actual")]
    epsilon_configured: Option<u32>,
    /// Physical skew in intervals, for the partial-replay report.
    #[arg(long, requires = "epsilon_configured")]
    epsilon_actual: Option<u32>,
}

fn load_grid(path: &Path) -> Result<SweepGrid> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let json = match path.extension().and_then(|e| e.to_str()) {
        Some("json") => true,
        Some("toml") => false,
        _ => text.trim_start().starts_with('{'),
    };
    let grid: SweepGrid = if json {
        serde_json::from_str(&text).context("parsing JSON grid")?
    } else {
        toml::from_str(&text).context("parsing TOML grid")?
    };
    if grid.alpha.is_empty() || grid.delta_us.is_empty() {
        bail!("grid needs at least one alpha and one delta_us value");
    }
    Ok(grid)
}

fn main() -> Result<()> {
    env_logger::init();
    let a = Args::parse();
    let mut grid = load_grid(&a.grid)?;
    if let Some(k) = a.seeds {
        if k == 0 {
            bail!("--seeds must be at least 1");
        }
        grid.seeds = (1..=k).collect();
    }
    let report = feasibility_sweep(&grid, a.budget)?;
    println!("delta_us,alpha,offsetsize,p99_offsetsize,feasible");
    for p in &report.points {
        println!("{},{},{:.4},{:.4},{}", p.delta_us, p.alpha, p.offsetsize, p.p99_offsetsize, p.feasible);
    }
    let feasible = report.points.iter().filter(|p| p.feasible).count();
    eprintln!(
        "{feasible}/{} points feasible at budget {}; downward-closed in alpha: {}",
        report.points.len(),
        a.budget,
        report.downward_closed_in_alpha()
    );
    if let Some(p) = &a.out_csv {
        let f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
        report.write_csv(BufWriter::new(f))?;
    }
    if let Some(p) = &a.out_plot {
        fs::write(p, report.svg()).with_context(|| format!("writing {}", p.display()))?;
    }
    if let (Some(conf), Some(actual)) = (a.epsilon_configured, a.epsilon_actual) {
        println!("delta_us,alpha,concurrent_pairs,forced_pairs,forced_rate");
        let mut total = PartialReplayStats { concurrent_pairs: 0, forced_pairs: 0 };
        for &d in &grid.delta_us {
            for &al in &grid.alpha {
                let mut pt = PartialReplayStats { concurrent_pairs: 0, forced_pairs: 0 };
                for &s in &grid.seeds {
                    let r = partial_replay(&grid.params(al, d, s)?, conf, actual)?;
                    pt.concurrent_pairs += r.concurrent_pairs;
                    pt.forced_pairs += r.forced_pairs;
                }
                println!("{d},{al},{},{},{:.6}", pt.concurrent_pairs, pt.forced_pairs, pt.forced_rate());
                total.concurrent_pairs += pt.concurrent_pairs;
                total.forced_pairs += pt.forced_pairs;
            }
        }
        eprintln!(
            "epsilon {conf} configured against {actual} actual: {} of {} concurrent pairs forced ({:.4})",
            total.forced_pairs,
            total.concurrent_pairs,
            total.forced_rate()
        );
    }
    Ok(())
}
