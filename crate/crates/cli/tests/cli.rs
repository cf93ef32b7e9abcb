use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use repcl::replay::validate_sequence;
use repcl::trace::{parse_trace, TraceLog};

const LISTING: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/listing.txt");

fn bin(name: &str) -> Command {
    let path = match name {
        "sim" => env!("CARGO_BIN_EXE_repcl-sim"),
        "replay" => env!("CARGO_BIN_EXE_repcl-replay"),
        _ => env!("CARGO_BIN_EXE_repcl-sweep"),
    };
    let mut c = Command::new(path);
    c.env("RUST_BACKTRACE", "0");
    c
}

fn ok(out: Output) -> Output {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn simulate(dir: &Path, tag: &str, extra: &[&str]) -> (PathBuf, PathBuf) {
    let trace = dir.join(format!("{tag}.trace"));
    let metrics = dir.join(format!("{tag}.csv"));
    let mut c = bin("sim");
    c.args(["--n", "6", "--epsilon", "8", "--interval-us", "50", "--delta-us", "4"])
        .args(["--alpha", "15", "--ticks", "3000", "--seed", "9"])
        .arg("--out")
        .arg(&trace)
        .arg("--metrics")
        .arg(&metrics)
        .args(extra);
    ok(c.output().unwrap());
    (trace, metrics)
}

#[test]
fn sim_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    for extra in [&[][..], &["--binary"], &["--counter-mode", "sum", "--local-ratio", "0.2"]] {
        let (t1, m1) = simulate(dir.path(), "a", extra);
        let (t2, m2) = simulate(dir.path(), "b", extra);
        assert_eq!(std::fs::read(&t1).unwrap(), std::fs::read(&t2).unwrap());
        assert_eq!(std::fs::read(&m1).unwrap(), std::fs::read(&m2).unwrap());
        let t = TraceLog::read_file(&t1).unwrap();
        assert!(t.len() > 100);
    }
    let (_, m) = simulate(dir.path(), "c", &[]);
    let csv = std::fs::read_to_string(m).unwrap();
    let header = csv.lines().next().unwrap();
    assert_eq!(
        header,
        "run_id,n,epsilon,interval_us,delta_us,alpha,events,sends,recvs,locals,avg_offsets_stored,\
         p99_offsets_stored,pct_events_with_counters,max_counter,max_observed_skew_us"
    );
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn sim_rejects_bad_parameters() {
    let out = bin("sim").args(["--n", "0"]).output().unwrap();
    assert!(!out.status.success());
    let out = bin("sim").args(["--alpha", "150"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn random_replay_of_a_simulated_trace_validates() {
    let dir = tempfile::tempdir().unwrap();
    let (trace, _) = simulate(dir.path(), "t", &[]);
    let replayed = dir.path().join("replayed.jsonl");
    let out = ok(bin("replay")
        .arg("--trace")
        .arg(&trace)
        .args(["--mode", "random", "--seed", "4", "--out"])
        .arg(&replayed)
        .output()
        .unwrap());
    let original = TraceLog::read_file(&trace).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), original.len());
    // The replayed file holds the same events; its own order must be valid.
    let r = TraceLog::read_file(&replayed).unwrap();
    assert_eq!(r.len(), original.len());
    let identity: Vec<usize> = (0..r.len()).collect();
    assert!(validate_sequence(&r, &identity).unwrap().is_accepted());
    let again = ok(bin("replay")
        .arg("--trace")
        .arg(&trace)
        .args(["--mode", "random", "--seed", "4"])
        .output()
        .unwrap());
    let first = ok(bin("replay")
        .arg("--trace")
        .arg(&trace)
        .args(["--mode", "random", "--seed", "4"])
        .output()
        .unwrap());
    assert_eq!(again.stdout, first.stdout);
}

fn interactive(input: &str) -> String {
    let mut child = bin("replay")
        .args(["--trace", LISTING, "--mode", "interactive"])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    String::from_utf8(ok(child.wait_with_output().unwrap()).stdout).unwrap()
}

/// Replayed events are the lines that do not belong to a choice listing.
fn replayed_ids(out: &str) -> Vec<String> {
    out.split("Please choose the event to replay: ")
        .flat_map(|chunk| chunk.lines())
        .filter(|l| l.starts_with("[(EventID="))
        .map(|l| {
            let id = &l[10..l.find(',').unwrap()];
            let ty = if l.contains("EventType=RECV") { "r" } else { "s" };
            format!("{id}{ty}")
        })
        .collect()
}

#[test]
fn interactive_replay_of_the_listing() {
    let out = interactive(&"\n".repeat(20));
    assert!(out.contains("Concurrent events detected!"));
    assert!(out.contains("Please choose the event to replay: "));
    // Taking the first choice every time replays the listing in its printed
    // order, ending 9, RECV of 2, 10.
    assert_eq!(
        replayed_ids(&out),
        ["1s", "2s", "3s", "4s", "4r", "5s", "6s", "7s", "7r", "8s", "9s", "2r", "10s"]
    );
    // Explicit digits; a bad digit gets a hint and the same prompt again.
    let out = interactive("0\n0\n0\n0\n0\n0\n1\n2\n0\n0\n9\n1\n0\n1\n");
    assert!(out.contains("Enter one of"));
    assert_eq!(replayed_ids(&out).len(), 13);
    // Quitting early keeps what was replayed.
    let out = interactive("q\n");
    assert_eq!(replayed_ids(&out), ["1s"]);
}

#[test]
fn validate_mode_checks_orders() {
    let listing = parse_trace(&std::fs::read_to_string(LISTING).unwrap()).unwrap();
    assert_eq!(listing.len(), 13);
    let out = ok(bin("replay").args(["--trace", LISTING, "--mode", "validate"]).output().unwrap());
    assert_eq!(String::from_utf8(out.stdout).unwrap().trim(), "accepted");
    // The RECV of 4 ahead of its SEND.
    let out = bin("replay")
        .args(["--trace", LISTING, "--mode", "validate", "--sequence", "0,1,2,4,3,5,6,7,8,9,10,11,12"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("rejected at position 3: event 4"), "{text}");
    let out = bin("replay")
        .args(["--trace", LISTING, "--mode", "validate", "--sequence", "0,1,2"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn exhaustive_mode_lists_every_order() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("small.jsonl");
    ok(bin("sim")
        .args(["--n", "3", "--epsilon", "3", "--interval-us", "1", "--alpha", "20", "--ticks", "12", "--seed", "2"])
        .arg("--out")
        .arg(&trace)
        .output()
        .unwrap());
    let t = TraceLog::read_file(&trace).unwrap();
    assert!(t.len() >= 2 && t.len() <= 12, "{} events", t.len());
    let json = dir.path().join("all.json");
    let out = ok(bin("replay")
        .arg("--trace")
        .arg(&trace)
        .args(["--mode", "exhaustive", "--out"])
        .arg(&json)
        .output()
        .unwrap());
    let seqs: Vec<Vec<usize>> = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), seqs.len());
    for s in &seqs {
        assert!(validate_sequence(&t, s).unwrap().is_accepted());
    }
    let capped = ok(bin("replay")
        .arg("--trace")
        .arg(&trace)
        .args(["--mode", "exhaustive", "--limit", "1"])
        .output()
        .unwrap());
    assert_eq!(String::from_utf8(capped.stdout).unwrap().lines().count(), 1);
}

#[test]
fn malformed_trace_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    let mut text = std::fs::read_to_string(LISTING).unwrap();
    text.push_str("[(EventID=oops\n");
    std::fs::write(&bad, text).unwrap();
    let out = bin("replay").arg("--trace").arg(&bad).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 14"));
}

#[test]
fn sweep_writes_csv_plot_and_forced_rate() {
    let dir = tempfile::tempdir().unwrap();
    let grid = dir.path().join("grid.toml");
    std::fs::write(
        &grid,
        "n = 8\nepsilon = 20\ninterval_us = 100\nalpha = [5.0, 40.0, 100.0]\ndelta_us = [1, 8]\nticks = 1500\ntick_us = 1000\n",
    )
    .unwrap();
    let csv = dir.path().join("sweep.csv");
    let svg = dir.path().join("sweep.svg");
    let out = ok(bin("sweep")
        .arg("--grid")
        .arg(&grid)
        .args(["--budget", "2", "--seeds", "2", "--epsilon-configured", "5", "--epsilon-actual", "20"])
        .arg("--out-csv")
        .arg(&csv)
        .arg("--out-plot")
        .arg(&svg)
        .output()
        .unwrap());
    let table = std::fs::read_to_string(&csv).unwrap();
    assert!(table.lines().next().unwrap().ends_with(",max_observed_skew_us,feasible"));
    assert_eq!(table.lines().count(), 1 + 3 * 2 * 2);
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("delta_us,alpha,concurrent_pairs,forced_pairs,forced_rate"));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("concurrent pairs forced"), "{stderr}");

    let json = dir.path().join("grid.json");
    std::fs::write(&json, r#"{"n": 4, "epsilon": 10, "interval_us": 100, "alpha": [10.0], "delta_us": [2], "ticks": 500}"#)
        .unwrap();
    ok(bin("sweep").arg("--grid").arg(&json).output().unwrap());
    let out = bin("sweep").arg("--grid").arg(&json).args(["--epsilon-configured", "3"]).output().unwrap();
    assert!(!out.status.success());
}
