//! Terminal replay driver shared by `repcl-replay`.

use std::io::{self, BufRead, Write};

use repcl::replay::ReplaySession;

pub const PROMPT: &str = "Please choose the event to replay: ";

/// Drives a session from a line-oriented terminal.
///
/// Events with no alternative are replayed and printed straight away. When the
/// frontier holds several events they are listed once, numbered from 0, and
/// the numbers stay valid until every listed event is replayed or a new
/// event becomes available. An empty line picks the lowest listed number
/// still pending. `q` or end of input stops early.
///
/// Returns the replayed keys.
pub fn run_interactive(
    session: &mut ReplaySession,
    mut input: impl BufRead,
    mut out: impl Write,
) -> io::Result<Vec<usize>> {
    let mut pool: Vec<usize> = Vec::new();
    let mut line = String::new();
    while !session.is_done() {
        let frontier = session.frontier();
        let pending = pool.iter().any(|&k| session.is_remaining(k));
        let fits = pending && frontier.iter().all(|k| pool.contains(k));
        if !fits {
            if frontier.len() == 1 {
                pool.clear();
                let k = frontier[0];
                session.choose(k).map_err(io::Error::other)?;
                writeln!(out, "{}", event_line(session, k))?;
                continue;
            }
            pool = frontier;
            writeln!(out, "Concurrent events detected!")?;
            for (i, &k) in pool.iter().enumerate() {
                writeln!(out, "{i}. {}", event_line(session, k))?;
            }
        }
        let labels = labels_of(session, &pool);
        write!(out, "{PROMPT}")?;
        out.flush()?;
        line.clear();
        if input.read_line(&mut line)? == 0 {
            writeln!(out)?;
            break;
        }
        let answer = line.trim();
        if answer.eq_ignore_ascii_case("q") {
            break;
        }
        let pick = if answer.is_empty() {
            labels.first().copied()
        } else {
            answer.parse::<usize>().ok().filter(|i| labels.contains(i))
        };
        let Some(i) = pick else {
            writeln!(out, "Enter one of {labels:?}, or q to stop.")?;
            continue;
        };
        let k = pool[i];
        match session.choose(k) {
            Ok(()) => writeln!(out, "{}", event_line(session, k))?,
            Err(e) => writeln!(out, "Cannot replay {i} yet: {e}")?,
        }
    }
    Ok(session.replayed().to_vec())
}

/// Listed numbers of the pool entries still pending. The pool keeps its
/// original numbering, so replayed entries leave gaps.
fn labels_of(session: &ReplaySession, pool: &[usize]) -> Vec<usize> {
    (0..pool.len()).filter(|&i| session.is_remaining(pool[i])).collect()
}

fn event_line(session: &ReplaySession, key: usize) -> String {
    let t = session.trace();
    t.ascii_line(&t.events[key])
}
