use super::*;
use crate::clock::{advance_receive, advance_send_local, compare_trusted, RepClTimestamp};
use crate::config::ClockConfig;
use crate::sim::{self, SimParams};
use crate::trace::EventRecord;
use proptest::prelude::*;

fn rec(id: u64, ty: EventType, node: usize, ts: RepClTimestamp, peer: usize) -> EventRecord {
    let name = |i: usize| format!("p{i}");
    let (sender, receiver) = match ty {
        EventType::Recv => (name(peer), name(node)),
        _ => (name(node), name(peer)),
    };
    EventRecord { event_id: id, event_type: ty, node: name(node), ts, sender, receiver }
}

/// A (p0, epoch 50) and C (p2, epoch 40) send to p1, which receives A as B at
/// epoch 48 and C as D at epoch 52. Trace order A, C, B, D.
fn figure(eps: u32) -> TraceLog {
    let c = ClockConfig::new(3, eps, 1).unwrap();
    let a = RepClTimestamp::fresh(0, 50, &c);
    let cc = RepClTimestamp::fresh(2, 40, &c);
    let b = advance_receive(&RepClTimestamp::initial(1, &c), &a, 48, &c).unwrap();
    let d = advance_receive(&b, &cc, 52, &c).unwrap();
    let mut log = TraceLog::new(c, TraceLog::default_nodes(3));
    log.events = vec![
        rec(1, EventType::Send, 0, a, 1),
        rec(2, EventType::Send, 2, cc, 1),
        rec(1, EventType::Recv, 1, b, 0),
        rec(2, EventType::Recv, 1, d, 2),
    ];
    log
}

fn letters(seqs: &[Vec<usize>]) -> BTreeSet<String> {
    seqs.iter().map(|s| s.iter().map(|&i| ['A', 'C', 'B', 'D'][i]).collect()).collect()
}

#[test]
fn figure_replays() {
    let narrow = enumerate_replays(figure(5), None).unwrap();
    assert_eq!(letters(&narrow), BTreeSet::from(["CABD".to_string()]));
    let wide = enumerate_replays(figure(20), None).unwrap();
    assert_eq!(
        letters(&wide),
        ["CABD", "ABCD", "ACBD"].iter().map(|s| s.to_string()).collect()
    );
    assert_eq!(letters(&[sort_events(figure(5)).unwrap()]), BTreeSet::from(["CABD".into()]));
    let mut s = ReplaySession::new(figure(5)).unwrap();
    assert_eq!(letters(&[s.auto_replay(9)]), BTreeSet::from(["CABD".into()]));
}

#[test]
fn choose_reports_constraints() {
    let mut s = ReplaySession::new(figure(5)).unwrap();
    assert_eq!(s.frontier(), vec![1]);
    match s.choose(0) {
        Err(ReplayError::NotInFrontier { key: 0, constraint: Constraint::Before { predecessor: 1 } }) => {}
        other => panic!("{other:?}"),
    }
    match s.choose(3) {
        Err(ReplayError::NotInFrontier { constraint: Constraint::SameNode { predecessor: 2 }, .. }) => {}
        other => panic!("{other:?}"),
    }
    s.choose(1).unwrap();
    assert!(matches!(
        s.choose(1),
        Err(ReplayError::NotInFrontier { constraint: Constraint::AlreadyReplayed, .. })
    ));
    assert!(matches!(s.choose(17), Err(ReplayError::UnknownEvent(17))));
    s.choose(0).unwrap();
    s.choose(2).unwrap();
    s.choose(3).unwrap();
    assert!(s.is_done() && s.frontier().is_empty());
    s.reset();
    assert_eq!(s.replayed().len(), 0);
    assert_eq!(s.frontier(), vec![1]);
}

#[test]
fn send_after_receive_is_rejected() {
    let log = figure(20);
    let v = validate_sequence(&log, &[2, 0, 1, 3]).unwrap();
    assert_eq!(
        v,
        Verdict::Rejected { position: 0, event: 2, constraint: Constraint::SendRecv { predecessor: 0 } }
    );
}

#[test]
fn validate_rejects_non_permutations() {
    let log = figure(5);
    assert!(validate_sequence(&log, &[1, 0, 2]).is_err());
    assert!(validate_sequence(&log, &[1, 0, 2, 2]).is_err());
    assert!(validate_sequence(&log, &[1, 0, 2, 9]).is_err());
    assert!(validate_sequence(&log, &[1, 0, 2, 3]).unwrap().is_accepted());
    assert!(!validate_sequence(&log, &[0, 1, 2, 3]).unwrap().is_accepted());
}

#[test]
fn enumeration_bound() {
    let mut p = SimParams::new(ClockConfig::new(3, 5, 10).unwrap());
    p.alpha_pct = 30.0;
    p.ticks = 200;
    let out = sim::run(&p).unwrap();
    assert!(out.trace.len() > DEFAULT_ENUMERATION_BOUND);
    assert!(matches!(
        enumerate_replays(out.trace.clone(), None),
        Err(ReplayError::TooManyEvents { .. })
    ));
    assert_eq!(enumerate_replays(out.trace, Some(3)).unwrap().len(), 3);
}

#[test]
fn two_concurrent_events() {
    let c = ClockConfig::new(2, 5, 1).unwrap();
    let mut log = TraceLog::new(c, TraceLog::default_nodes(2));
    log.events = vec![
        rec(1, EventType::Local, 0, RepClTimestamp::fresh(0, 10, &c), 0),
        rec(2, EventType::Local, 1, RepClTimestamp::fresh(1, 10, &c), 1),
    ];
    assert_eq!(enumerate_replays(log.clone(), None).unwrap().len(), 2);
    // Equal timestamps on different nodes sort by node name.
    assert_eq!(sort_events(log).unwrap(), vec![0, 1]);
}

#[test]
fn cycles_are_reported() {
    let c = ClockConfig::new(2, 5, 1).unwrap();
    let mut log = TraceLog::new(c, TraceLog::default_nodes(2));
    // Same node, logged in an order that contradicts the timestamps.
    let late = RepClTimestamp::fresh(0, 30, &c);
    let early = RepClTimestamp::fresh(0, 10, &c);
    log.events = vec![rec(1, EventType::Local, 0, late, 0), rec(2, EventType::Local, 0, early, 0)];
    match ReplaySession::new(log) {
        Err(ReplayError::Cycle { a, b }) => assert_eq!(BTreeSet::from([a, b]), BTreeSet::from([0, 1])),
        other => panic!("{other:?}"),
    }
}

/// Frontier by direct scan: remaining events with no remaining predecessor.
fn brute_frontier(log: &TraceLog, remaining: &[bool], hard: &[Vec<usize>]) -> Vec<usize> {
    let ev = &log.events;
    (0..ev.len())
        .filter(|&f| remaining[f])
        .filter(|&f| hard[f].iter().all(|&p| !remaining[p]))
        .filter(|&f| {
            (0..ev.len()).all(|e| {
                !remaining[e] || compare_trusted(&ev[e].ts, &ev[f].ts, &log.config) != CompareResult::Before
            })
        })
        .collect()
}

fn hard_edges(log: &TraceLog) -> Vec<Vec<usize>> {
    let ev = &log.events;
    (0..ev.len())
        .map(|i| {
            (0..i)
                .filter(|&j| {
                    ev[j].node == ev[i].node
                        || (ev[i].event_type == EventType::Recv
                            && ev[j].event_type == EventType::Send
                            && ev[j].event_id == ev[i].event_id)
                })
                .collect()
        })
        .collect()
}

/// A short random computation built with the clock rules directly.
fn random_trace(seed: u64, events: usize) -> TraceLog {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=4);
    let eps = rng.gen_range(1..=6);
    let c = ClockConfig::new(n, eps, 1).unwrap();
    let mut log = TraceLog::new(c, TraceLog::default_nodes(n));
    let mut ts: Vec<RepClTimestamp> = (0..n).map(|p| RepClTimestamp::initial(p, &c)).collect();
    let mut clock = vec![0u64; n];
    let mut inflight: Vec<(u64, usize, usize, RepClTimestamp)> = Vec::new();
    let mut id = 1;
    while log.events.len() < events {
        let p = rng.gen_range(0..n);
        clock[p] += rng.gen_range(0..3);
        let lo = clock.iter().max().unwrap().saturating_sub(eps as u64);
        clock[p] = clock[p].max(lo);
        let mine = inflight.iter().position(|m| m.2 == p);
        if let (Some(i), true) = (mine, rng.gen_bool(0.5)) {
            let (mid, from, _, m) = inflight.remove(i);
            ts[p] = advance_receive(&ts[p], &m, clock[p], &c).unwrap();
            log.events.push(rec(mid, EventType::Recv, p, ts[p].clone(), from));
        } else {
            ts[p] = advance_send_local(&ts[p], clock[p], &c);
            if rng.gen_bool(0.5) {
                let q = (p + rng.gen_range(1..n)) % n;
                inflight.push((id, p, q, ts[p].clone()));
                log.events.push(rec(id, EventType::Send, p, ts[p].clone(), q));
            } else {
                log.events.push(rec(id, EventType::Local, p, ts[p].clone(), p));
            }
            id += 1;
        }
    }
    log
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn frontier_matches_direct_scan(seed in any::<u64>(), len in 1usize..=12, pick in any::<u64>()) {
        let log = random_trace(seed, len);
        let hard = hard_edges(&log);
        let mut s = ReplaySession::new(log.clone()).unwrap();
        let mut remaining = vec![true; log.len()];
        let mut k = pick;
        while !s.is_done() {
            let mut f = s.frontier();
            f.sort();
            prop_assert_eq!(&f, &brute_frontier(&log, &remaining, &hard));
            let choice = f[(k % f.len() as u64) as usize];
            k = k.rotate_left(7) ^ 0x9e37;
            s.choose(choice).unwrap();
            remaining[choice] = false;
        }
    }

    #[test]
    fn enumerate_equals_validated_permutations(seed in any::<u64>(), len in 1usize..=6) {
        let log = random_trace(seed, len);
        let all: BTreeSet<Vec<usize>> = enumerate_replays(log.clone(), None).unwrap().into_iter().collect();
        let mut accepted = BTreeSet::new();
        let mut perm: Vec<usize> = (0..log.len()).collect();
        permute(&mut perm, 0, &mut |p| {
            if validate_sequence(&log, p).unwrap().is_accepted() {
                accepted.insert(p.to_vec());
            }
        });
        prop_assert_eq!(all, accepted);
    }

    #[test]
    fn random_replays_validate(seed in any::<u64>(), len in 1usize..=40) {
        let log = random_trace(seed, len);
        let mut s = ReplaySession::new(log.clone()).unwrap();
        let seq = s.auto_replay(seed);
        prop_assert!(validate_sequence(&log, &seq).unwrap().is_accepted());
        let mut again = ReplaySession::new(log.clone()).unwrap();
        prop_assert_eq!(again.auto_replay(seed), seq);
        prop_assert!(validate_sequence(&log, s.sorted_order()).unwrap().is_accepted());
    }
}

fn permute(v: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k == v.len() {
        f(v);
        return;
    }
    for i in k..v.len() {
        v.swap(k, i);
        permute(v, k + 1, f);
        v.swap(k, i);
    }
}

#[test]
fn simulated_trace_replays() {
    let mut p = SimParams::new(ClockConfig::new(6, 10, 100).unwrap());
    p.alpha_pct = 10.0;
    p.ticks = 3000;
    p.delta_us = 3;
    let out = sim::run(&p).unwrap();
    let mut s = ReplaySession::new(out.trace.clone()).unwrap();
    let seq = s.auto_replay(1);
    assert!(validate_sequence(&out.trace, &seq).unwrap().is_accepted());
    assert!(validate_sequence(&out.trace, s.sorted_order()).unwrap().is_accepted());
}
