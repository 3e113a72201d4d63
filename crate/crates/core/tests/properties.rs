use std::collections::HashSet;

use proptest::prelude::*;

use dcf_core::mac::{FailedStage, FailureOutcome, RetryState};
use dcf_core::routing::{Adjacency, RouteTable};
use dcf_core::sched::{Scheduler, SimRng};
use dcf_core::transport::{TcpConfig, TcpSender};
use dcf_core::*;

const ORBIT: [u32; 6] = [31, 63, 127, 255, 511, 1023];

proptest! {
    #[test]
    fn uniform_int_stays_in_range(seed in any::<u64>(), upper in 0u32..5000) {
        let mut rng = SimRng::new(seed);
        for _ in 0..64 {
            prop_assert!(rng.uniform_int(upper) <= upper);
        }
    }

    /// None = success, Some(true) = RTS-stage failure, Some(false) = DATA-stage failure.
    #[test]
    fn contention_window_stays_on_its_orbit(steps in prop::collection::vec(prop::option::of(any::<bool>()), 0..300)) {
        let mut st = RetryState::new(&MacParams::default());
        let mut rts_run = 0u32;
        for step in steps {
            match step {
                None => {
                    st.on_success();
                    rts_run = 0;
                    prop_assert_eq!(st.cw.value(), 31);
                    prop_assert_eq!((st.short_retry, st.long_retry), (0, 0));
                }
                Some(rts) => {
                    let before = st.cw.value();
                    let stage = if rts { FailedStage::Rts } else { FailedStage::Data };
                    let long_before = st.long_retry;
                    let outcome = st.on_failure(stage);
                    if rts {
                        rts_run += 1;
                        prop_assert_eq!(outcome == FailureOutcome::Discard, rts_run == 7);
                    } else {
                        prop_assert_eq!(outcome == FailureOutcome::Discard, long_before + 1 == 4);
                    }
                    if outcome == FailureOutcome::Discard {
                        rts_run = 0;
                        prop_assert_eq!(st.cw.value(), 31);
                    } else {
                        prop_assert_eq!(st.cw.value(), (2 * before + 1).min(1023));
                    }
                }
            }
            prop_assert!(ORBIT.contains(&st.cw.value()));
            prop_assert!(st.short_retry < 7 && st.long_retry < 4);
        }
    }

    #[test]
    fn events_fire_in_time_then_schedule_order(
        ops in prop::collection::vec((0u64..50, any::<bool>()), 1..200),
    ) {
        let mut s: Scheduler<usize> = Scheduler::new();
        let mut handles = Vec::new();
        let mut cancelled = HashSet::new();
        for (i, &(t, cancel_prev)) in ops.iter().enumerate() {
            handles.push(s.schedule(SimTime::from_nanos(t), i).unwrap());
            if cancel_prev && i > 0 {
                s.cancel(handles[i / 2]);
                cancelled.insert(i / 2);
            }
        }
        let mut fired = Vec::new();
        s.run_until(SimTime::from_nanos(100), |_, at, i| fired.push((at, i)));
        let mut expected: Vec<(SimTime, usize)> = ops
            .iter()
            .enumerate()
            .filter(|(i, _)| !cancelled.contains(i))
            .map(|(i, &(t, _))| (SimTime::from_nanos(t), i))
            .collect();
        expected.sort();
        prop_assert_eq!(fired, expected);
    }

    #[test]
    fn static_routes_never_loop(
        n in 2usize..14,
        edges in prop::collection::vec((0usize..14, 0usize..14), 0..40),
    ) {
        let edges: Vec<(usize, usize)> = edges.into_iter().filter(|&(a, b)| a < n && b < n && a != b).collect();
        let adj = Adjacency::from_edges(n, &edges);
        let routes = RouteTable::compute(&adj);
        for s in 0..n {
            let hops = adj.hop_distances(NodeId(s));
            for (d, hop) in hops.iter().enumerate() {
                match routes.path(NodeId(s), NodeId(d)) {
                    Ok(path) => {
                        prop_assert_eq!(Some(path.len() as u32 - 1), *hop);
                        let unique: HashSet<_> = path.iter().collect();
                        prop_assert_eq!(unique.len(), path.len());
                    }
                    Err(_) => prop_assert!(hop.is_none()),
                }
            }
        }
    }

    /// Random mixes of new ACKs, duplicates and timeouts: every emission
    /// stops exactly at the window.
    #[test]
    fn tcp_respects_its_window(ops in prop::collection::vec(0u8..4, 1..400)) {
        let mut tx = TcpSender::new(TcpConfig::default());
        let mut now = SimTime::ZERO;
        for op in ops {
            now += SimDuration::from_millis(5);
            match op {
                0 | 1 if tx.has_outstanding() => {
                    let ack = tx.highest_acked + 1;
                    tx.on_ack(ack, Some(now), now);
                }
                2 if tx.has_outstanding() => {
                    let ack = tx.highest_acked;
                    tx.on_ack(ack, None, now);
                }
                3 if tx.has_outstanding() => {
                    tx.on_timeout();
                }
                _ => {}
            }
            let emitted = tx.ftp_tick();
            let cap = tx.cwnd.min(20.0).floor() as u64;
            if !emitted.is_empty() {
                prop_assert_eq!(tx.in_flight(), cap);
            }
            prop_assert!(tx.cwnd >= 1.0 && tx.cwnd <= 20.0);
            prop_assert!(tx.ssthresh >= 2);
        }
    }
}
