mod common;

use dcf_core::experiment::csv_row;
use dcf_core::mac::draw_backoff_slots;
use dcf_core::sched::SimRng;
use dcf_core::*;

use common::{hidden_terminal, setup, trace_run};

// Upper 1% point of chi-square with 31 degrees of freedom.
const CHI2_31_P01: f64 = 52.19139483319193;

fn short(seed: u64) -> ScenarioConfig {
    ScenarioConfig { duration: 20.0, seed, ..ScenarioConfig::default() }
}

#[test]
fn same_seed_same_bytes() {
    let cfg = short(11);
    let a = trace_run(SimSetup::from_config(&cfg, false).unwrap());
    let b = trace_run(SimSetup::from_config(&cfg, false).unwrap());
    assert_eq!(csv_row(&cfg, &a.0.report), csv_row(&cfg, &b.0.report));
    assert!(!a.1.is_empty());
    assert_eq!(a.1, b.1);

    let other = trace_run(SimSetup::from_config(&short(12), false).unwrap());
    assert_ne!(a.1, other.1);
}

#[test]
fn books_balance_across_configurations() {
    let mut cfgs = Vec::new();
    for (i, (retry, cw_min, cw_max)) in [(1, 15, 1023), (2, 31, 1023), (7, 255, 511), (20, 15, 63)].into_iter().enumerate() {
        let mut c = short(i as u64 + 1);
        c.mac.short_retry_limit = retry;
        c.mac.cw_min = cw_min;
        c.mac.cw_max = cw_max;
        cfgs.push(c);
    }
    let mut tiny_queue = short(5);
    tiny_queue.mac.queue_capacity = 3;
    tiny_queue.mac.long_retry_limit = 1;
    cfgs.push(tiny_queue);
    cfgs.push(ScenarioConfig { n_intermediate: 10, ..short(6) });

    for cfg in cfgs {
        let out = run_scenario(&cfg, false).unwrap();
        let r = out.report;
        r.check_invariants().unwrap();
        assert_eq!(r.sent, r.delivered + r.total_dropped + r.in_flight_at_end, "{cfg:?}");
        assert_eq!(r.mac_dropped, r.collision_dropped + r.retry_dropped);
        assert!(r.delivered > 0);
        assert_eq!(out.drops.len() as u64, r.total_dropped);
    }
}

#[test]
fn nobody_transmits_into_a_busy_medium() {
    let out = run_scenario(&ScenarioConfig { duration: 60.0, ..ScenarioConfig::default() }, false).unwrap();
    assert_eq!(out.stats.busy_medium_transmissions, 0);
    assert!(out.stats.rts_sent > 0 && out.stats.cts_timeouts > 0);
}

#[test]
fn zero_duration_reports_nothing() {
    let out = run_scenario(&ScenarioConfig { duration: 0.0, ..ScenarioConfig::default() }, false).unwrap();
    assert_eq!(out.report, MetricsReport::default());
    assert!(!out.report.delay_defined);
}

#[test]
fn backoff_draws_are_uniform() {
    let mut rng = SimRng::new(2024);
    let mut counts = [0u64; 32];
    let draws = 100_000u64;
    let mut sum = 0u64;
    for _ in 0..draws {
        let s = draw_backoff_slots(31, &mut rng);
        counts[s as usize] += 1;
        sum += u64::from(s);
    }
    let expected = draws as f64 / 32.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    assert!(chi2 < CHI2_31_P01, "chi2 = {chi2}");
    let mean = sum as f64 / draws as f64;
    assert!((mean - 15.5).abs() <= 0.15, "mean = {mean}");
}

struct Line<'a> {
    t: SimTime,
    node: usize,
    event: &'a str,
    arg: &'a str,
}

fn parse(trace: &str) -> Vec<Line<'_>> {
    trace
        .lines()
        .map(|l| {
            let f: Vec<&str> = l.split_whitespace().collect();
            let (s, ns) = f[0].split_once('.').unwrap();
            let t = SimTime::from_nanos(s.parse::<u64>().unwrap() * 1_000_000_000 + ns.parse::<u64>().unwrap());
            Line { t, node: f[1].parse().unwrap(), event: f[2], arg: f[3] }
        })
        .collect()
}

/// X is already talking to Y when A and B get their first packet; both
/// must back off, and the smaller draw reaches the air first.
#[test]
fn contenders_resolved_by_their_draws() {
    let (mut distinct, mut equal) = (0, 0);
    for seed in 1..=400 {
        let s = setup(
            // A and B are equidistant from X and from Y, so they see
            // every X/Y frame at the same instants.
            &[("X", 75.0, 0.0), ("Y", 75.0, 200.0), ("A", 0.0, 100.0), ("B", 150.0, 100.0)],
            &[(0, 1, 0.0), (2, 1, 0.0001), (3, 1, 0.0001)],
            RadioParams::default(),
            0.2,
            seed,
        );
        let (_, trace) = trace_run(s);
        let lines = parse(&trace);
        let first = |node: usize, event: &str| lines.iter().find(|l| l.node == node && l.event == event);
        let slots = |node| first(node, "BACKOFF").unwrap().arg.trim_start_matches("slots=").parse::<u32>().unwrap();
        let (sa, sb) = (slots(2), slots(3));
        let (ta, tb) = (first(2, "TX").unwrap(), first(3, "TX").unwrap());
        assert_eq!((ta.arg, tb.arg), ("RTS", "RTS"));
        if sa == sb {
            equal += 1;
            assert_eq!(ta.t, tb.t, "seed {seed}: equal draws must collide");
            assert!(lines.iter().any(|l| l.node == 1 && l.event == "COL" && l.t > ta.t));
        } else {
            distinct += 1;
            let (winner, loser) = if sa < sb { (ta, tb) } else { (tb, ta) };
            assert!(winner.t < loser.t, "seed {seed}: {sa} vs {sb}");
        }
    }
    assert!(distinct > 0 && equal > 0, "distinct {distinct}, equal {equal}");
}

#[test]
fn hidden_pair_shares_the_receiver() {
    let (out, _) = trace_run(hidden_terminal(30.0, 3));
    assert!(out.flows.iter().all(|f| f.delivered > 0), "{:?}", out.flows);
    assert!(out.stats.collisions_at_receiver > 0);
    out.report.check_invariants().unwrap();
}

#[test]
fn delay_is_never_below_the_path_airtime() {
    // Seven hops, each at least RTS + SIFS + CTS + SIFS + DATA on air.
    let per_hop_us = 272 + 10 + 248 + 10 + 6328;
    let floor_s = 7.0 * per_hop_us as f64 * 1e-6;
    let r = run_scenario(&short(8), false).unwrap().report;
    assert!(r.delay_defined);
    assert!(r.avg_delay_s >= floor_s, "{} < {floor_s}", r.avg_delay_s);
}
