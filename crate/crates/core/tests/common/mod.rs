#![allow(dead_code)]

use dcf_core::phy::propagation_delay;
use dcf_core::transport::TcpConfig;
use dcf_core::*;

/// A static network of named nodes with the given flows and default MAC.
pub fn setup(
    points: &[(&str, f64, f64)],
    flows: &[(usize, usize, f64)],
    radio: RadioParams,
    duration_s: f64,
    seed: u64,
) -> SimSetup {
    let names = points.iter().map(|p| p.0.to_string()).collect();
    let positions: Vec<Position> = points.iter().map(|p| Position::new(p.1, p.2)).collect();
    let flows = flows
        .iter()
        .map(|&(s, d, t)| FlowSpec { src: NodeId(s), dst: NodeId(d), start_time: SimTime::from_secs_f64(t) })
        .collect();
    let mut widest: f64 = 0.0;
    for a in &positions {
        for b in &positions {
            widest = widest.max(a.distance_to(b));
        }
    }
    let topology = Topology::new(names, positions, flows, &radio).unwrap();
    SimSetup {
        topology,
        mac: MacParams::default(),
        radio,
        tcp: TcpConfig::default(),
        duration: SimTime::from_secs_f64(duration_s),
        seed,
        max_propagation: propagation_delay(widest),
    }
}

/// Carrier-sense threshold giving a ≈346 m sensing range, so that the ends
/// of a 200 m-spaced three-node chain cannot hear each other.
pub const SHORT_SENSE_THRESHOLD_W: f64 = 1e-10;

/// A–B–C at 200 m spacing, A→B and C→B.
pub fn hidden_terminal(duration_s: f64, seed: u64) -> SimSetup {
    let radio = RadioParams { carrier_sense_threshold_w: SHORT_SENSE_THRESHOLD_W, ..RadioParams::default() };
    setup(
        &[("A", 0.0, 0.0), ("B", 200.0, 0.0), ("C", 400.0, 0.0)],
        &[(0, 1, 0.0), (2, 1, 0.5)],
        radio,
        duration_s,
        seed,
    )
}

pub fn trace_run(setup: SimSetup) -> (RunOutput, String) {
    let mut sim = Simulation::new(setup).unwrap();
    sim.trace_to_memory();
    let mut out = sim.run().unwrap();
    let trace = String::from_utf8(out.trace.take().unwrap()).unwrap();
    (out, trace)
}
