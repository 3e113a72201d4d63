//! Dumbbell topology construction and run configuration.
//!
//! The dumbbell has two sources on the left (`L1`, `L2`), a horizontal
//! chain of intermediates (`I1..In`) and two sinks on the right (`R1`,
//! `R2`). Node ids are assigned in that order.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::frame::NodeId;
use crate::mac::{MacParamError, MacParams};
use crate::phy::{PhyError, Position, RadioParams};
use crate::routing::{Adjacency, RouteTable, RoutingError};
use crate::time::{SimDuration, SimTime};

/// Angle of the edge nodes off the chain axis.
pub const EDGE_ANGLE_DEG: f64 = 30.0;
/// x coordinate of the first intermediate.
const CHAIN_ORIGIN_X: f64 = 250.0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("n_intermediate must be 6, 8 or 10 (got {0}); pass --allow-any-n to override")]
    Intermediates(u32),
    #[error("n_flows must be between 1 and 4 (got {0})")]
    Flows(u32),
    #[error("{0} must be positive and finite")]
    NonPositive(&'static str),
    #[error(transparent)]
    Mac(#[from] MacParamError),
    #[error(transparent)]
    Phy(#[from] PhyError),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error("cannot read scenario file {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("cannot parse scenario file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n_intermediate: u32,
    /// Simulated seconds.
    pub duration: f64,
    /// Metres between neighbouring nodes.
    pub node_spacing: f64,
    /// Nominal field size in metres (width, height). Descriptive only.
    pub field: (f64, f64),
    pub n_flows: u32,
    /// Transport payload per DATA segment, bytes.
    pub payload: u32,
    pub seed: u64,
    pub mac: MacParams,
    pub radio: RadioParams,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_intermediate: 6,
            duration: 200.0,
            node_spacing: 200.0,
            field: (1500.0, 1200.0),
            n_flows: 4,
            payload: 1500,
            seed: 1,
            mac: MacParams::default(),
            radio: RadioParams::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(s)?)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario config is always serialisable")
    }

    pub fn validate(&self, allow_any_n: bool) -> Result<(), ConfigError> {
        if allow_any_n {
            if self.n_intermediate == 0 {
                return Err(ConfigError::Intermediates(0));
            }
        } else if ![6, 8, 10].contains(&self.n_intermediate) {
            return Err(ConfigError::Intermediates(self.n_intermediate));
        }
        if !(1..=4).contains(&self.n_flows) {
            return Err(ConfigError::Flows(self.n_flows));
        }
        if !self.duration.is_finite() || self.duration < 0.0 {
            return Err(ConfigError::NonPositive("duration"));
        }
        if !self.node_spacing.is_finite() || self.node_spacing <= 0.0 {
            return Err(ConfigError::NonPositive("node_spacing"));
        }
        if self.payload == 0 {
            return Err(ConfigError::NonPositive("payload"));
        }
        self.mac.validate()?;
        self.radio.validate()?;
        Ok(())
    }

    pub fn total_nodes(&self) -> usize {
        self.n_intermediate as usize + 4
    }

    pub fn duration_time(&self) -> SimTime {
        SimTime::from_secs_f64(self.duration)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSpec {
    pub src: NodeId,
    pub dst: NodeId,
    pub start_time: SimTime,
}

/// A static network: node placement, radio neighbourhood and traffic.
#[derive(Debug, Clone)]
pub struct Topology {
    pub names: Vec<String>,
    pub positions: Vec<Position>,
    pub adjacency: Adjacency,
    pub routes: RouteTable,
    pub flows: Vec<FlowSpec>,
}

impl Topology {
    /// Links every pair within decode range and computes routes. Fails if
    /// any flow endpoint pair is unreachable in either direction.
    pub fn new(
        names: Vec<String>,
        positions: Vec<Position>,
        flows: Vec<FlowSpec>,
        radio: &RadioParams,
    ) -> Result<Self, ConfigError> {
        if names.len() != positions.len() {
            return Err(ConfigError::Invalid("one name per position required".into()));
        }
        let n = positions.len();
        let mut adjacency = Adjacency::new(n);
        for i in 0..n {
            for j in (i + 1)..n {
                if radio.decodes_at(positions[i].distance_to(&positions[j])) {
                    adjacency.connect(NodeId(i), NodeId(j));
                }
            }
        }
        let routes = RouteTable::compute(&adjacency);
        for f in &flows {
            if f.src.0 >= n || f.dst.0 >= n {
                return Err(ConfigError::Invalid(format!("flow endpoint out of range: {f:?}")));
            }
            routes.require(f.src, f.dst)?;
            routes.require(f.dst, f.src)?;
        }
        Ok(Topology { names, positions, adjacency, routes, flows })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn hop_count(&self, from: NodeId, to: NodeId) -> Result<usize, RoutingError> {
        Ok(self.routes.path(from, to)?.len() - 1)
    }
}

/// Node ids of the dumbbell roles for `n` intermediates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DumbbellIds {
    pub n_intermediate: usize,
}

impl DumbbellIds {
    pub fn l1(&self) -> NodeId {
        NodeId(0)
    }
    pub fn l2(&self) -> NodeId {
        NodeId(1)
    }
    /// `k` is 1-based.
    pub fn intermediate(&self, k: usize) -> NodeId {
        NodeId(1 + k)
    }
    pub fn r1(&self) -> NodeId {
        NodeId(self.n_intermediate + 2)
    }
    pub fn r2(&self) -> NodeId {
        NodeId(self.n_intermediate + 3)
    }
}

pub fn build_dumbbell(cfg: &ScenarioConfig) -> Result<Topology, ConfigError> {
    if cfg.n_intermediate == 0 {
        return Err(ConfigError::Intermediates(0));
    }
    if !(1..=4).contains(&cfg.n_flows) {
        return Err(ConfigError::Flows(cfg.n_flows));
    }
    let n = cfg.n_intermediate as usize;
    let s = cfg.node_spacing;
    let y0 = cfg.field.1 / 2.0;
    let angle = EDGE_ANGLE_DEG.to_radians();
    let (dx, dy) = (s * angle.cos(), s * angle.sin());
    let x_first = CHAIN_ORIGIN_X;
    let x_last = x_first + s * (n as f64 - 1.0);

    let mut positions = vec![
        Position::new(x_first - dx, y0 + dy),
        Position::new(x_first - dx, y0 - dy),
    ];
    let mut names = vec!["L1".to_string(), "L2".to_string()];
    for k in 0..n {
        positions.push(Position::new(x_first + s * k as f64, y0));
        names.push(format!("I{}", k + 1));
    }
    positions.push(Position::new(x_last + dx, y0 + dy));
    positions.push(Position::new(x_last + dx, y0 - dy));
    names.push("R1".into());
    names.push("R2".into());

    let ids = DumbbellIds { n_intermediate: n };
    let pairs = [(ids.l1(), ids.r1()), (ids.l1(), ids.r2()), (ids.l2(), ids.r1()), (ids.l2(), ids.r2())];
    let flows = pairs
        .iter()
        .take(cfg.n_flows as usize)
        .enumerate()
        .map(|(i, &(src, dst))| FlowSpec { src, dst, start_time: SimTime::ZERO + SimDuration::from_secs(i as u64) })
        .collect();
    Topology::new(names, positions, flows, &cfg.radio)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn node_counts_follow_intermediates() {
        for (n, total) in [(6, 10), (8, 12), (10, 14)] {
            let cfg = ScenarioConfig { n_intermediate: n, ..ScenarioConfig::default() };
            let topo = build_dumbbell(&cfg).unwrap();
            assert_eq!(topo.len(), total);
            assert_eq!(cfg.total_nodes(), total);
            assert_eq!(topo.flows.len(), 4);
        }
    }

    #[test]
    fn seven_intermediates_rejected_unless_allowed() {
        let cfg = ScenarioConfig { n_intermediate: 7, ..ScenarioConfig::default() };
        assert!(matches!(cfg.validate(false), Err(ConfigError::Intermediates(7))));
        cfg.validate(true).unwrap();
    }

    #[test]
    fn flows_start_staggered() {
        let topo = build_dumbbell(&ScenarioConfig::default()).unwrap();
        let starts: Vec<u64> = topo.flows.iter().map(|f| f.start_time.as_nanos()).collect();
        assert_eq!(starts, vec![0, 1_000_000_000, 2_000_000_000, 3_000_000_000]);
    }

    #[test]
    fn toml_round_trip_keeps_overrides() {
        let text = "n_intermediate = 8\nseed = 42\n[mac]\ncw_min = 255\ncw_max = 511\nslot_time = 20\n";
        let cfg = ScenarioConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.n_intermediate, 8);
        assert_eq!(cfg.mac.cw_min, 255);
        assert_eq!(cfg.mac.slot_time, SimDuration::from_micros(20));
        assert_eq!(cfg.radio, RadioParams::default());
        let again = ScenarioConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(ScenarioConfig::from_toml_str("n_nodes = 3").is_err());
    }

    #[test]
    fn disconnected_flow_rejected() {
        let radio = RadioParams::default();
        let r = Topology::new(
            vec!["a".into(), "b".into()],
            vec![Position::new(0.0, 0.0), Position::new(1000.0, 0.0)],
            vec![FlowSpec { src: NodeId(0), dst: NodeId(1), start_time: SimTime::ZERO }],
            &radio,
        );
        assert!(matches!(r, Err(ConfigError::Routing(_))));
    }
}
