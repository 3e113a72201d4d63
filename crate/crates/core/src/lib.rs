//! Discrete-event simulation of TCP/FTP traffic over IEEE 802.11 DCF
//! multi-hop ad-hoc networks, with a sweep harness over the MAC's retry
//! and contention-window parameters.

pub mod experiment;
pub mod frame;
pub mod mac;
pub mod metrics;
pub mod network;
pub mod phy;
pub mod routing;
pub mod scenario;
pub mod sched;
pub mod time;
pub mod transport;

pub use frame::{FlowId, Frame, FrameKind, NodeId, Packet, PacketId};
pub use mac::{MacParams, MacState};
pub use metrics::{DropReason, MetricsReport};
pub use network::{run_scenario, RunOutput, SimError, SimSetup, Simulation};
pub use phy::{Position, RadioParams};
pub use scenario::{build_dumbbell, ConfigError, FlowSpec, ScenarioConfig, Topology};
pub use time::{SimDuration, SimTime};
