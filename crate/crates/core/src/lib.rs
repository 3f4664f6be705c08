//! Deterministic discrete-event simulator for mobile ad-hoc networks.
//!
//! Three routing protocols (AntHocNet, DSR and ARA) run behind the common
//! [`routing::Routing`] interface on top of a unit-disk radio with a
//! priority interface queue and a per-bit energy model. Every run is a pure
//! function of its [`scenario::Scenario`]: time is integer microseconds and
//! all randomness comes from named [`engine::RngStream`]s.

use std::fmt;

pub mod engine;
pub mod metrics;
pub mod net;
pub mod packet;
pub mod report;
pub mod routing;
pub mod scenario;
pub mod sim;
pub mod sweep;
pub mod traffic;
pub mod world;

pub use engine::{EventHandle, Scheduler, SimTime};
pub use metrics::MetricsReport;
pub use scenario::{Protocol, Scenario};
pub use sim::{run_simulation, RunOutput};

/// Index of a mobile node, `0..node_count`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<u32> for NodeId {
    fn from(v: u32) -> Self {
        NodeId(v)
    }
}
