//! Discrete-event simulator for vehicular multi-hop GeoBroadcast dissemination.
//!
//! The crate models the lower ITS stack of every vehicle in a scenario:
//! facilities-layer message generation (CAM, DENM, beacons), GeoNetworking
//! forwarding (greedy unicast and contention-based variants), adaptive DCC
//! rate control, and a CSMA/CA broadcast channel, all driven by a single
//! deterministic event loop with an integer-nanosecond clock.
//!
//! Entry points:
//! * [`scenario::ScenarioSpec`] parses and validates scenario files,
//! * [`runner`] expands the experiment matrix and runs cells to artifacts,
//! * [`engine::World`] runs one fully-built simulation world.

pub mod cbf;
pub mod dcc;
pub mod engine;
pub mod facilities;
pub mod geo;
pub mod greedy;
pub mod loct;
pub mod log;
pub mod mac_phy;
pub mod metrics;
pub mod mobility;
pub mod router;
pub mod runner;
pub mod scenario;
pub mod time;
pub mod util;

pub use engine::World;
pub use geo::{GeoArea, GeoPosition};
pub use router::{GnPacket, SetupProfile, TrafficClass};
pub use scenario::ScenarioSpec;
pub use time::{Nanos, SimTime};

/// Stable vehicle identifier, dense in `0..node_count` within a world.
pub type NodeId = u32;
