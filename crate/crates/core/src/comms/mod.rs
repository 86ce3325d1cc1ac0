//! Simulated messaging fabric: QoS-aware channels over lossy links, domain
//! bridges, a keyed throttle for high-rate streams and bulk data sync.
//!
//! Nothing here owns a clock. Callers pass `now` and get back scheduled
//! delivery times, which the world simulator turns into queue events.

mod network;
mod qos;
mod sync;
mod throttle;

pub use network::{
    ChannelStats, CommsError, DomainBridge, Envelope, LinkConfig, LossWindow, Network, Route,
};
pub use qos::{Durability, QosProfile, Reliability};
pub use sync::{DataProduct, DataSync, SyncTicket};
pub use throttle::{max_in_window, Batch, Throttle};

pub const SHARED_DOMAIN: &str = "team";

/// The robot-internal domain name for a robot id.
pub fn robot_domain(robot: &str) -> String {
    format!("robot/{robot}")
}
