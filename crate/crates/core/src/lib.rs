//! Core mission logic for heterogeneous multi-robot teams.
//!
//! The crate holds everything that is independent of a particular world model:
//! the POI registry that arbitrates objectives, the utility engine and greedy
//! planner that robots run locally, the messaging fabric model, the mission
//! event schema, and the KPI engine that reduces event logs to mission metrics.

pub mod comms;
pub mod events;
pub mod geometry;
pub mod kpi;
pub mod planner;
pub mod poi;
pub mod registry;
pub mod utility;

pub use geometry::{Point2, Pose2};
pub use poi::{Poi, PoiId, PoiType, RobotAttempt, RobotId, RobotUtility};
pub use registry::{Actor, PoiRegistry, RegistryError};
