//! Deterministic desk-scale world simulator for the mission stack: terrain,
//! coverage, robot executives and mission control, driven by one event queue.

pub mod bt;
pub mod coverage;
pub mod executor;
pub mod mission;
pub mod operator;
pub mod queue;
pub mod scenario;
pub mod terrain;
pub mod world;

pub use mission::{run_headless, Mission, MissionResult, MissionSnapshot, SimError};
pub use operator::{CommandError, CommandOutcome, OperatorCommand, ScriptEntry};
pub use scenario::Scenario;
