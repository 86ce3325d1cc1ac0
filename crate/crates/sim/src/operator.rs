//! Operator commands as accepted from a console or a recorded script.

use std::io::{BufRead, Write};

use mosaic_core::events::AutonomyLevel;
use mosaic_core::{PoiId, PoiType, Pose2, RegistryError, RobotId};
use serde::{Deserialize, Serialize};
use thiserror::Error;

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OperatorCommand {
    CreatePoi {
        pose: Pose2,
        poi_type: PoiType,
        #[serde(default = "one")]
        mission_value: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target_id: Option<u64>,
    },
    MovePoi {
        poi_id: PoiId,
        pose: Pose2,
    },
    ConvertPoi {
        poi_id: PoiId,
        poi_type: PoiType,
    },
    DeactivatePoi {
        poi_id: PoiId,
    },
    ReactivatePoi {
        poi_id: PoiId,
    },
    SetAutonomyLevel {
        robot: RobotId,
        level: AutonomyLevel,
    },
    /// Velocity command, held until replaced. DRIVER level only.
    Twist {
        robot: RobotId,
        vx: f64,
        wz: f64,
    },
    /// Go-to-pose command. TASK level only.
    PoseGoal {
        robot: RobotId,
        pose: Pose2,
    },
    /// Drops the robot's current task.
    Abort {
        robot: RobotId,
    },
    ConfirmCandidate {
        poi_id: PoiId,
        confirmed: bool,
    },
    /// Picks the measurement point in the robot's camera image, normalized
    /// coordinates with the origin at the top left.
    RefineTarget {
        poi_id: PoiId,
        u: f64,
        v: f64,
    },
}

impl OperatorCommand {
    pub fn robot(&self) -> Option<&RobotId> {
        match self {
            OperatorCommand::SetAutonomyLevel { robot, .. }
            | OperatorCommand::Twist { robot, .. }
            | OperatorCommand::PoseGoal { robot, .. }
            | OperatorCommand::Abort { robot } => Some(robot),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum CommandOutcome {
    Applied,
    Created { poi_id: PoiId },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CommandError {
    #[error("unknown robot {0}")]
    UnknownRobot(RobotId),
    #[error("robot {0} is not operational")]
    RobotLost(RobotId),
    #[error("{command} requires {required:?} level but {robot} is at {current:?}")]
    LevelMismatch {
        robot: RobotId,
        command: &'static str,
        required: AutonomyLevel,
        current: AutonomyLevel,
    },
    #[error("no pending confirmation for POI {0}")]
    StaleCandidate(PoiId),
    #[error("no pending target request for POI {0}")]
    NoPendingRequest(PoiId),
    #[error("selected point is {distance:.2} m away, beyond the {reach:.2} m reach")]
    OutOfReach { distance: f64, reach: f64 },
    #[error("invalid command: {0}")]
    Invalid(String),
    #[error("mission is over")]
    MissionOver,
    #[error(transparent)]
    Registry(#[from] RegistryError),
}

impl CommandError {
    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            CommandError::UnknownRobot(_) => "unknown_robot",
            CommandError::RobotLost(_) => "robot_lost",
            CommandError::LevelMismatch { .. } => "level_mismatch",
            CommandError::StaleCandidate(_) => "stale_candidate",
            CommandError::NoPendingRequest(_) => "no_pending_request",
            CommandError::OutOfReach { .. } => "out_of_reach",
            CommandError::Invalid(_) => "invalid_command",
            CommandError::MissionOver => "mission_over",
            CommandError::Registry(_) => "registry",
        }
    }
}

/// One line of an operator script: a command and the mission time it applies at.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub t: f64,
    #[serde(flatten)]
    pub command: OperatorCommand,
}

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error("line {line}: entries must be in non-decreasing time order")]
    Order { line: usize },
}

pub fn read_script<R: BufRead>(input: R) -> Result<Vec<ScriptEntry>, ScriptError> {
    let mut out: Vec<ScriptEntry> = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ScriptEntry =
            serde_json::from_str(&line).map_err(|source| ScriptError::Parse {
                line: i + 1,
                source,
            })?;
        if out.last().is_some_and(|prev| entry.t < prev.t) || !entry.t.is_finite() {
            return Err(ScriptError::Order { line: i + 1 });
        }
        out.push(entry);
    }
    Ok(out)
}

pub fn write_script<W: Write>(mut out: W, entries: &[ScriptEntry]) -> std::io::Result<()> {
    for e in entries {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
