//! Mission event log: the typed, timestamped records every KPI derives from.
//!
//! Logs are JSONL, one [`MissionEvent`] per line. Span events are written when
//! the span closes and carry explicit `start`/`end` times; `t` equals `end`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Point2, Pose2};
use crate::planner::Plan;
use crate::poi::{PoiId, PoiType, RobotId};

pub const EVENT_SCHEMA_VERSION: u32 = 1;

pub const ACTOR_OPERATOR: &str = "operator";
pub const ACTOR_SYSTEM: &str = "mission_control";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotRole {
    Scout,
    Scientist,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Rock,
    SandPatch,
}

/// What a robot is doing, for downtime accounting. Teleop means a POI is being
/// executed under operator control, which counts as active time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotActivity {
    Idle,
    Planning,
    Executing,
    Teleop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AutonomyLevel {
    Mission,
    Task,
    Driver,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RosterEntry {
    pub id: RobotId,
    pub role: RobotRole,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStepLog {
    pub poi_id: PoiId,
    pub raw_utility: f64,
    pub weighted_utility: f64,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    MissionStart {
        schema: u32,
        scenario: String,
        seed: u64,
        robots: Vec<RosterEntry>,
    },
    MissionEnd {
        reason: String,
    },
    Plan {
        steps: Vec<PlanStepLog>,
        pruned: usize,
        evaluated: usize,
    },
    Create {
        poi_id: PoiId,
        poi_type: PoiType,
        pose: Pose2,
        mission_value: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        target_id: Option<u64>,
    },
    Claim {
        poi_id: PoiId,
        granted: bool,
    },
    Free {
        poi_id: PoiId,
        success: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        detail: Option<String>,
    },
    Deactivate {
        poi_id: PoiId,
    },
    Reactivate {
        poi_id: PoiId,
    },
    Convert {
        poi_id: PoiId,
        from: PoiType,
        to: PoiType,
    },
    MovePoi {
        poi_id: PoiId,
        pose: Pose2,
    },
    TeleopSpan {
        start: f64,
        end: f64,
    },
    TroubleshootSpan {
        start: f64,
        end: f64,
    },
    MonitorSpan {
        start: f64,
        end: f64,
    },
    StateSpan {
        state: RobotActivity,
        start: f64,
        end: f64,
    },
    CoverageDelta {
        area: f64,
    },
    DistanceDelta {
        distance: f64,
    },
    Detection {
        target_id: u64,
        target_kind: TargetKind,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        poi_id: Option<PoiId>,
    },
    Measurement {
        poi_id: PoiId,
        poi_type: PoiType,
        success: bool,
        detail: String,
    },
    RobotDead,
    LevelChange {
        from: AutonomyLevel,
        to: AutonomyLevel,
    },
    SyncComplete {
        product: String,
        bytes: u64,
    },
    Paused,
    Resumed,
    Twist {
        vx: f64,
        wz: f64,
    },
    PoseGoal {
        pose: Pose2,
    },
    Abort,
    CandidateDecision {
        poi_id: PoiId,
        confirmed: bool,
    },
    TargetRefined {
        poi_id: PoiId,
        point: Point2,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::MissionStart { .. } => "mission_start",
            EventKind::MissionEnd { .. } => "mission_end",
            EventKind::Plan { .. } => "plan",
            EventKind::Create { .. } => "create",
            EventKind::Claim { .. } => "claim",
            EventKind::Free { .. } => "free",
            EventKind::Deactivate { .. } => "deactivate",
            EventKind::Reactivate { .. } => "reactivate",
            EventKind::Convert { .. } => "convert",
            EventKind::MovePoi { .. } => "move_poi",
            EventKind::TeleopSpan { .. } => "teleop_span",
            EventKind::TroubleshootSpan { .. } => "troubleshoot_span",
            EventKind::MonitorSpan { .. } => "monitor_span",
            EventKind::StateSpan { .. } => "state_span",
            EventKind::CoverageDelta { .. } => "coverage_delta",
            EventKind::DistanceDelta { .. } => "distance_delta",
            EventKind::Detection { .. } => "detection",
            EventKind::Measurement { .. } => "measurement",
            EventKind::RobotDead => "robot_dead",
            EventKind::LevelChange { .. } => "level_change",
            EventKind::SyncComplete { .. } => "sync_complete",
            EventKind::Paused => "paused",
            EventKind::Resumed => "resumed",
            EventKind::Twist { .. } => "twist",
            EventKind::PoseGoal { .. } => "pose_goal",
            EventKind::Abort => "abort",
            EventKind::CandidateDecision { .. } => "candidate_decision",
            EventKind::TargetRefined { .. } => "target_refined",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionEvent {
    pub t: f64,
    /// Who caused the event: a robot id, `operator` or `mission_control`.
    pub actor: String,
    /// The robot the event concerns, when different from or in addition to the actor.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub robot: Option<RobotId>,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl MissionEvent {
    pub fn by_robot(t: f64, robot: &RobotId, kind: EventKind) -> Self {
        Self {
            t,
            actor: robot.0.clone(),
            robot: Some(robot.clone()),
            kind,
        }
    }

    pub fn by_operator(t: f64, robot: Option<&RobotId>, kind: EventKind) -> Self {
        Self {
            t,
            actor: ACTOR_OPERATOR.to_owned(),
            robot: robot.cloned(),
            kind,
        }
    }

    pub fn by_system(t: f64, robot: Option<&RobotId>, kind: EventKind) -> Self {
        Self {
            t,
            actor: ACTOR_SYSTEM.to_owned(),
            robot: robot.cloned(),
            kind,
        }
    }

    pub fn plan(t: f64, plan: &Plan) -> Self {
        Self::by_robot(
            t,
            &plan.robot_id,
            EventKind::Plan {
                steps: plan
                    .steps
                    .iter()
                    .map(|s| PlanStepLog {
                        poi_id: s.poi_id,
                        raw_utility: s.raw_utility,
                        weighted_utility: s.weighted_utility,
                        depth: s.depth,
                    })
                    .collect(),
                pruned: plan.pruned,
                evaluated: plan.evaluated,
            },
        )
    }

    pub fn is_operator(&self) -> bool {
        self.actor == ACTOR_OPERATOR
    }
}

#[derive(Debug, Error)]
pub enum LogError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
}

pub fn write_jsonl<W: Write>(mut out: W, events: &[MissionEvent]) -> std::io::Result<()> {
    for e in events {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn to_jsonl_bytes(events: &[MissionEvent]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_jsonl(&mut buf, events).expect("writing to a Vec cannot fail");
    buf
}

pub fn read_jsonl<R: BufRead>(input: R) -> Result<Vec<MissionEvent>, LogError> {
    let mut events = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        events.push(
            serde_json::from_str(&line).map_err(|source| LogError::Parse {
                line: i + 1,
                source,
            })?,
        );
    }
    Ok(events)
}

/// Robot roles declared by the log's `mission_start` event.
pub fn roster(events: &[MissionEvent]) -> BTreeMap<RobotId, RobotRole> {
    events
        .iter()
        .find_map(|e| match &e.kind {
            EventKind::MissionStart { robots, .. } => {
                Some(robots.iter().map(|r| (r.id.clone(), r.role)).collect())
            }
            _ => None,
        })
        .unwrap_or_default()
}
