//! The POI data structure shared by mission control and every robot.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::geometry::Pose2;

/// Registry-assigned POI identifier. Ids start at 1 and are never reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PoiId(pub u64);

impl fmt::Display for PoiId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Robot identifier, e.g. `"scout-1"`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RobotId(pub String);

impl RobotId {
    pub fn new(id: impl Into<String>) -> Self {
        Self(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RobotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for RobotId {
    fn from(s: &str) -> Self {
        Self(s.to_owned())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PoiType {
    Move,
    Exploration,
    RockCandidate,
    GroundMeasurement,
    RockMeasurement,
}

impl PoiType {
    pub const ALL: [PoiType; 5] = [
        PoiType::Move,
        PoiType::Exploration,
        PoiType::RockCandidate,
        PoiType::GroundMeasurement,
        PoiType::RockMeasurement,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            PoiType::Move => "MOVE",
            PoiType::Exploration => "EXPLORATION",
            PoiType::RockCandidate => "ROCK_CANDIDATE",
            PoiType::GroundMeasurement => "GROUND_MEASUREMENT",
            PoiType::RockMeasurement => "ROCK_MEASUREMENT",
        }
    }

    pub fn is_measurement(&self) -> bool {
        matches!(self, PoiType::GroundMeasurement | PoiType::RockMeasurement)
    }

    pub(crate) fn index(&self) -> usize {
        *self as usize
    }
}

impl fmt::Display for PoiType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for PoiType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PoiType::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown POI type `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotAttempt {
    pub stamp: f64,
    pub robot: RobotId,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotUtility {
    pub robot: RobotId,
    pub utility_value: f64,
    pub stamp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Poi {
    pub id: PoiId,
    pub pose: Pose2,
    pub poi_type: PoiType,
    /// Current claim holder, `None` when unassigned.
    pub robot: Option<RobotId>,
    pub active: bool,
    pub mission_value: f64,
    pub robot_attempts: Vec<RobotAttempt>,
    pub robot_utilities: Vec<RobotUtility>,
}

impl Poi {
    pub fn is_claimable(&self) -> bool {
        self.active && self.robot.is_none()
    }

    /// Failed attempts recorded for `robot` on this POI.
    pub fn failed_attempts_by(&self, robot: &RobotId) -> usize {
        self.robot_attempts
            .iter()
            .filter(|a| &a.robot == robot && !a.success)
            .count()
    }

    /// Highest recorded utility from any robot other than `robot` that is no
    /// older than `horizon` seconds at time `now`.
    pub fn highest_other_utility(&self, robot: &RobotId, now: f64, horizon: f64) -> Option<f64> {
        self.robot_utilities
            .iter()
            .filter(|u| &u.robot != robot && now - u.stamp <= horizon)
            .map(|u| u.utility_value)
            .fold(None, |acc, v| Some(acc.map_or(v, |a: f64| a.max(v))))
    }
}
