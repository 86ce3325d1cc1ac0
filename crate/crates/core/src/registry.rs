//! System-level POI registry: lifecycle, claim arbitration, attempt and
//! utility bookkeeping.
//!
//! Every mutation goes through [`PoiRegistry::apply`] (or one of the typed
//! helpers that wrap it), is stamped with the registry clock, and is appended to
//! a journal. Replaying the journal into an empty registry reconstructs the
//! exact state. Reads hand out [`PoiSnapshot`]s, which are deep copies and are
//! never affected by later mutations.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Pose2;
use crate::poi::{Poi, PoiId, PoiType, RobotAttempt, RobotId, RobotUtility};

/// Default expiry of broadcast utilities, seconds.
pub const DEFAULT_STALENESS_HORIZON: f64 = 30.0;

/// Who issued a registry command.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    Robot(RobotId),
    Operator,
}

impl Actor {
    pub fn robot(id: impl Into<String>) -> Self {
        Actor::Robot(RobotId::new(id))
    }

    pub fn label(&self) -> &str {
        match self {
            Actor::Robot(r) => r.as_str(),
            Actor::Operator => "operator",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegistryError {
    #[error("unknown POI {0}")]
    UnknownPoi(PoiId),
    #[error("POI {poi} already claimed by {holder}")]
    AlreadyClaimed { poi: PoiId, holder: RobotId },
    #[error("POI {0} is inactive")]
    Inactive(PoiId),
    #[error("POI {0} is already inactive")]
    AlreadyInactive(PoiId),
    #[error("POI {0} is already active")]
    AlreadyActive(PoiId),
    #[error("{robot} does not hold the claim on POI {poi}")]
    NotClaimHolder { poi: PoiId, robot: RobotId },
    #[error("POI {0} is currently claimed")]
    CurrentlyClaimed(PoiId),
    #[error("{actor} may not {action}")]
    NotPermitted { actor: String, action: &'static str },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("mission value must be finite and >= 0, got {0}")]
    InvalidMissionValue(f64),
    #[error("registry clock cannot move backwards ({now} -> {requested})")]
    ClockRegression { now: f64, requested: f64 },
    #[error("attempt stamp {stamp} not after previous attempt by {robot} on POI {poi}")]
    NonMonotonicAttempt {
        poi: PoiId,
        robot: RobotId,
        stamp: f64,
    },
    #[error("journal entry for POI {expected} produced POI {got}")]
    ReplayMismatch { expected: PoiId, got: PoiId },
}

/// Outcome reported when a claimed POI is freed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreeOutcome {
    Success,
    Failed,
}

impl FreeOutcome {
    pub fn is_success(self) -> bool {
        matches!(self, FreeOutcome::Success)
    }
}

/// A serialized registry mutation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum RegistryCommand {
    Create {
        actor: Actor,
        pose: Pose2,
        poi_type: PoiType,
        mission_value: f64,
    },
    Claim {
        poi_id: PoiId,
        robot: RobotId,
    },
    Free {
        poi_id: PoiId,
        robot: RobotId,
        outcome: FreeOutcome,
    },
    Deactivate {
        poi_id: PoiId,
        actor: Actor,
    },
    Reactivate {
        poi_id: PoiId,
    },
    RecordUtility {
        poi_id: PoiId,
        robot: RobotId,
        utility_value: f64,
    },
    Convert {
        poi_id: PoiId,
        actor: Actor,
        new_type: PoiType,
    },
    MovePoi {
        poi_id: PoiId,
        pose: Pose2,
    },
}

impl RegistryCommand {
    pub fn poi_id(&self) -> Option<PoiId> {
        match self {
            RegistryCommand::Create { .. } => None,
            RegistryCommand::Claim { poi_id, .. }
            | RegistryCommand::Free { poi_id, .. }
            | RegistryCommand::Deactivate { poi_id, .. }
            | RegistryCommand::Reactivate { poi_id }
            | RegistryCommand::RecordUtility { poi_id, .. }
            | RegistryCommand::Convert { poi_id, .. }
            | RegistryCommand::MovePoi { poi_id, .. } => Some(*poi_id),
        }
    }
}

/// One journal line: `{"t": .., "poi_id": .., "op": .., fields..}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "serde_json::Value", try_from = "serde_json::Value")]
pub struct JournalEntry {
    pub t: f64,
    pub poi_id: PoiId,
    pub command: RegistryCommand,
}

impl From<JournalEntry> for serde_json::Value {
    fn from(entry: JournalEntry) -> Self {
        let mut obj = serde_json::Map::new();
        obj.insert("t".into(), entry.t.into());
        obj.insert("poi_id".into(), entry.poi_id.0.into());
        if let Ok(serde_json::Value::Object(fields)) = serde_json::to_value(&entry.command) {
            for (k, v) in fields {
                obj.entry(k).or_insert(v);
            }
        }
        serde_json::Value::Object(obj)
    }
}

impl TryFrom<serde_json::Value> for JournalEntry {
    type Error = serde_json::Error;

    fn try_from(mut value: serde_json::Value) -> Result<Self, Self::Error> {
        use serde::de::Error;
        let obj = value
            .as_object_mut()
            .ok_or_else(|| serde_json::Error::custom("journal entry must be an object"))?;
        let t = obj
            .remove("t")
            .and_then(|v| v.as_f64())
            .ok_or_else(|| serde_json::Error::missing_field("t"))?;
        let poi_id = obj
            .get("poi_id")
            .and_then(|v| v.as_u64())
            .map(PoiId)
            .ok_or_else(|| serde_json::Error::missing_field("poi_id"))?;
        let command = serde_json::from_value(value)?;
        Ok(JournalEntry { t, poi_id, command })
    }
}

/// Immutable copy of the active POIs at one registry instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiSnapshot {
    pub taken_at: f64,
    pub pois: Vec<Poi>,
}

impl PoiSnapshot {
    pub fn get(&self, id: PoiId) -> Option<&Poi> {
        self.pois.iter().find(|p| p.id == id)
    }

    pub fn len(&self) -> usize {
        self.pois.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pois.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PoiRegistry {
    pois: BTreeMap<PoiId, Poi>,
    next_id: u64,
    now: f64,
    journal: Vec<JournalEntry>,
}

impl Default for PoiRegistry {
    fn default() -> Self {
        Self::new()
    }
}

impl PoiRegistry {
    pub fn new() -> Self {
        Self {
            pois: BTreeMap::new(),
            next_id: 1,
            now: 0.0,
            journal: Vec::new(),
        }
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    /// Advances the registry clock. Time never moves backwards.
    pub fn set_time(&mut self, t: f64) -> Result<(), RegistryError> {
        if !t.is_finite() {
            return Err(RegistryError::NonFinite("time"));
        }
        if t < self.now {
            return Err(RegistryError::ClockRegression {
                now: self.now,
                requested: t,
            });
        }
        self.now = t;
        Ok(())
    }

    pub fn get(&self, id: PoiId) -> Option<&Poi> {
        self.pois.get(&id)
    }

    /// All POIs including deactivated ones, ordered by id.
    pub fn all(&self) -> impl Iterator<Item = &Poi> {
        self.pois.values()
    }

    pub fn journal(&self) -> &[JournalEntry] {
        &self.journal
    }

    /// Applies one command at the current registry time. On error nothing is
    /// mutated and nothing is journaled.
    pub fn apply(&mut self, command: RegistryCommand) -> Result<&Poi, RegistryError> {
        let id = self.execute(&command)?;
        self.journal.push(JournalEntry {
            t: self.now,
            poi_id: id,
            command,
        });
        Ok(&self.pois[&id])
    }

    fn execute(&mut self, command: &RegistryCommand) -> Result<PoiId, RegistryError> {
        let now = self.now;
        match command {
            RegistryCommand::Create {
                actor,
                pose,
                poi_type,
                mission_value,
            } => {
                if !pose.is_finite() {
                    return Err(RegistryError::NonFinite("pose"));
                }
                if !mission_value.is_finite() || *mission_value < 0.0 {
                    return Err(RegistryError::InvalidMissionValue(*mission_value));
                }
                if matches!(actor, Actor::Robot(_)) && *poi_type != PoiType::RockCandidate {
                    return Err(RegistryError::NotPermitted {
                        actor: actor.label().to_owned(),
                        action: "create POIs other than ROCK_CANDIDATE",
                    });
                }
                let id = PoiId(self.next_id);
                self.next_id += 1;
                self.pois.insert(
                    id,
                    Poi {
                        id,
                        pose: *pose,
                        poi_type: *poi_type,
                        robot: None,
                        active: true,
                        mission_value: *mission_value,
                        robot_attempts: Vec::new(),
                        robot_utilities: Vec::new(),
                    },
                );
                Ok(id)
            }
            RegistryCommand::Claim { poi_id, robot } => {
                let poi = self.lookup_mut(*poi_id)?;
                if !poi.active {
                    return Err(RegistryError::Inactive(*poi_id));
                }
                if let Some(holder) = &poi.robot {
                    return Err(RegistryError::AlreadyClaimed {
                        poi: *poi_id,
                        holder: holder.clone(),
                    });
                }
                poi.robot = Some(robot.clone());
                Ok(*poi_id)
            }
            RegistryCommand::Free {
                poi_id,
                robot,
                outcome,
            } => {
                let poi = self.lookup_mut(*poi_id)?;
                if poi.robot.as_ref() != Some(robot) {
                    return Err(RegistryError::NotClaimHolder {
                        poi: *poi_id,
                        robot: robot.clone(),
                    });
                }
                let last = poi
                    .robot_attempts
                    .iter()
                    .rev()
                    .find(|a| &a.robot == robot)
                    .map(|a| a.stamp);
                if last.is_some_and(|s| s >= now) {
                    return Err(RegistryError::NonMonotonicAttempt {
                        poi: *poi_id,
                        robot: robot.clone(),
                        stamp: now,
                    });
                }
                poi.robot = None;
                poi.robot_attempts.push(RobotAttempt {
                    stamp: now,
                    robot: robot.clone(),
                    success: outcome.is_success(),
                });
                Ok(*poi_id)
            }
            RegistryCommand::Deactivate { poi_id, actor } => {
                let poi = self.lookup_mut(*poi_id)?;
                if !poi.active {
                    return Err(RegistryError::AlreadyInactive(*poi_id));
                }
                if let (Actor::Robot(r), Some(holder)) = (actor, &poi.robot) {
                    if r != holder {
                        return Err(RegistryError::NotClaimHolder {
                            poi: *poi_id,
                            robot: r.clone(),
                        });
                    }
                }
                poi.active = false;
                poi.robot = None;
                Ok(*poi_id)
            }
            RegistryCommand::Reactivate { poi_id } => {
                let poi = self.lookup_mut(*poi_id)?;
                if poi.active {
                    return Err(RegistryError::AlreadyActive(*poi_id));
                }
                poi.active = true;
                Ok(*poi_id)
            }
            RegistryCommand::RecordUtility {
                poi_id,
                robot,
                utility_value,
            } => {
                if !utility_value.is_finite() {
                    return Err(RegistryError::NonFinite("utility"));
                }
                let poi = self.lookup_mut(*poi_id)?;
                let entry = RobotUtility {
                    robot: robot.clone(),
                    utility_value: *utility_value,
                    stamp: now,
                };
                match poi.robot_utilities.iter_mut().find(|u| &u.robot == robot) {
                    Some(existing) => *existing = entry,
                    None => poi.robot_utilities.push(entry),
                }
                Ok(*poi_id)
            }
            RegistryCommand::Convert {
                poi_id,
                actor,
                new_type,
            } => {
                if matches!(actor, Actor::Robot(_)) {
                    return Err(RegistryError::NotPermitted {
                        actor: actor.label().to_owned(),
                        action: "convert POI types",
                    });
                }
                let poi = self.lookup_mut(*poi_id)?;
                if !poi.active {
                    return Err(RegistryError::Inactive(*poi_id));
                }
                if poi.robot.is_some() {
                    return Err(RegistryError::CurrentlyClaimed(*poi_id));
                }
                poi.poi_type = *new_type;
                Ok(*poi_id)
            }
            RegistryCommand::MovePoi { poi_id, pose } => {
                if !pose.is_finite() {
                    return Err(RegistryError::NonFinite("pose"));
                }
                let poi = self.lookup_mut(*poi_id)?;
                if poi.robot.is_some() {
                    return Err(RegistryError::CurrentlyClaimed(*poi_id));
                }
                poi.pose = *pose;
                Ok(*poi_id)
            }
        }
    }

    fn lookup_mut(&mut self, id: PoiId) -> Result<&mut Poi, RegistryError> {
        self.pois.get_mut(&id).ok_or(RegistryError::UnknownPoi(id))
    }

    pub fn create_poi(
        &mut self,
        pose: Pose2,
        poi_type: PoiType,
        mission_value: f64,
    ) -> Result<Poi, RegistryError> {
        self.apply(RegistryCommand::Create {
            actor: Actor::Operator,
            pose,
            poi_type,
            mission_value,
        })
        .cloned()
    }

    /// Robot-originated candidate proposal from target detection.
    pub fn propose_candidate(
        &mut self,
        robot: &RobotId,
        pose: Pose2,
        mission_value: f64,
    ) -> Result<Poi, RegistryError> {
        self.apply(RegistryCommand::Create {
            actor: Actor::Robot(robot.clone()),
            pose,
            poi_type: PoiType::RockCandidate,
            mission_value,
        })
        .cloned()
    }

    pub fn claim_poi(&mut self, poi_id: PoiId, robot: &RobotId) -> Result<Poi, RegistryError> {
        self.apply(RegistryCommand::Claim {
            poi_id,
            robot: robot.clone(),
        })
        .cloned()
    }

    pub fn free_poi(
        &mut self,
        poi_id: PoiId,
        robot: &RobotId,
        outcome: FreeOutcome,
    ) -> Result<Poi, RegistryError> {
        self.apply(RegistryCommand::Free {
            poi_id,
            robot: robot.clone(),
            outcome,
        })
        .cloned()
    }

    pub fn deactivate_poi(&mut self, poi_id: PoiId, actor: Actor) -> Result<Poi, RegistryError> {
        self.apply(RegistryCommand::Deactivate { poi_id, actor })
            .cloned()
    }

    pub fn reactivate_poi(&mut self, poi_id: PoiId) -> Result<Poi, RegistryError> {
        self.apply(RegistryCommand::Reactivate { poi_id }).cloned()
    }

    pub fn record_utility(
        &mut self,
        poi_id: PoiId,
        robot: &RobotId,
        utility_value: f64,
    ) -> Result<(), RegistryError> {
        self.apply(RegistryCommand::RecordUtility {
            poi_id,
            robot: robot.clone(),
            utility_value,
        })
        .map(|_| ())
    }

    pub fn convert_poi(
        &mut self,
        poi_id: PoiId,
        actor: Actor,
        new_type: PoiType,
    ) -> Result<Poi, RegistryError> {
        self.apply(RegistryCommand::Convert {
            poi_id,
            actor,
            new_type,
        })
        .cloned()
    }

    /// Active POIs with utility entries older than `staleness_horizon` removed.
    pub fn list_active(&self, staleness_horizon: f64) -> PoiSnapshot {
        let now = self.now;
        let pois = self
            .pois
            .values()
            .filter(|p| p.active)
            .map(|p| {
                let mut p = p.clone();
                p.robot_utilities
                    .retain(|u| now - u.stamp <= staleness_horizon);
                p
            })
            .collect();
        PoiSnapshot {
            taken_at: now,
            pois,
        }
    }

    /// Highest fresh recorded utility on `poi_id` across all robots.
    pub fn highest_recorded_utility(
        &self,
        poi_id: PoiId,
        staleness_horizon: f64,
    ) -> Option<(RobotId, f64)> {
        let now = self.now;
        self.pois
            .get(&poi_id)?
            .robot_utilities
            .iter()
            .filter(|u| now - u.stamp <= staleness_horizon)
            .fold(None, |best: Option<(RobotId, f64)>, u| match best {
                Some((_, v)) if v >= u.utility_value => best,
                _ => Some((u.robot.clone(), u.utility_value)),
            })
    }

    /// Rebuilds a registry by re-applying journal entries in order.
    pub fn replay<'a>(
        entries: impl IntoIterator<Item = &'a JournalEntry>,
    ) -> Result<Self, RegistryError> {
        let mut reg = PoiRegistry::new();
        for entry in entries {
            reg.set_time(entry.t)?;
            let id = reg.execute(&entry.command)?;
            if id != entry.poi_id {
                return Err(RegistryError::ReplayMismatch {
                    expected: entry.poi_id,
                    got: id,
                });
            }
            reg.journal.push(entry.clone());
        }
        Ok(reg)
    }

    pub fn write_journal<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for entry in &self.journal {
            serde_json::to_writer(&mut out, entry)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn read_journal<R: BufRead>(input: R) -> std::io::Result<Vec<JournalEntry>> {
        let mut entries = Vec::new();
        for line in input.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            entries.push(serde_json::from_str(&line).map_err(std::io::Error::other)?);
        }
        Ok(entries)
    }
}
