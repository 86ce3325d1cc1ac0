//! Scenario files: terrain, robots, targets, initial POIs and every tunable
//! of the simulated mission. Serialized as JSON; every section except the
//! robots, targets and terrain has defaults.

use std::collections::{BTreeMap, BTreeSet};

use mosaic_core::comms::LinkConfig;
use mosaic_core::events::{RobotRole, RosterEntry, TargetKind};
use mosaic_core::kpi::TargetRef;
use mosaic_core::planner::{MotionProfile, PlannerConfig};
use mosaic_core::utility::{BatteryModel, FeatureWeights, PerType};
use mosaic_core::{PoiType, Point2, Pose2, RobotId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coverage::{DEFAULT_COVERAGE_CELL, DEFAULT_SENSING_RADIUS};
use crate::terrain::{Cell, Mobility, Terrain, TerrainError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Terrain(#[from] TerrainError),
}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    /// Default mission length, s.
    #[serde(default = "defaults::duration")]
    pub duration: f64,
    pub terrain: TerrainSpec,
    #[serde(default = "defaults::coverage_cell")]
    pub coverage_cell: f64,
    /// Common start area; also the base-station position for link distances.
    pub lander: Point2,
    pub robots: Vec<RobotSpec>,
    pub targets: Vec<TargetSpec>,
    #[serde(default)]
    pub pois: Vec<PoiSpec>,
    #[serde(default)]
    pub planner: PlannerConfig,
    #[serde(default)]
    pub executor: ExecutorConfig,
    #[serde(default)]
    pub instrument: InstrumentConfig,
    #[serde(default)]
    pub operator: OperatorConfig,
    #[serde(default)]
    pub comms: CommsConfig,
    /// End the mission once no robot has anything left to do.
    #[serde(default = "defaults::stop_when_exhausted")]
    pub stop_when_exhausted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerrainSpec {
    #[serde(default)]
    pub origin: Point2,
    pub cell_size: f64,
    #[serde(default)]
    pub corner_cutting: bool,
    pub layout: TerrainLayout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TerrainLayout {
    /// `.` flat, `~` rough, `#` blocked; first row is y = 0.
    Rows { rows: Vec<String> },
    /// Seeded rough patches and boulders over a flat area.
    Procedural {
        width: f64,
        height: f64,
        seed: u64,
        rough_patches: usize,
        boulders: usize,
        /// Discs forced flat, e.g. around the lander.
        #[serde(default)]
        keep_clear: Vec<(Point2, f64)>,
    },
}

impl TerrainSpec {
    pub fn build(&self) -> Result<Terrain, ScenarioError> {
        let terrain = match &self.layout {
            TerrainLayout::Rows { rows } => Terrain::from_rows(self.origin, self.cell_size, rows)?,
            TerrainLayout::Procedural {
                width,
                height,
                seed,
                rough_patches,
                boulders,
                keep_clear,
            } => {
                let nx = (width / self.cell_size).ceil() as usize;
                let ny = (height / self.cell_size).ceil() as usize;
                let mut t = Terrain::new(self.origin, nx, ny, self.cell_size)?;
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let paint = |t: &mut Terrain, c: Point2, r: f64, cell: Cell| {
                    for y in 0..ny {
                        for x in 0..nx {
                            if t.center(x, y).distance(&c) <= r {
                                t.set(x, y, cell);
                            }
                        }
                    }
                };
                let random_point = |rng: &mut ChaCha8Rng| {
                    Point2::new(
                        self.origin.x + rng.random_range(0.0..*width),
                        self.origin.y + rng.random_range(0.0..*height),
                    )
                };
                for _ in 0..*rough_patches {
                    let c = random_point(&mut rng);
                    let r = rng.random_range(3.0..6.0);
                    paint(&mut t, c, r, Cell::Rough);
                }
                for _ in 0..*boulders {
                    let c = random_point(&mut rng);
                    let r = rng.random_range(0.5..1.5);
                    paint(&mut t, c, r, Cell::Blocked);
                }
                for (c, r) in keep_clear {
                    paint(&mut t, *c, *r, Cell::Flat);
                }
                t
            }
        };
        Ok(terrain.with_corner_cutting(self.corner_cutting))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotSpec {
    pub id: RobotId,
    pub role: RobotRole,
    pub mobility: Mobility,
    pub start: Pose2,
    /// m/s
    pub cruise_speed: f64,
    #[serde(default = "defaults::battery_capacity")]
    pub battery_capacity: f64,
    #[serde(default)]
    pub battery: BatteryModel,
    #[serde(default = "defaults::sensing_radius")]
    pub sensing_radius: f64,
    /// Whether this robot proposes targets it senses.
    #[serde(default)]
    pub detection: bool,
    pub weights: FeatureWeights,
    /// Dwell per quarter turn while exploring, s.
    #[serde(default = "defaults::rotation_dwell")]
    pub rotation_dwell: f64,
    /// Time at the POI after arrival, s.
    #[serde(default = "defaults::task_duration")]
    pub task_duration: PerType<f64>,
    /// Standard deviation of the per-axis arrival error, m.
    #[serde(default = "defaults::nav_noise")]
    pub nav_noise: f64,
    /// Whether measurements wait for an operator-refined target point.
    #[serde(default)]
    pub refine_targets: bool,
    /// Simulated time at which the robot is lost.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fail_at: Option<f64>,
}

impl RobotSpec {
    pub fn motion(&self) -> MotionProfile {
        MotionProfile {
            cruise_speed: self.cruise_speed,
            rotation_dwell: self.rotation_dwell,
            task_duration: self.task_duration,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub id: u64,
    pub kind: TargetKind,
    pub position: Point2,
    /// Probability of detection per sensing pass in range.
    pub detectability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiSpec {
    pub pose: Pose2,
    pub poi_type: PoiType,
    #[serde(default = "defaults::mission_value")]
    pub mission_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecutorConfig {
    /// Position tolerance for MOVE, EXPLORATION and ROCK_CANDIDATE arrival, m.
    pub arrival_tolerance: f64,
    /// Re-plan interval while idle with an empty plan, s.
    pub idle_poll: f64,
    /// Longest wait for a claim reply before giving up, s.
    pub claim_timeout: f64,
    /// Interval between sensing passes while moving, s.
    pub sense_interval: f64,
    /// A robot planning or stuck longer than this trips the watchdog, s.
    pub watchdog: f64,
    /// Fixed compute time of one planning cycle, s.
    pub planning_base: f64,
    /// Compute time per detailed utility evaluation, s.
    pub planning_per_eval: f64,
}

impl Default for ExecutorConfig {
    fn default() -> Self {
        Self {
            arrival_tolerance: 0.3,
            idle_poll: 5.0,
            claim_timeout: 60.0,
            sense_interval: 1.0,
            watchdog: 60.0,
            planning_base: 0.5,
            planning_per_eval: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InstrumentConfig {
    pub p_ground: f64,
    pub p_rock: f64,
    /// Largest position error at which a measurement can succeed, m.
    pub tolerance: f64,
    /// Arm reach, m.
    pub reach: f64,
    /// Distance ahead of the robot that the image centre maps to, m.
    pub standoff: f64,
    /// Ground extent covered by the full image width and height, m.
    pub image_span: f64,
    /// Data product synced after a successful rock measurement, bytes.
    pub rock_product_bytes: u64,
    /// Data product synced after a successful ground measurement, bytes.
    pub ground_product_bytes: u64,
}

impl Default for InstrumentConfig {
    fn default() -> Self {
        Self {
            p_ground: 0.9,
            p_rock: 0.8,
            tolerance: 0.3,
            reach: 0.9,
            standoff: 0.7,
            image_span: 1.2,
            rock_product_bytes: 10_000_000,
            ground_product_bytes: 2_000_000,
        }
    }
}

impl InstrumentConfig {
    pub fn success_probability(&self, poi_type: PoiType) -> f64 {
        match poi_type {
            PoiType::RockMeasurement => self.p_rock,
            _ => self.p_ground,
        }
    }

    pub fn product_bytes(&self, poi_type: PoiType) -> u64 {
        match poi_type {
            PoiType::RockMeasurement => self.rock_product_bytes,
            _ => self.ground_product_bytes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorMode {
    /// Decisions are taken by the built-in policy.
    Auto,
    /// Decisions wait for console commands, with timeouts.
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OperatorConfig {
    pub mode: OperatorMode,
    /// Probability that the policy confirms a rock candidate.
    pub confirm_probability: f64,
    /// Policy reaction time for candidate confirmation, s.
    pub confirm_delay: f64,
    /// Time after which an unanswered confirmation fails the task, s.
    pub confirm_timeout: f64,
    /// Policy reaction time for measurement target selection, s.
    pub target_delay: f64,
    /// Time after which an unanswered target request is auto-selected, s.
    pub target_timeout: f64,
    /// Policy reaction time for creating a measurement POI on a detected sand patch, s.
    pub sand_delay: f64,
    /// Operator time spent on each failed task, s.
    pub troubleshoot_time: f64,
}

impl Default for OperatorConfig {
    fn default() -> Self {
        Self {
            mode: OperatorMode::Auto,
            confirm_probability: 0.7,
            confirm_delay: 10.0,
            confirm_timeout: 60.0,
            target_delay: 2.0,
            target_timeout: 60.0,
            sand_delay: 15.0,
            troubleshoot_time: 30.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CommsConfig {
    /// Link model for every robot without an override.
    pub link: LinkConfig,
    pub links: BTreeMap<RobotId, LinkConfig>,
    /// Robot status publishing period, s.
    pub status_period: f64,
    /// Silence after which mission control declares a robot lost, s.
    pub liveness_timeout: f64,
    /// Out-of-band sync bandwidth, bytes/s.
    pub sync_bandwidth: f64,
}

impl Default for CommsConfig {
    fn default() -> Self {
        Self {
            link: LinkConfig::default(),
            links: BTreeMap::new(),
            status_period: 0.5,
            liveness_timeout: 30.0,
            sync_bandwidth: 2_000_000.0,
        }
    }
}

impl CommsConfig {
    pub fn link_for(&self, robot: &RobotId) -> &LinkConfig {
        self.links.get(robot).unwrap_or(&self.link)
    }
}

mod defaults {
    use super::*;

    pub fn stop_when_exhausted() -> bool {
        true
    }

    pub fn duration() -> f64 {
        2400.0
    }
    pub fn coverage_cell() -> f64 {
        DEFAULT_COVERAGE_CELL
    }
    pub fn battery_capacity() -> f64 {
        100.0
    }
    pub fn sensing_radius() -> f64 {
        DEFAULT_SENSING_RADIUS
    }
    pub fn rotation_dwell() -> f64 {
        5.0
    }
    pub fn task_duration() -> PerType<f64> {
        MotionProfile::new(1.0).task_duration
    }
    pub fn nav_noise() -> f64 {
        0.1
    }
    pub fn mission_value() -> f64 {
        1.0
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn roster(&self) -> Vec<RosterEntry> {
        self.robots
            .iter()
            .map(|r| RosterEntry {
                id: r.id.clone(),
                role: r.role,
            })
            .collect()
    }

    pub fn target_refs(&self) -> Vec<TargetRef> {
        self.targets
            .iter()
            .map(|t| TargetRef {
                id: t.id,
                kind: t.kind,
            })
            .collect()
    }

    pub fn robot(&self, id: &RobotId) -> Option<&RobotSpec> {
        self.robots.iter().find(|r| &r.id == id)
    }

    /// Schedules the loss of `robot` at time `at`.
    pub fn with_failure(mut self, robot: &str, at: f64) -> Self {
        if let Some(r) = self.robots.iter_mut().find(|r| r.id.as_str() == robot) {
            r.fail_at = Some(at);
        }
        self
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let terrain = self.terrain.build()?;
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(invalid("duration must be positive"));
        }
        if !(self.coverage_cell.is_finite() && self.coverage_cell > 0.0) {
            return Err(invalid("coverage_cell must be positive"));
        }
        if self.robots.is_empty() {
            return Err(invalid("at least one robot is required"));
        }
        self.planner
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        let mut ids = BTreeSet::new();
        for r in &self.robots {
            if r.id.as_str().is_empty() || r.id.as_str() == mosaic_core::events::ACTOR_OPERATOR {
                return Err(invalid(format!("robot id {:?} is reserved", r.id.as_str())));
            }
            if !ids.insert(&r.id) {
                return Err(invalid(format!("duplicate robot id {}", r.id)));
            }
            if !(r.cruise_speed.is_finite() && r.cruise_speed > 0.0) {
                return Err(invalid(format!("{}: cruise_speed must be positive", r.id)));
            }
            if !(r.battery_capacity.is_finite() && r.battery_capacity >= 0.0) {
                return Err(invalid(format!("{}: battery_capacity must be >= 0", r.id)));
            }
            if !(r.sensing_radius.is_finite() && r.sensing_radius >= 0.0 && r.nav_noise >= 0.0) {
                return Err(invalid(format!(
                    "{}: sensing_radius and nav_noise must be >= 0",
                    r.id
                )));
            }
            r.weights
                .validate()
                .map_err(|e| invalid(format!("{}: {e}", r.id)))?;
            if !terrain.traversable_at(r.start.position(), r.mobility) {
                return Err(invalid(format!("{}: start pose is not traversable", r.id)));
            }
            self.comms
                .link_for(&r.id)
                .validate()
                .map_err(|e| invalid(format!("{}: {e}", r.id)))?;
        }
        let mut target_ids = BTreeSet::new();
        for t in &self.targets {
            if !target_ids.insert(t.id) {
                return Err(invalid(format!("duplicate target id {}", t.id)));
            }
            if !terrain.contains(t.position) {
                return Err(invalid(format!("target {} lies outside the terrain", t.id)));
            }
            if !(0.0..=1.0).contains(&t.detectability) {
                return Err(invalid(format!(
                    "target {}: detectability must lie in [0, 1]",
                    t.id
                )));
            }
        }
        for p in &self.pois {
            if !p.pose.is_finite() || !terrain.contains(p.pose.position()) {
                return Err(invalid("initial POI outside the terrain"));
            }
            if !(p.mission_value.is_finite() && p.mission_value >= 0.0) {
                return Err(invalid("initial POI mission_value must be >= 0"));
            }
        }
        Ok(())
    }

    /// The default field layout: a 60 m x 40 m area with rough patches and
    /// boulders, 26 rocks and 6 sand patches, three legged scouts and two
    /// scientists (one legged, one wheeled) deployed from a common lander.
    pub fn field_default() -> Self {
        let lander = Point2::new(4.0, 20.0);
        let terrain = TerrainSpec {
            origin: Point2::new(0.0, 0.0),
            cell_size: 1.0,
            corner_cutting: false,
            layout: TerrainLayout::Procedural {
                width: 60.0,
                height: 40.0,
                seed: 7,
                rough_patches: 5,
                boulders: 12,
                keep_clear: vec![(lander, 6.0)],
            },
        };
        let grid = terrain.build().expect("default terrain builds");

        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut targets: Vec<TargetSpec> = Vec::new();
        let mut place =
            |kind: TargetKind, count: usize, detectability: f64, targets: &mut Vec<TargetSpec>| {
                let mut placed = 0;
                while placed < count {
                    let p = Point2::new(rng.random_range(8.0..58.0), rng.random_range(2.0..38.0));
                    let ok_cell = match kind {
                        TargetKind::Rock => grid.traversable_at(p, Mobility::Legged),
                        TargetKind::SandPatch => grid.traversable_at(p, Mobility::Wheeled),
                    };
                    if !ok_cell || targets.iter().any(|t| t.position.distance(&p) < 2.5) {
                        continue;
                    }
                    targets.push(TargetSpec {
                        id: targets.len() as u64 + 1,
                        kind,
                        position: p,
                        detectability,
                    });
                    placed += 1;
                }
            };
        place(TargetKind::Rock, 26, 0.6, &mut targets);
        place(TargetKind::SandPatch, 6, 0.8, &mut targets);

        let mut pois = Vec::new();
        for x in [10.0, 20.0, 30.0, 40.0, 50.0] {
            for y in [8.0, 20.0, 32.0] {
                let p = nearest_flat(&grid, Point2::new(x, y));
                pois.push(PoiSpec {
                    pose: Pose2::new(p.x, p.y, 0.0),
                    poi_type: PoiType::Exploration,
                    mission_value: 1.0,
                    target_id: None,
                });
            }
        }

        let scout = |id: &str, y: f64, speed: f64| RobotSpec {
            id: RobotId::new(id),
            role: RobotRole::Scout,
            mobility: Mobility::Legged,
            start: Pose2::new(lander.x - 1.0, y, 0.0),
            cruise_speed: speed,
            battery_capacity: defaults::battery_capacity(),
            battery: BatteryModel::default(),
            sensing_radius: DEFAULT_SENSING_RADIUS,
            detection: true,
            weights: FeatureWeights::default_scout(),
            rotation_dwell: defaults::rotation_dwell(),
            task_duration: defaults::task_duration(),
            nav_noise: defaults::nav_noise(),
            refine_targets: false,
            fail_at: None,
        };
        let husky_battery = BatteryModel {
            c_move: 0.03,
            ..BatteryModel::default()
        };
        let robots = vec![
            scout("dodo", 18.0, 0.8),
            scout("dilly", 20.0, 0.8),
            scout("spot", 22.0, 1.0),
            RobotSpec {
                id: RobotId::new("donkey"),
                role: RobotRole::Scientist,
                start: Pose2::new(lander.x + 1.0, 19.0, 0.0),
                cruise_speed: 0.7,
                detection: false,
                weights: FeatureWeights::default_scientist(),
                refine_targets: true,
                ..scout("donkey", 0.0, 0.7)
            },
            RobotSpec {
                id: RobotId::new("husky"),
                role: RobotRole::Scientist,
                mobility: Mobility::Wheeled,
                start: Pose2::new(lander.x + 1.0, 21.0, 0.0),
                cruise_speed: 0.6,
                battery: husky_battery,
                detection: false,
                weights: FeatureWeights::default_scientist(),
                nav_noise: 0.15,
                ..scout("husky", 0.0, 0.6)
            },
        ];

        Scenario {
            name: "field-default".to_owned(),
            duration: defaults::duration(),
            terrain,
            coverage_cell: DEFAULT_COVERAGE_CELL,
            lander,
            robots,
            targets,
            pois,
            planner: PlannerConfig::default(),
            executor: ExecutorConfig::default(),
            instrument: InstrumentConfig::default(),
            operator: OperatorConfig::default(),
            comms: CommsConfig::default(),
            stop_when_exhausted: true,
        }
    }
}

/// Centre of the flat cell closest to `p`.
fn nearest_flat(t: &Terrain, p: Point2) -> Point2 {
    let mut best: Option<(f64, Point2)> = None;
    for y in 0..t.height() {
        for x in 0..t.width() {
            if t.get(x, y) != Cell::Flat {
                continue;
            }
            let c = t.center(x, y);
            let d = c.distance(&p);
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, c));
            }
        }
    }
    best.map(|(_, c)| c).unwrap_or(p)
}
