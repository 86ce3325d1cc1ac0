//! Robot-local iterative multi-step greedy POI allocation.
//!
//! At each depth the planner scores every remaining candidate with the cheap
//! utility estimate, drops the ones that cannot win, runs the detailed
//! evaluation on the survivors, discounts by `duf^depth` and picks the best
//! candidate that beats every other robot's fresh recorded utility. The
//! predicted robot state then advances to the chosen POI and the next depth
//! plans from there. Only step 0 is executed; the remaining steps are shared
//! through the recorded utilities.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::poi::{Poi, PoiId, PoiType, RobotId};
use crate::registry::DEFAULT_STALENESS_HORIZON;
use crate::utility::{
    battery_cost, BatteryModel, FeatureWeights, PathOracle, PerType, RobotStateEstimate,
    UtilityEngine,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlannerError {
    #[error("planning depth must be >= 1")]
    InvalidDepth,
    #[error("depth uncertainty factor must lie in (0, 1], got {0}")]
    InvalidDuf(f64),
    #[error("staleness horizon must be finite and >= 0")]
    InvalidHorizon,
    #[error("no path to POI {0}")]
    NoPath(PoiId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub planning_depth: usize,
    /// Depth uncertainty factor.
    pub duf: f64,
    pub staleness_horizon: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            planning_depth: 3,
            duf: 0.9,
            staleness_horizon: DEFAULT_STALENESS_HORIZON,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlannerError> {
        if self.planning_depth == 0 {
            return Err(PlannerError::InvalidDepth);
        }
        if !(self.duf > 0.0 && self.duf <= 1.0) {
            return Err(PlannerError::InvalidDuf(self.duf));
        }
        if !self.staleness_horizon.is_finite() || self.staleness_horizon < 0.0 {
            return Err(PlannerError::InvalidHorizon);
        }
        Ok(())
    }
}

/// Kinematic and task-time parameters used for state prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotionProfile {
    /// m/s
    pub cruise_speed: f64,
    /// Dwell per quarter turn during exploration, s.
    pub rotation_dwell: f64,
    /// Expected task duration at the POI, s, excluding exploration rotations.
    pub task_duration: PerType<f64>,
}

impl MotionProfile {
    pub fn new(cruise_speed: f64) -> Self {
        let mut task_duration = PerType::uniform(0.0);
        task_duration.set(PoiType::RockCandidate, 2.0);
        task_duration.set(PoiType::GroundMeasurement, 60.0);
        task_duration.set(PoiType::RockMeasurement, 120.0);
        Self {
            cruise_speed,
            rotation_dwell: 5.0,
            task_duration,
        }
    }

    /// Time spent at the POI once arrived.
    pub fn time_at_poi(&self, poi_type: PoiType) -> f64 {
        let rotations = if poi_type == PoiType::Exploration {
            4.0 * self.rotation_dwell
        } else {
            0.0
        };
        self.task_duration.get(poi_type) + rotations
    }
}

/// Everything robot-specific the planner needs besides the world state.
#[derive(Debug, Clone, Copy)]
pub struct RobotPlanningModel<'a> {
    pub robot: &'a RobotId,
    pub weights: &'a FeatureWeights,
    pub battery: &'a BatteryModel,
    pub motion: &'a MotionProfile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub poi_id: PoiId,
    pub raw_utility: f64,
    pub weighted_utility: f64,
    pub predicted_state_after: RobotStateEstimate,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub robot_id: RobotId,
    pub steps: Vec<PlanStep>,
    pub created_at: f64,
    /// Candidates discarded by the upper-bound filter, summed over depths.
    pub pruned: usize,
    /// Detailed evaluations performed, summed over depths.
    pub evaluated: usize,
}

impl Plan {
    pub fn first(&self) -> Option<&PlanStep> {
        self.steps.first()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn poi_sequence(&self) -> Vec<PoiId> {
        self.steps.iter().map(|s| s.poi_id).collect()
    }
}

/// `utility * duf^depth`.
pub fn depth_weighted(utility: f64, duf: f64, depth: usize) -> f64 {
    utility * duf.powi(depth as i32)
}

/// Predicted state after travelling to `poi` and completing it.
pub fn predict_next_state(
    state: &RobotStateEstimate,
    poi: &Poi,
    nav: &dyn PathOracle,
    battery: &BatteryModel,
    motion: &MotionProfile,
) -> Result<RobotStateEstimate, PlannerError> {
    let target = poi.pose.position();
    let d_nav = nav
        .path_length(state.position, target)
        .ok_or(PlannerError::NoPath(poi.id))?
        .max(state.position.distance(&target));
    Ok(advance_state(state, poi, d_nav, battery, motion))
}

fn advance_state(
    state: &RobotStateEstimate,
    poi: &Poi,
    path_length: f64,
    battery: &BatteryModel,
    motion: &MotionProfile,
) -> RobotStateEstimate {
    RobotStateEstimate {
        position: poi.pose.position(),
        battery_remaining: (state.battery_remaining
            - battery_cost(poi.poi_type, path_length, battery))
        .max(0.0),
        time: state.time + path_length / motion.cruise_speed + motion.time_at_poi(poi.poi_type),
    }
}

/// Builds a plan over the unclaimed POIs in `candidates`.
///
/// `now` is the time against which other robots' recorded utilities are
/// checked for staleness. Returns an empty plan when no candidate survives.
pub fn plan(
    model: RobotPlanningModel<'_>,
    start: RobotStateEstimate,
    candidates: &[Poi],
    config: &PlannerConfig,
    nav: &dyn PathOracle,
    now: f64,
) -> Plan {
    plan_with_engine(
        &UtilityEngine::default(),
        model,
        start,
        candidates,
        config,
        nav,
        now,
    )
}

pub fn plan_with_engine(
    engine: &UtilityEngine,
    model: RobotPlanningModel<'_>,
    start: RobotStateEstimate,
    candidates: &[Poi],
    config: &PlannerConfig,
    nav: &dyn PathOracle,
    now: f64,
) -> Plan {
    let mut remaining: Vec<&Poi> = candidates.iter().filter(|p| p.is_claimable()).collect();
    remaining.sort_by_key(|p| p.id);

    let mut state = start;
    let mut steps = Vec::new();
    let (mut pruned, mut evaluated) = (0, 0);

    for depth in 0..config.planning_depth {
        let factor = config.duf.powi(depth as i32);
        // (weighted, raw, index, path length)
        let mut best: Option<(f64, f64, usize, f64)> = None;

        for (idx, poi) in remaining.iter().enumerate() {
            let estimate = engine.estimate(model.robot, &state, poi, model.weights, model.battery);
            if !estimate.feasible || estimate.total <= 0.0 {
                pruned += 1;
                continue;
            }
            let rival = poi.highest_other_utility(model.robot, now, config.staleness_horizon);
            // The detailed weighted value never exceeds the weighted estimate,
            // so a rival at or above it can never be strictly beaten.
            if rival.is_some_and(|r| r >= estimate.total * factor) {
                pruned += 1;
                continue;
            }

            let detail =
                engine.detailed(model.robot, &state, poi, model.weights, nav, model.battery);
            evaluated += 1;
            if !detail.feasible {
                continue;
            }
            let weighted = depth_weighted(detail.total, config.duf, depth);
            if weighted <= 0.0 || rival.is_some_and(|r| r >= weighted) {
                continue;
            }
            // candidates are visited in ascending id, so strict > keeps the lower id on ties
            if best.is_none_or(|(w, ..)| weighted > w) {
                let path = detail.path_length.unwrap_or(0.0);
                best = Some((weighted, detail.total, idx, path));
            }
        }

        let Some((weighted, raw, idx, path_length)) = best else {
            break;
        };
        let poi = remaining.remove(idx);
        state = advance_state(&state, poi, path_length, model.battery, model.motion);
        steps.push(PlanStep {
            poi_id: poi.id,
            raw_utility: raw,
            weighted_utility: weighted,
            predicted_state_after: state,
            depth,
        });
    }

    Plan {
        robot_id: model.robot.clone(),
        steps,
        created_at: start.time,
        pruned,
        evaluated,
    }
}

/// Events that may cause the executive to plan again.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplanEvent {
    ClaimFailed,
    PoiListChanged,
    TaskDone,
    UtilityStale,
}

/// Whether `event` warrants a new plan. An executing robot keeps its task
/// unless the event ended or invalidated it.
pub fn replan_trigger(event: ReplanEvent, executing: bool) -> bool {
    match event {
        ReplanEvent::ClaimFailed | ReplanEvent::TaskDone => true,
        ReplanEvent::PoiListChanged | ReplanEvent::UtilityStale => !executing,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Point2, Pose2};
    use crate::poi::RobotUtility;
    use crate::utility::StraightLine;

    fn poi(id: u64, x: f64, y: f64, t: PoiType) -> Poi {
        Poi {
            id: PoiId(id),
            pose: Pose2::new(x, y, 0.0),
            poi_type: t,
            robot: None,
            active: true,
            mission_value: 1.0,
            robot_attempts: vec![],
            robot_utilities: vec![],
        }
    }

    fn free_battery() -> BatteryModel {
        BatteryModel {
            c_move: 0.0,
            c_task: PerType::uniform(0.0),
        }
    }

    fn origin_state() -> RobotStateEstimate {
        RobotStateEstimate {
            position: Point2::new(0.0, 0.0),
            battery_remaining: 100.0,
            time: 0.0,
        }
    }

    fn simple_weights() -> FeatureWeights {
        let mut w = FeatureWeights::default_scout();
        w.euclidean = 1.0;
        w.navigation = 0.0;
        w.battery = 0.0;
        w.type_rewards.set(PoiType::Exploration, 10.0);
        w
    }

    #[test]
    fn nearer_poi_wins() {
        let robot = RobotId::new("scout-1");
        let weights = simple_weights();
        let battery = free_battery();
        let motion = MotionProfile::new(1.0);
        let model = RobotPlanningModel {
            robot: &robot,
            weights: &weights,
            battery: &battery,
            motion: &motion,
        };
        let pois = vec![
            poi(1, 5.0, 0.0, PoiType::Exploration),
            poi(2, 0.0, 0.0, PoiType::Exploration),
        ];
        let cfg = PlannerConfig {
            planning_depth: 1,
            ..Default::default()
        };
        let p = plan(model, origin_state(), &pois, &cfg, &StraightLine, 0.0);
        assert_eq!(p.poi_sequence(), vec![PoiId(2)]);
        assert_eq!(p.steps[0].raw_utility, 10.0);
    }

    #[test]
    fn depth_weighting_applies_duf() {
        assert_eq!(depth_weighted(8.0, 0.9, 0), 8.0);
        assert!((depth_weighted(6.0, 0.9, 1) - 5.4).abs() < 1e-12);

        // Raw step utilities 8 then 6: POI 1 at the origin (10 - 2 penalty),
        // POI 2 two metres further (10 - 4 at depth 1 seen from POI 1).
        let robot = RobotId::new("scout-1");
        let mut weights = simple_weights();
        weights.euclidean = 1.0;
        let battery = free_battery();
        let motion = MotionProfile::new(1.0);
        let model = RobotPlanningModel {
            robot: &robot,
            weights: &weights,
            battery: &battery,
            motion: &motion,
        };
        let pois = vec![
            poi(1, 2.0, 0.0, PoiType::Exploration),
            poi(2, 6.0, 0.0, PoiType::Exploration),
        ];
        let cfg = PlannerConfig {
            planning_depth: 2,
            duf: 0.9,
            ..Default::default()
        };
        let p = plan(model, origin_state(), &pois, &cfg, &StraightLine, 0.0);
        let raw: Vec<_> = p.steps.iter().map(|s| s.raw_utility).collect();
        let weighted: Vec<_> = p.steps.iter().map(|s| s.weighted_utility).collect();
        assert_eq!(raw, vec![8.0, 6.0]);
        assert_eq!(weighted[0], 8.0);
        assert!((weighted[1] - 5.4).abs() < 1e-12);
    }

    #[test]
    fn predicted_states_chain() {
        let robot = RobotId::new("scout-1");
        let weights = FeatureWeights::default_scout();
        let battery = BatteryModel::default();
        let motion = MotionProfile::new(0.5);
        let model = RobotPlanningModel {
            robot: &robot,
            weights: &weights,
            battery: &battery,
            motion: &motion,
        };
        let pois: Vec<_> = (1..=5)
            .map(|i| poi(i, i as f64 * 3.0, 1.0, PoiType::Exploration))
            .collect();
        let p = plan(
            model,
            origin_state(),
            &pois,
            &PlannerConfig::default(),
            &StraightLine,
            0.0,
        );
        assert_eq!(p.steps.len(), 3);
        let mut state = origin_state();
        for step in &p.steps {
            let target = pois.iter().find(|q| q.id == step.poi_id).unwrap();
            let next =
                predict_next_state(&state, target, &StraightLine, &battery, &motion).unwrap();
            assert_eq!(next, step.predicted_state_after);
            assert!(next.time >= state.time);
            state = next;
        }
    }

    #[test]
    fn rival_utility_blocks_candidate() {
        let robot = RobotId::new("scout-1");
        let weights = simple_weights();
        let battery = free_battery();
        let motion = MotionProfile::new(1.0);
        let model = RobotPlanningModel {
            robot: &robot,
            weights: &weights,
            battery: &battery,
            motion: &motion,
        };
        let mut contested = poi(1, 0.0, 0.0, PoiType::Exploration);
        contested.robot_utilities.push(RobotUtility {
            robot: RobotId::new("scout-2"),
            utility_value: 11.0,
            stamp: 0.0,
        });
        let pois = vec![contested.clone(), poi(2, 3.0, 0.0, PoiType::Exploration)];
        let cfg = PlannerConfig::default();
        let p = plan(model, origin_state(), &pois, &cfg, &StraightLine, 0.0);
        assert_eq!(p.first().unwrap().poi_id, PoiId(2));
        assert!(!p.poi_sequence().contains(&PoiId(1)));

        // stale rival entries no longer block
        let p = plan(model, origin_state(), &pois, &cfg, &StraightLine, 31.0);
        assert_eq!(p.first().unwrap().poi_id, PoiId(1));

        // the robot's own entry never blocks itself
        contested.robot_utilities[0].robot = robot.clone();
        let p = plan(
            model,
            origin_state(),
            &[contested],
            &cfg,
            &StraightLine,
            0.0,
        );
        assert_eq!(p.first().unwrap().poi_id, PoiId(1));
    }

    #[test]
    fn claimed_and_inactive_are_skipped() {
        let robot = RobotId::new("scout-1");
        let weights = simple_weights();
        let battery = free_battery();
        let motion = MotionProfile::new(1.0);
        let model = RobotPlanningModel {
            robot: &robot,
            weights: &weights,
            battery: &battery,
            motion: &motion,
        };
        let mut a = poi(1, 0.0, 0.0, PoiType::Exploration);
        a.robot = Some(RobotId::new("scout-2"));
        let mut b = poi(2, 0.0, 0.0, PoiType::Exploration);
        b.active = false;
        let p = plan(
            model,
            origin_state(),
            &[a, b],
            &PlannerConfig::default(),
            &StraightLine,
            0.0,
        );
        assert!(p.is_empty());
    }

    #[test]
    fn ties_go_to_lower_id() {
        let robot = RobotId::new("scout-1");
        let weights = simple_weights();
        let battery = free_battery();
        let motion = MotionProfile::new(1.0);
        let model = RobotPlanningModel {
            robot: &robot,
            weights: &weights,
            battery: &battery,
            motion: &motion,
        };
        let pois = vec![
            poi(7, 0.0, 3.0, PoiType::Exploration),
            poi(4, 3.0, 0.0, PoiType::Exploration),
        ];
        let cfg = PlannerConfig {
            planning_depth: 1,
            ..Default::default()
        };
        let p = plan(model, origin_state(), &pois, &cfg, &StraightLine, 0.0);
        assert_eq!(p.first().unwrap().poi_id, PoiId(4));
    }

    #[test]
    fn empty_snapshot_gives_empty_plan() {
        let robot = RobotId::new("scout-1");
        let weights = simple_weights();
        let battery = free_battery();
        let motion = MotionProfile::new(1.0);
        let model = RobotPlanningModel {
            robot: &robot,
            weights: &weights,
            battery: &battery,
            motion: &motion,
        };
        let p = plan(
            model,
            origin_state(),
            &[],
            &PlannerConfig::default(),
            &StraightLine,
            0.0,
        );
        assert!(p.is_empty());
        assert_eq!((p.pruned, p.evaluated), (0, 0));
    }

    #[test]
    fn state_prediction() {
        let battery = BatteryModel {
            c_move: 0.1,
            c_task: PerType::uniform(0.0),
        };
        let motion = MotionProfile::new(1.0);
        let s = origin_state();
        let next = predict_next_state(
            &s,
            &poi(1, 10.0, 0.0, PoiType::Move),
            &StraightLine,
            &battery,
            &motion,
        )
        .unwrap();
        assert_eq!(next.position, Point2::new(10.0, 0.0));
        assert_eq!(next.time, 10.0);
        assert!((next.battery_remaining - 99.0).abs() < 1e-12);

        let next = predict_next_state(
            &s,
            &poi(1, 10.0, 0.0, PoiType::Exploration),
            &StraightLine,
            &battery,
            &motion,
        )
        .unwrap();
        assert_eq!(next.time, 10.0 + 4.0 * 5.0);

        struct Nowhere;
        impl PathOracle for Nowhere {
            fn path_length(&self, _: Point2, _: Point2) -> Option<f64> {
                None
            }
        }
        assert_eq!(
            predict_next_state(
                &s,
                &poi(3, 1.0, 0.0, PoiType::Move),
                &Nowhere,
                &battery,
                &motion
            ),
            Err(PlannerError::NoPath(PoiId(3)))
        );
    }

    #[test]
    fn config_validation() {
        assert!(PlannerConfig::default().validate().is_ok());
        let bad = PlannerConfig {
            duf: 1.2,
            ..Default::default()
        };
        assert_eq!(bad.validate(), Err(PlannerError::InvalidDuf(1.2)));
        let bad = PlannerConfig {
            planning_depth: 0,
            ..Default::default()
        };
        assert_eq!(bad.validate(), Err(PlannerError::InvalidDepth));
    }

    #[test]
    fn replan_policy() {
        assert!(replan_trigger(ReplanEvent::ClaimFailed, true));
        assert!(replan_trigger(ReplanEvent::TaskDone, false));
        assert!(!replan_trigger(ReplanEvent::PoiListChanged, true));
        assert!(replan_trigger(ReplanEvent::PoiListChanged, false));
        assert!(!replan_trigger(ReplanEvent::UtilityStale, true));
    }
}
