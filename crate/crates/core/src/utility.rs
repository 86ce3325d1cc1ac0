//! Per-(robot, POI) utility as a weighted sum of reward and penalty features.
//!
//! Two evaluations exist. [`estimate_max_utility`] is cheap: type reward minus
//! the weighted Euclidean distance. [`detailed_utility`] adds the navigation
//! detour, battery consumption and failure history. Because the navigation
//! feature charges only the detour `d_nav - d_euclid` and every extra feature
//! is a non-negative penalty, the estimate is an upper bound on the detailed
//! value for identical inputs. The planner relies on that bound to prune.

use std::collections::BTreeMap;
use std::fmt;

use serde::de::{self, MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::geometry::Point2;
use crate::poi::{Poi, PoiType, RobotId};

/// Total carried by infeasible breakdowns.
pub const INFEASIBLE_UTILITY: f64 = -1e18;

pub const FEATURE_TYPE_REWARD: &str = "type_reward";
pub const FEATURE_EUCLIDEAN: &str = "euclidean_distance";
pub const FEATURE_NAVIGATION: &str = "navigation_distance";
pub const FEATURE_BATTERY: &str = "battery_consumption";
pub const FEATURE_FAILURE: &str = "failure_history";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum WeightsError {
    #[error("weight `{0}` must be finite and >= 0")]
    InvalidWeight(String),
}

/// One value per POI type. Serialized as a map keyed by type name; all five
/// keys are required when deserializing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerType<T>(pub [T; 5]);

impl<T: Copy> PerType<T> {
    pub fn uniform(v: T) -> Self {
        Self([v; 5])
    }

    pub fn from_fn(f: impl Fn(PoiType) -> T) -> Self {
        Self(PoiType::ALL.map(f))
    }

    pub fn get(&self, t: PoiType) -> T {
        self.0[t.index()]
    }

    pub fn set(&mut self, t: PoiType, v: T) {
        self.0[t.index()] = v;
    }

    pub fn iter(&self) -> impl Iterator<Item = (PoiType, T)> + '_ {
        PoiType::ALL.into_iter().map(|t| (t, self.get(t)))
    }
}

impl<T: Serialize + Copy> Serialize for PerType<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(5))?;
        for (t, v) in self.iter() {
            map.serialize_entry(t.as_str(), &v)?;
        }
        map.end()
    }
}

impl<'de, T: Deserialize<'de> + Copy + Default> Deserialize<'de> for PerType<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct PerTypeVisitor<T>(std::marker::PhantomData<T>);

        impl<'de, T: Deserialize<'de> + Copy + Default> Visitor<'de> for PerTypeVisitor<T> {
            type Value = PerType<T>;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a map with one entry per POI type")
            }

            fn visit_map<A: MapAccess<'de>>(self, mut access: A) -> Result<Self::Value, A::Error> {
                let mut values = [None; 5];
                while let Some((key, value)) = access.next_entry::<String, T>()? {
                    let t: PoiType = key.parse().map_err(de::Error::custom)?;
                    values[t.index()] = Some(value);
                }
                let mut out = [T::default(); 5];
                for (i, v) in values.into_iter().enumerate() {
                    out[i] = v.ok_or_else(|| {
                        de::Error::custom(format!("missing entry for {}", PoiType::ALL[i]))
                    })?;
                }
                Ok(PerType(out))
            }
        }

        deserializer.deserialize_map(PerTypeVisitor(std::marker::PhantomData))
    }
}

/// Operator-defined feature weights and the robot's type-reward table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureWeights {
    pub type_rewards: PerType<f64>,
    pub euclidean: f64,
    pub navigation: f64,
    pub battery: f64,
    pub failure: f64,
    /// Failed attempts on one POI after which the robot treats it as infeasible.
    /// Zero disables the failure-history feature entirely.
    #[serde(default = "default_failure_cap")]
    pub failure_cap: usize,
}

fn default_failure_cap() -> usize {
    3
}

impl FeatureWeights {
    /// Calibration defaults for scouts.
    pub fn default_scout() -> Self {
        Self::with_rewards(&[
            (PoiType::Exploration, 10.0),
            (PoiType::Move, 1.0),
            (PoiType::RockCandidate, 6.0),
        ])
    }

    /// Calibration defaults for scientists.
    pub fn default_scientist() -> Self {
        Self::with_rewards(&[
            (PoiType::GroundMeasurement, 10.0),
            (PoiType::RockMeasurement, 12.0),
            (PoiType::Exploration, 2.0),
            (PoiType::Move, 1.0),
        ])
    }

    fn with_rewards(rewards: &[(PoiType, f64)]) -> Self {
        let mut table = PerType::uniform(0.0);
        for (t, r) in rewards {
            table.set(*t, *r);
        }
        Self {
            type_rewards: table,
            euclidean: 0.2,
            navigation: 0.2,
            battery: 1.0,
            failure: 2.0,
            failure_cap: default_failure_cap(),
        }
    }

    pub fn validate(&self) -> Result<(), WeightsError> {
        let named = [
            ("euclidean", self.euclidean),
            ("navigation", self.navigation),
            ("battery", self.battery),
            ("failure", self.failure),
        ];
        for (name, w) in named {
            if !w.is_finite() || w < 0.0 {
                return Err(WeightsError::InvalidWeight(name.to_owned()));
            }
        }
        for (t, r) in self.type_rewards.iter() {
            if !r.is_finite() || r < 0.0 {
                return Err(WeightsError::InvalidWeight(format!("type_rewards.{t}")));
            }
        }
        Ok(())
    }

    pub fn can_perform(&self, t: PoiType) -> bool {
        self.type_rewards.get(t) > 0.0
    }
}

/// Linear energy model shared by the planner and the world simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatteryModel {
    /// Energy per metre travelled.
    pub c_move: f64,
    /// Fixed energy per completed task, by POI type.
    pub c_task: PerType<f64>,
}

impl Default for BatteryModel {
    fn default() -> Self {
        let mut c_task = PerType::uniform(0.0);
        c_task.set(PoiType::Exploration, 0.2);
        c_task.set(PoiType::RockCandidate, 0.1);
        c_task.set(PoiType::GroundMeasurement, 0.5);
        c_task.set(PoiType::RockMeasurement, 0.8);
        Self {
            c_move: 0.02,
            c_task,
        }
    }
}

impl BatteryModel {
    pub fn move_cost(&self, path_length: f64) -> f64 {
        self.c_move * path_length
    }

    pub fn task_cost(&self, poi_type: PoiType) -> f64 {
        self.c_task.get(poi_type)
    }
}

/// `c_move * path_length + c_task(poi_type)`.
pub fn battery_cost(poi_type: PoiType, path_length: f64, model: &BatteryModel) -> f64 {
    debug_assert!(path_length >= 0.0);
    model.move_cost(path_length) + model.task_cost(poi_type)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotStateEstimate {
    pub position: Point2,
    pub battery_remaining: f64,
    pub time: f64,
}

/// Answers shortest-path length queries for one robot.
pub trait PathOracle {
    /// Path length in metres, `None` when no path exists.
    fn path_length(&self, from: Point2, to: Point2) -> Option<f64>;
}

/// Obstacle-free world: the path is the straight segment.
#[derive(Debug, Clone, Copy, Default)]
pub struct StraightLine;

impl PathOracle for StraightLine {
    fn path_length(&self, from: Point2, to: Point2) -> Option<f64> {
        Some(from.distance(&to))
    }
}

impl<P: PathOracle + ?Sized> PathOracle for &P {
    fn path_length(&self, from: Point2, to: Point2) -> Option<f64> {
        (**self).path_length(from, to)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityBreakdown {
    /// Signed, already-weighted contribution of each evaluated feature.
    pub contributions: BTreeMap<String, f64>,
    pub total: f64,
    pub feasible: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub infeasible_reason: Option<String>,
    /// Navigation path length, when the detailed evaluation computed one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path_length: Option<f64>,
}

impl UtilityBreakdown {
    fn infeasible(contributions: BTreeMap<String, f64>, reason: impl Into<String>) -> Self {
        Self {
            contributions,
            total: INFEASIBLE_UTILITY,
            feasible: false,
            infeasible_reason: Some(reason.into()),
            path_length: None,
        }
    }
}

/// Everything a feature may look at.
#[derive(Debug, Clone, Copy)]
pub struct FeatureInput<'a> {
    pub robot: &'a RobotId,
    pub state: &'a RobotStateEstimate,
    pub poi: &'a Poi,
    pub weights: &'a FeatureWeights,
    pub battery: &'a BatteryModel,
    pub euclidean_distance: f64,
    /// Navigation distance, clamped to at least the Euclidean distance.
    /// Only present in the detailed phase.
    pub navigation_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureValue {
    Contribution(f64),
    Infeasible(String),
}

/// A pluggable reward or penalty term.
pub trait UtilityFeature: Send + Sync {
    fn name(&self) -> &'static str;
    fn evaluate(&self, input: &FeatureInput<'_>) -> FeatureValue;
}

pub struct TypeRewardFeature;

impl UtilityFeature for TypeRewardFeature {
    fn name(&self) -> &'static str {
        FEATURE_TYPE_REWARD
    }

    fn evaluate(&self, input: &FeatureInput<'_>) -> FeatureValue {
        let reward = input.weights.type_rewards.get(input.poi.poi_type);
        if reward <= 0.0 {
            return FeatureValue::Infeasible(format!("cannot perform {}", input.poi.poi_type));
        }
        FeatureValue::Contribution(input.poi.mission_value * reward)
    }
}

pub struct EuclideanDistanceFeature;

impl UtilityFeature for EuclideanDistanceFeature {
    fn name(&self) -> &'static str {
        FEATURE_EUCLIDEAN
    }

    fn evaluate(&self, input: &FeatureInput<'_>) -> FeatureValue {
        FeatureValue::Contribution(-input.weights.euclidean * input.euclidean_distance)
    }
}

/// Charges only the detour beyond the straight line.
pub struct NavigationDistanceFeature;

impl UtilityFeature for NavigationDistanceFeature {
    fn name(&self) -> &'static str {
        FEATURE_NAVIGATION
    }

    fn evaluate(&self, input: &FeatureInput<'_>) -> FeatureValue {
        match input.navigation_distance {
            Some(d_nav) => FeatureValue::Contribution(
                -input.weights.navigation * (d_nav - input.euclidean_distance),
            ),
            None => FeatureValue::Infeasible("no path".into()),
        }
    }
}

pub struct BatteryConsumptionFeature;

impl UtilityFeature for BatteryConsumptionFeature {
    fn name(&self) -> &'static str {
        FEATURE_BATTERY
    }

    fn evaluate(&self, input: &FeatureInput<'_>) -> FeatureValue {
        let Some(d_nav) = input.navigation_distance else {
            return FeatureValue::Infeasible("no path".into());
        };
        let cost = battery_cost(input.poi.poi_type, d_nav, input.battery);
        if cost > input.state.battery_remaining {
            return FeatureValue::Infeasible(format!(
                "battery cost {cost:.3} exceeds remaining {:.3}",
                input.state.battery_remaining
            ));
        }
        FeatureValue::Contribution(-input.weights.battery * cost)
    }
}

pub struct FailureHistoryFeature;

impl UtilityFeature for FailureHistoryFeature {
    fn name(&self) -> &'static str {
        FEATURE_FAILURE
    }

    fn evaluate(&self, input: &FeatureInput<'_>) -> FeatureValue {
        let cap = input.weights.failure_cap;
        if cap == 0 {
            return FeatureValue::Contribution(0.0);
        }
        let failures = input.poi.failed_attempts_by(input.robot);
        if failures >= cap {
            return FeatureValue::Infeasible(format!("{failures} failed attempts"));
        }
        FeatureValue::Contribution(-input.weights.failure * failures as f64)
    }
}

/// Ordered feature sets for the two evaluation phases.
pub struct UtilityEngine {
    estimate: Vec<Box<dyn UtilityFeature>>,
    detailed: Vec<Box<dyn UtilityFeature>>,
}

impl Default for UtilityEngine {
    fn default() -> Self {
        Self {
            estimate: vec![
                Box::new(TypeRewardFeature),
                Box::new(EuclideanDistanceFeature),
            ],
            detailed: vec![
                Box::new(TypeRewardFeature),
                Box::new(EuclideanDistanceFeature),
                Box::new(NavigationDistanceFeature),
                Box::new(BatteryConsumptionFeature),
                Box::new(FailureHistoryFeature),
            ],
        }
    }
}

impl UtilityEngine {
    /// Builds an engine from explicit feature lists. The caller is responsible
    /// for keeping the estimate set an upper bound of the detailed set.
    pub fn new(
        estimate: Vec<Box<dyn UtilityFeature>>,
        detailed: Vec<Box<dyn UtilityFeature>>,
    ) -> Self {
        Self { estimate, detailed }
    }

    pub fn estimate(
        &self,
        robot: &RobotId,
        state: &RobotStateEstimate,
        poi: &Poi,
        weights: &FeatureWeights,
        battery: &BatteryModel,
    ) -> UtilityBreakdown {
        let input = FeatureInput {
            robot,
            state,
            poi,
            weights,
            battery,
            euclidean_distance: state.position.distance(&poi.pose.position()),
            navigation_distance: None,
        };
        sum_features(&self.estimate, &input, None)
    }

    pub fn detailed(
        &self,
        robot: &RobotId,
        state: &RobotStateEstimate,
        poi: &Poi,
        weights: &FeatureWeights,
        nav: &dyn PathOracle,
        battery: &BatteryModel,
    ) -> UtilityBreakdown {
        let target = poi.pose.position();
        let d_euclid = state.position.distance(&target);
        let d_nav = nav
            .path_length(state.position, target)
            .map(|d| d.max(d_euclid));
        let input = FeatureInput {
            robot,
            state,
            poi,
            weights,
            battery,
            euclidean_distance: d_euclid,
            navigation_distance: d_nav,
        };
        sum_features(&self.detailed, &input, d_nav)
    }
}

fn sum_features(
    features: &[Box<dyn UtilityFeature>],
    input: &FeatureInput<'_>,
    path_length: Option<f64>,
) -> UtilityBreakdown {
    let mut contributions = BTreeMap::new();
    let mut total = 0.0;
    let mut infeasible = None;
    for feature in features {
        match feature.evaluate(input) {
            FeatureValue::Contribution(v) => {
                total += v;
                contributions.insert(feature.name().to_owned(), v);
            }
            FeatureValue::Infeasible(reason) => {
                infeasible.get_or_insert(reason);
            }
        }
    }
    match infeasible {
        Some(reason) => UtilityBreakdown::infeasible(contributions, reason),
        None => UtilityBreakdown {
            contributions,
            total,
            feasible: true,
            infeasible_reason: None,
            path_length,
        },
    }
}

/// Cheap upper bound: mission-weighted type reward minus weighted Euclidean
/// distance.
pub fn estimate_max_utility(
    robot: &RobotId,
    state: &RobotStateEstimate,
    poi: &Poi,
    weights: &FeatureWeights,
    battery: &BatteryModel,
) -> UtilityBreakdown {
    UtilityEngine::default().estimate(robot, state, poi, weights, battery)
}

/// Full evaluation including navigation detour, battery and failure history.
pub fn detailed_utility(
    robot: &RobotId,
    state: &RobotStateEstimate,
    poi: &Poi,
    weights: &FeatureWeights,
    nav: &dyn PathOracle,
    battery: &BatteryModel,
) -> UtilityBreakdown {
    UtilityEngine::default().detailed(robot, state, poi, weights, nav, battery)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Pose2;
    use crate::poi::{PoiId, RobotAttempt};

    fn poi_at(x: f64, y: f64, t: PoiType) -> Poi {
        Poi {
            id: PoiId(1),
            pose: Pose2::new(x, y, 0.0),
            poi_type: t,
            robot: None,
            active: true,
            mission_value: 1.0,
            robot_attempts: vec![],
            robot_utilities: vec![],
        }
    }

    fn state(x: f64, y: f64, battery: f64) -> RobotStateEstimate {
        RobotStateEstimate {
            position: Point2::new(x, y),
            battery_remaining: battery,
            time: 0.0,
        }
    }

    fn unit_weights() -> FeatureWeights {
        let mut w = FeatureWeights::default_scout();
        w.type_rewards.set(PoiType::Exploration, 10.0);
        w.euclidean = 1.0;
        w
    }

    fn free_battery() -> BatteryModel {
        BatteryModel {
            c_move: 0.0,
            c_task: PerType::uniform(0.0),
        }
    }

    /// Fixed-length oracle for exercising the detour term.
    struct FixedPath(Option<f64>);

    impl PathOracle for FixedPath {
        fn path_length(&self, _: Point2, _: Point2) -> Option<f64> {
            self.0
        }
    }

    #[test]
    fn estimate_three_four_five() {
        let robot = RobotId::new("scout-1");
        let b = estimate_max_utility(
            &robot,
            &state(0.0, 0.0, 100.0),
            &poi_at(3.0, 4.0, PoiType::Exploration),
            &unit_weights(),
            &free_battery(),
        );
        assert!(b.feasible);
        assert_eq!(b.total, 5.0);
        assert_eq!(b.contributions[FEATURE_TYPE_REWARD], 10.0);
        assert_eq!(b.contributions[FEATURE_EUCLIDEAN], -5.0);
    }

    #[test]
    fn zero_reward_is_infeasible() {
        let robot = RobotId::new("scout-1");
        let b = estimate_max_utility(
            &robot,
            &state(0.0, 0.0, 100.0),
            &poi_at(0.0, 0.0, PoiType::RockMeasurement),
            &FeatureWeights::default_scout(),
            &free_battery(),
        );
        assert!(!b.feasible);
        assert_eq!(b.total, INFEASIBLE_UTILITY);
    }

    #[test]
    fn zero_distance_gives_reward() {
        let robot = RobotId::new("scout-1");
        let b = estimate_max_utility(
            &robot,
            &state(2.0, 2.0, 100.0),
            &poi_at(2.0, 2.0, PoiType::Exploration),
            &unit_weights(),
            &free_battery(),
        );
        assert_eq!(b.total, 10.0);
    }

    #[test]
    fn straight_line_detail_differs_only_by_battery() {
        let robot = RobotId::new("scout-1");
        let battery = BatteryModel {
            c_move: 0.1,
            c_task: PerType::uniform(0.0),
        };
        let s = state(0.0, 0.0, 100.0);
        let p = poi_at(6.0, 8.0, PoiType::Exploration);
        let w = unit_weights();
        let est = estimate_max_utility(&robot, &s, &p, &w, &battery);
        let det = detailed_utility(&robot, &s, &p, &w, &StraightLine, &battery);
        assert_eq!(det.contributions[FEATURE_NAVIGATION], 0.0);
        assert!((est.total - det.total - w.battery * 1.0).abs() < 1e-12);
    }

    #[test]
    fn detour_is_penalised() {
        let robot = RobotId::new("scout-1");
        let s = state(0.0, 0.0, 100.0);
        let p = poi_at(4.0, 0.0, PoiType::Exploration);
        let det = detailed_utility(
            &robot,
            &s,
            &p,
            &unit_weights(),
            &FixedPath(Some(8.24)),
            &free_battery(),
        );
        assert!((det.contributions[FEATURE_NAVIGATION] + 0.2 * 4.24).abs() < 1e-12);
        // shorter-than-euclid answers are clamped
        let det = detailed_utility(
            &robot,
            &s,
            &p,
            &unit_weights(),
            &FixedPath(Some(1.0)),
            &free_battery(),
        );
        assert_eq!(det.contributions[FEATURE_NAVIGATION], 0.0);
        assert_eq!(det.path_length, Some(4.0));
    }

    #[test]
    fn no_path_is_infeasible() {
        let robot = RobotId::new("scout-1");
        let det = detailed_utility(
            &robot,
            &state(0.0, 0.0, 100.0),
            &poi_at(4.0, 0.0, PoiType::Exploration),
            &unit_weights(),
            &FixedPath(None),
            &free_battery(),
        );
        assert!(!det.feasible);
        assert_eq!(det.infeasible_reason.as_deref(), Some("no path"));
    }

    #[test]
    fn battery_shortfall_is_infeasible() {
        let robot = RobotId::new("scout-1");
        let battery = BatteryModel {
            c_move: 0.1,
            c_task: PerType::uniform(0.0),
        };
        let det = detailed_utility(
            &robot,
            &state(0.0, 0.0, 1.0),
            &poi_at(12.0, 0.0, PoiType::Exploration),
            &unit_weights(),
            &StraightLine,
            &battery,
        );
        assert!(!det.feasible);
    }

    #[test]
    fn battery_cost_linear() {
        let mut m = BatteryModel {
            c_move: 0.1,
            c_task: PerType::uniform(0.0),
        };
        assert!((battery_cost(PoiType::Move, 10.0, &m) - 1.0).abs() < 1e-15);
        m.c_task.set(PoiType::GroundMeasurement, 0.5);
        assert_eq!(battery_cost(PoiType::GroundMeasurement, 0.0, &m), 0.5);
    }

    #[test]
    fn failure_history_caps() {
        let robot = RobotId::new("husky");
        let mut p = poi_at(0.0, 0.0, PoiType::GroundMeasurement);
        let w = FeatureWeights::default_scientist();
        let s = state(0.0, 0.0, 100.0);
        for k in 0..3 {
            let det = detailed_utility(&robot, &s, &p, &w, &StraightLine, &free_battery());
            assert!(det.feasible);
            assert_eq!(det.contributions[FEATURE_FAILURE], -2.0 * k as f64);
            p.robot_attempts.push(RobotAttempt {
                stamp: k as f64,
                robot: robot.clone(),
                success: false,
            });
        }
        assert!(!detailed_utility(&robot, &s, &p, &w, &StraightLine, &free_battery()).feasible);
        // other robots are unaffected
        let other = RobotId::new("donkey");
        assert!(detailed_utility(&other, &s, &p, &w, &StraightLine, &free_battery()).feasible);
    }

    #[test]
    fn per_type_requires_all_keys() {
        let ok = r#"{"MOVE":1,"EXPLORATION":2,"ROCK_CANDIDATE":0,"GROUND_MEASUREMENT":0,"ROCK_MEASUREMENT":0}"#;
        let t: PerType<f64> = serde_json::from_str(ok).unwrap();
        assert_eq!(t.get(PoiType::Exploration), 2.0);
        let missing = r#"{"MOVE":1}"#;
        assert!(serde_json::from_str::<PerType<f64>>(missing).is_err());
        let bogus = r#"{"FLY":1}"#;
        assert!(serde_json::from_str::<PerType<f64>>(bogus).is_err());
    }

    #[test]
    fn validate_rejects_negative_weights() {
        let mut w = FeatureWeights::default_scout();
        assert!(w.validate().is_ok());
        w.navigation = -0.1;
        assert!(w.validate().is_err());
    }
}
