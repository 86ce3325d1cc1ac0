#[path = "support/reference_planner.rs"]
mod reference_planner;

use std::time::Instant;

use mosaic_core::planner::{
    depth_weighted, plan, predict_next_state, MotionProfile, PlannerConfig, RobotPlanningModel,
};
use mosaic_core::utility::{
    detailed_utility, estimate_max_utility, BatteryModel, FeatureWeights, RobotStateEstimate,
    FEATURE_BATTERY, FEATURE_EUCLIDEAN, FEATURE_FAILURE, FEATURE_NAVIGATION,
};
use mosaic_core::{Poi, PoiId, PoiType, Point2, Pose2, RobotAttempt, RobotId, RobotUtility};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reference_planner::{
    losslessness, oracle_utility, random_instance, reference_plan, DetourField,
};

type Zeroing = (&'static str, fn(&mut FeatureWeights));

#[test]
fn depth_weighting_matches_closed_form() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..1000 {
        let u: f64 = rng.random_range(-50.0..50.0);
        let duf: f64 = 1.0 - rng.random::<f64>();
        let depth: usize = rng.random_range(0..=5);
        let mut expected = u;
        for _ in 0..depth {
            expected *= duf;
        }
        let got = depth_weighted(u, duf, depth);
        assert!(
            (got - expected).abs() <= 1e-12,
            "{u} {duf} {depth}: {got} vs {expected}"
        );
        assert_eq!(depth_weighted(u, duf, 0), u);
    }
    assert!(started.elapsed().as_secs_f64() < 1.0);
}

#[test]
fn pruned_planner_equals_exhaustive_reference() {
    let started = Instant::now();
    let (matching, total, pruned) = losslessness(1200, 0xC0FFEE);
    assert!(total >= 1200);
    assert_eq!(matching, total);
    // The instances must actually exercise pruning.
    assert!(pruned > total);
    assert!(started.elapsed().as_secs_f64() < 30.0);
}

#[test]
fn step_zero_maximises_weighted_utility() {
    for seed in 0..300 {
        let inst = random_instance(10_000 + seed);
        let (robot, weights, start) = &inst.robots[0];
        let model = RobotPlanningModel {
            robot,
            weights,
            battery: &inst.battery,
            motion: &inst.motion,
        };
        let p = plan(model, *start, &inst.pois, &inst.config, &inst.nav, inst.now);
        let Some(first) = p.first() else { continue };
        for poi in inst.pois.iter().filter(|q| q.is_claimable()) {
            let Some((u, _)) = oracle_utility(robot, start, poi, weights, &inst.battery, &inst.nav)
            else {
                continue;
            };
            let rival = poi.highest_other_utility(robot, inst.now, inst.config.staleness_horizon);
            if u > 0.0 && rival.is_none_or(|r| r < u) {
                assert!(
                    first.weighted_utility >= u - 1e-12,
                    "seed {seed}: {:?} beaten by {}",
                    first,
                    poi.id
                );
            }
        }
    }
}

#[test]
fn plans_chain_states_and_weights() {
    for seed in 0..300 {
        let inst = random_instance(20_000 + seed);
        for (robot, weights, start) in &inst.robots {
            let model = RobotPlanningModel {
                robot,
                weights,
                battery: &inst.battery,
                motion: &inst.motion,
            };
            let p = plan(model, *start, &inst.pois, &inst.config, &inst.nav, inst.now);
            let mut state = *start;
            let mut seen = std::collections::BTreeSet::new();
            for (depth, step) in p.steps.iter().enumerate() {
                assert_eq!(step.depth, depth);
                assert!(seen.insert(step.poi_id), "duplicate POI in plan");
                assert!(step.weighted_utility > 0.0);
                assert_eq!(
                    step.weighted_utility,
                    step.raw_utility * inst.config.duf.powi(depth as i32)
                );
                let poi = inst.pois.iter().find(|q| q.id == step.poi_id).unwrap();
                let next = predict_next_state(&state, poi, &inst.nav, &inst.battery, &inst.motion)
                    .unwrap();
                assert!((next.time - step.predicted_state_after.time).abs() < 1e-9);
                assert!(
                    (next.battery_remaining - step.predicted_state_after.battery_remaining).abs()
                        < 1e-9
                );
                assert!(next.time >= state.time);
                state = step.predicted_state_after;
            }
        }
    }
}

#[test]
fn coordination_safety() {
    for seed in 0..400 {
        let mut inst = random_instance(30_000 + seed);
        let (robot, weights, start) = inst.robots[0].clone();
        let rival = RobotId::new("rival");
        for poi in inst.pois.iter_mut() {
            poi.robot_utilities.retain(|u| u.robot != rival);
            poi.robot_utilities.push(RobotUtility {
                robot: rival.clone(),
                utility_value: 3.0,
                stamp: inst.now,
            });
        }
        let model = RobotPlanningModel {
            robot: &robot,
            weights: &weights,
            battery: &inst.battery,
            motion: &inst.motion,
        };
        let p = plan(model, start, &inst.pois, &inst.config, &inst.nav, inst.now);
        for step in &p.steps {
            assert!(step.weighted_utility > 3.0);
        }
        let reference = reference_plan(
            &robot,
            &weights,
            &inst.battery,
            &inst.motion,
            start,
            &inst.pois,
            &inst.config,
            &inst.nav,
            inst.now,
        );
        assert_eq!(p.poi_sequence(), reference);
    }
}

#[test]
fn equal_raw_utility_prefers_earlier_depth() {
    // Two identical POIs at the robot position: the first pick happens at depth 0.
    let robot = RobotId::new("r");
    let weights = FeatureWeights::default_scout();
    let battery = BatteryModel::default();
    let motion = MotionProfile::new(1.0);
    let pois: Vec<Poi> = (1..=2)
        .map(|i| Poi {
            id: PoiId(i),
            pose: Pose2::new(0.0, 0.0, 0.0),
            poi_type: PoiType::Move,
            robot: None,
            active: true,
            mission_value: 1.0,
            robot_attempts: vec![],
            robot_utilities: vec![],
        })
        .collect();
    let start = RobotStateEstimate {
        position: Point2::new(0.0, 0.0),
        battery_remaining: 10.0,
        time: 0.0,
    };
    let model = RobotPlanningModel {
        robot: &robot,
        weights: &weights,
        battery: &battery,
        motion: &motion,
    };
    let p = plan(
        model,
        start,
        &pois,
        &PlannerConfig::default(),
        &reference_planner::DetourField {
            detour: 0.0,
            blocked: vec![],
        },
        0.0,
    );
    assert_eq!(p.poi_sequence(), vec![PoiId(1), PoiId(2)]);
    assert!(p.steps[0].weighted_utility > p.steps[1].weighted_utility);
}

fn any_type() -> impl Strategy<Value = PoiType> {
    prop::sample::select(PoiType::ALL.to_vec())
}

prop_compose! {
    fn arb_case()(
        rx in -30.0..30.0f64, ry in -30.0..30.0f64,
        px in -30.0..30.0f64, py in -30.0..30.0f64,
        poi_type in any_type(),
        mission_value in 0.0..3.0f64,
        battery_left in 0.0..5.0f64,
        detour in 0.0..2.0f64,
        w_e in 0.0..2.0f64, w_nav in 0.0..2.0f64, w_batt in 0.0..3.0f64, w_fail in 0.0..5.0f64,
        rewards in prop::array::uniform5(prop_oneof![Just(0.0), 0.1..20.0f64]),
        failures in 0usize..5,
        c_move in 0.0..0.2f64,
        c_task in prop::array::uniform5(0.0..1.0f64),
    ) -> (RobotStateEstimate, Poi, FeatureWeights, BatteryModel, DetourField) {
        let robot = RobotId::new("r");
        let state = RobotStateEstimate { position: Point2::new(rx, ry), battery_remaining: battery_left, time: 0.0 };
        let poi = Poi {
            id: PoiId(1),
            pose: Pose2::new(px, py, 0.0),
            poi_type,
            robot: None,
            active: true,
            mission_value,
            robot_attempts: (0..failures).map(|k| RobotAttempt { stamp: k as f64, robot: robot.clone(), success: false }).collect(),
            robot_utilities: vec![],
        };
        let mut w = FeatureWeights::default_scout();
        w.euclidean = w_e;
        w.navigation = w_nav;
        w.battery = w_batt;
        w.failure = w_fail;
        w.type_rewards = mosaic_core::utility::PerType(rewards);
        let battery = BatteryModel { c_move, c_task: mosaic_core::utility::PerType(c_task) };
        (state, poi, w, battery, DetourField { detour, blocked: vec![] })
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn estimate_bounds_detailed((state, poi, w, battery, nav) in arb_case()) {
        let robot = RobotId::new("r");
        let est = estimate_max_utility(&robot, &state, &poi, &w, &battery);
        let det = detailed_utility(&robot, &state, &poi, &w, &nav, &battery);
        prop_assert!(est.total >= det.total - 1e-9, "{} < {}", est.total, det.total);
        if w.type_rewards.get(poi.poi_type) == 0.0 {
            prop_assert!(!est.feasible && !det.feasible);
        }
    }

    #[test]
    fn removing_a_feature_removes_its_contribution((mut state, mut poi, mut w, battery, nav) in arb_case()) {
        let robot = RobotId::new("r");
        state.battery_remaining = f64::MAX;
        poi.robot_attempts.truncate(w.failure_cap - 1);
        if w.type_rewards.get(poi.poi_type) == 0.0 {
            w.type_rewards.set(poi.poi_type, 1.0);
        }
        let base = detailed_utility(&robot, &state, &poi, &w, &nav, &battery);
        prop_assert!(base.feasible);
        let sum: f64 = base.contributions.values().sum();
        prop_assert!((sum - base.total).abs() < 1e-9);
        let zeroed: [Zeroing; 4] = [
            (FEATURE_EUCLIDEAN, |w| w.euclidean = 0.0),
            (FEATURE_NAVIGATION, |w| w.navigation = 0.0),
            (FEATURE_BATTERY, |w| w.battery = 0.0),
            (FEATURE_FAILURE, |w| w.failure = 0.0),
        ];
        for (name, zero) in zeroed {
            let mut w2 = w.clone();
            zero(&mut w2);
            let without = detailed_utility(&robot, &state, &poi, &w2, &nav, &battery);
            prop_assert!(without.feasible);
            prop_assert!((base.total - without.total - base.contributions[name]).abs() < 1e-9, "{name}");
        }
    }

    #[test]
    fn move_is_never_preferred(
        x in -30.0..30.0f64, y in -30.0..30.0f64, px in -30.0..30.0f64, py in -30.0..30.0f64,
        scout in any::<bool>(), detour in 0.0..2.0f64,
    ) {
        let robot = RobotId::new("r");
        let w = if scout { FeatureWeights::default_scout() } else { FeatureWeights::default_scientist() };
        let battery = BatteryModel::default();
        let nav = DetourField { detour, blocked: vec![] };
        let state = RobotStateEstimate { position: Point2::new(x, y), battery_remaining: f64::MAX, time: 0.0 };
        let at = |poi_type| Poi {
            id: PoiId(1),
            pose: Pose2::new(px, py, 0.0),
            poi_type,
            robot: None,
            active: true,
            mission_value: 1.0,
            robot_attempts: vec![],
            robot_utilities: vec![],
        };
        let mv = detailed_utility(&robot, &state, &at(PoiType::Move), &w, &nav, &battery);
        prop_assert!(mv.feasible);
        for t in PoiType::ALL {
            if t == PoiType::Move || !w.can_perform(t) {
                continue;
            }
            let other = detailed_utility(&robot, &state, &at(t), &w, &nav, &battery);
            prop_assert!(mv.total <= other.total, "{t}: {} > {}", mv.total, other.total);
        }
    }
}
