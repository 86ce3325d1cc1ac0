//! Exhaustive-evaluation reference planner and a seeded instance generator.
//!
//! The reference never prunes: at every depth it computes the full utility of
//! every remaining candidate straight from the formula and keeps the best
//! admissible one. It shares no code with the library planner beyond the data
//! types.

use mosaic_core::planner::{plan, MotionProfile, PlannerConfig, RobotPlanningModel};
use mosaic_core::utility::{BatteryModel, FeatureWeights, PathOracle, PerType, RobotStateEstimate};
use mosaic_core::{Poi, PoiId, PoiType, Point2, Pose2, RobotAttempt, RobotId, RobotUtility};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Path lengths with a position-dependent detour; targets inside a blocked
/// disc are unreachable.
#[derive(Debug, Clone)]
pub struct DetourField {
    pub detour: f64,
    pub blocked: Vec<(Point2, f64)>,
}

impl PathOracle for DetourField {
    fn path_length(&self, from: Point2, to: Point2) -> Option<f64> {
        if self.blocked.iter().any(|(c, r)| c.distance(&to) < *r) {
            return None;
        }
        let wiggle = (3.1 * to.x + 1.7 * to.y).sin().abs();
        Some(from.distance(&to) * (1.0 + self.detour * wiggle))
    }
}

/// Full utility from the formula, `None` when infeasible.
pub fn oracle_utility(
    robot: &RobotId,
    state: &RobotStateEstimate,
    poi: &Poi,
    weights: &FeatureWeights,
    battery: &BatteryModel,
    nav: &dyn PathOracle,
) -> Option<(f64, f64)> {
    let reward = weights.type_rewards.get(poi.poi_type);
    if reward <= 0.0 {
        return None;
    }
    let target = Point2::new(poi.pose.x, poi.pose.y);
    let d_e =
        ((target.x - state.position.x).powi(2) + (target.y - state.position.y).powi(2)).sqrt();
    let d_nav = nav.path_length(state.position, target)?.max(d_e);
    let cost = battery.c_move * d_nav + battery.c_task.get(poi.poi_type);
    if cost > state.battery_remaining {
        return None;
    }
    let failures = poi
        .robot_attempts
        .iter()
        .filter(|a| &a.robot == robot && !a.success)
        .count();
    if weights.failure_cap > 0 && failures >= weights.failure_cap {
        return None;
    }
    let fail_term = if weights.failure_cap > 0 {
        weights.failure * failures as f64
    } else {
        0.0
    };
    let u = poi.mission_value * reward
        - weights.euclidean * d_e
        - weights.navigation * (d_nav - d_e)
        - weights.battery * cost
        - fail_term;
    Some((u, d_nav))
}

#[allow(clippy::too_many_arguments)]
pub fn reference_plan(
    robot: &RobotId,
    weights: &FeatureWeights,
    battery: &BatteryModel,
    motion: &MotionProfile,
    start: RobotStateEstimate,
    candidates: &[Poi],
    config: &PlannerConfig,
    nav: &dyn PathOracle,
    now: f64,
) -> Vec<PoiId> {
    let mut remaining: Vec<&Poi> = candidates
        .iter()
        .filter(|p| p.active && p.robot.is_none())
        .collect();
    let mut state = start;
    let mut chosen = Vec::new();
    for depth in 0..config.planning_depth {
        let mut best: Option<(f64, PoiId, usize, f64)> = None;
        for (i, poi) in remaining.iter().enumerate() {
            let Some((u, d_nav)) = oracle_utility(robot, &state, poi, weights, battery, nav) else {
                continue;
            };
            let w = u * config.duf.powi(depth as i32);
            if w <= 0.0 {
                continue;
            }
            let beaten = poi.robot_utilities.iter().any(|r| {
                &r.robot != robot
                    && now - r.stamp <= config.staleness_horizon
                    && r.utility_value >= w
            });
            if beaten {
                continue;
            }
            let better = match best {
                None => true,
                Some((bw, bid, ..)) => w > bw || (w == bw && poi.id < bid),
            };
            if better {
                best = Some((w, poi.id, i, d_nav));
            }
        }
        let Some((_, id, i, d_nav)) = best else { break };
        let poi = remaining.remove(i);
        let extra = if poi.poi_type == PoiType::Exploration {
            4.0 * motion.rotation_dwell
        } else {
            0.0
        };
        state = RobotStateEstimate {
            position: Point2::new(poi.pose.x, poi.pose.y),
            battery_remaining: (state.battery_remaining
                - (battery.c_move * d_nav + battery.c_task.get(poi.poi_type)))
            .max(0.0),
            time: state.time
                + d_nav / motion.cruise_speed
                + motion.task_duration.get(poi.poi_type)
                + extra,
        };
        chosen.push(id);
    }
    chosen
}

pub struct Instance {
    pub robots: Vec<(RobotId, FeatureWeights, RobotStateEstimate)>,
    pub pois: Vec<Poi>,
    pub battery: BatteryModel,
    pub motion: MotionProfile,
    pub config: PlannerConfig,
    pub nav: DetourField,
    pub now: f64,
}

const TYPES: [PoiType; 5] = [
    PoiType::Move,
    PoiType::Exploration,
    PoiType::RockCandidate,
    PoiType::GroundMeasurement,
    PoiType::RockMeasurement,
];

pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_robots = rng.random_range(1..=3);
    let n_pois = rng.random_range(1..=8);
    let now = 100.0;

    let robots: Vec<(RobotId, FeatureWeights, RobotStateEstimate)> = (0..n_robots)
        .map(|i| {
            let mut w = if rng.random_bool(0.5) {
                FeatureWeights::default_scout()
            } else {
                FeatureWeights::default_scientist()
            };
            w.euclidean = rng.random_range(0.0..1.0);
            w.navigation = rng.random_range(0.0..1.0);
            w.battery = rng.random_range(0.0..2.0);
            w.failure = rng.random_range(0.0..4.0);
            for t in TYPES {
                if w.type_rewards.get(t) > 0.0 {
                    w.type_rewards.set(t, rng.random_range(0.5..15.0));
                }
            }
            let state = RobotStateEstimate {
                position: Point2::new(rng.random_range(0.0..20.0), rng.random_range(0.0..20.0)),
                battery_remaining: rng.random_range(0.2..3.0),
                time: now,
            };
            (RobotId::new(format!("r{i}")), w, state)
        })
        .collect();

    let pois = (0..n_pois)
        .map(|i| {
            let mut attempts = Vec::new();
            let mut utilities = Vec::new();
            for (r, ..) in &robots {
                for k in 0..rng.random_range(0..4) {
                    attempts.push(RobotAttempt {
                        stamp: k as f64,
                        robot: r.clone(),
                        success: false,
                    });
                }
                if rng.random_bool(0.4) {
                    utilities.push(RobotUtility {
                        robot: r.clone(),
                        utility_value: rng.random_range(-2.0..12.0),
                        stamp: rng.random_range(40.0..100.0),
                    });
                }
            }
            Poi {
                id: PoiId(i as u64 + 1),
                pose: Pose2::new(
                    rng.random_range(0.0..20.0),
                    rng.random_range(0.0..20.0),
                    0.0,
                ),
                poi_type: TYPES[rng.random_range(0..5)],
                robot: rng.random_bool(0.1).then(|| robots[0].0.clone()),
                active: true,
                mission_value: rng.random_range(0.3..2.0),
                robot_attempts: attempts,
                robot_utilities: utilities,
            }
        })
        .collect();

    let blocked = (0..rng.random_range(0..3))
        .map(|_| {
            (
                Point2::new(rng.random_range(0.0..20.0), rng.random_range(0.0..20.0)),
                rng.random_range(0.5..3.0),
            )
        })
        .collect();

    let battery = BatteryModel {
        c_move: rng.random_range(0.0..0.1),
        c_task: PerType(std::array::from_fn(|_| rng.random_range(0.0..0.8))),
    };

    Instance {
        robots,
        pois,
        battery,
        motion: MotionProfile::new(rng.random_range(0.3..1.5)),
        config: PlannerConfig {
            planning_depth: rng.random_range(1..=3),
            duf: if rng.random_bool(0.2) {
                1.0
            } else {
                rng.random_range(0.05..1.0)
            },
            staleness_horizon: 30.0,
        },
        nav: DetourField {
            detour: rng.random_range(0.0..1.0),
            blocked,
        },
        now,
    }
}

/// Runs both planners for every robot of every instance; returns
/// (matching plans, total plans, total pruned candidates).
pub fn losslessness(instances: u64, base_seed: u64) -> (usize, usize, usize) {
    let (mut matching, mut total, mut pruned) = (0, 0, 0);
    for k in 0..instances {
        let inst = random_instance(base_seed.wrapping_add(k));
        for (robot, weights, start) in &inst.robots {
            let model = RobotPlanningModel {
                robot,
                weights,
                battery: &inst.battery,
                motion: &inst.motion,
            };
            let fast = plan(model, *start, &inst.pois, &inst.config, &inst.nav, inst.now);
            let slow = reference_plan(
                robot,
                weights,
                &inst.battery,
                &inst.motion,
                *start,
                &inst.pois,
                &inst.config,
                &inst.nav,
                inst.now,
            );
            total += 1;
            pruned += fast.pruned;
            if fast.poi_sequence() == slow {
                matching += 1;
            }
        }
    }
    (matching, total, pruned)
}
