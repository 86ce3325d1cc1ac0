//! Scripted event log of a field mission with known reference figures:
//! a 40.3 minute mission, four robots, per-robot activity percentages,
//! operator activity shares, attempt outcomes, coverage and scout distances.

use mosaic_core::events::{
    EventKind, MissionEvent, RobotActivity, RobotRole, RosterEntry, TargetKind,
    EVENT_SCHEMA_VERSION,
};
use mosaic_core::kpi::TargetRef;
use mosaic_core::{PoiId, PoiType, Pose2, RobotId};

pub const DURATION: f64 = 40.3 * 60.0;

pub const HUSKY: &str = "husky";
pub const SPOT: &str = "spot";
pub const DILLY: &str = "dilly";
pub const DONKEY: &str = "donkey";

/// (robot, role, idle %, planning %, executing % including teleop, teleop %)
pub const ACTIVITY: [(&str, RobotRole, f64, f64, f64, f64); 4] = [
    (HUSKY, RobotRole::Scientist, 8.9, 80.8, 10.3, 4.3),
    (SPOT, RobotRole::Scout, 31.8, 0.4, 67.8, 17.0),
    (DILLY, RobotRole::Scout, 2.5, 37.6, 59.9, 0.1),
    (DONKEY, RobotRole::Scientist, 11.7, 34.3, 54.0, 12.4),
];

/// Operator shares of mission time: monitoring, teleoperation, troubleshooting.
pub const OPERATOR: (f64, f64, f64) = (27.3, 31.4, 19.5);

pub const SCOUT_DISTANCE: [(&str, f64); 2] = [(SPOT, 216.0), (DILLY, 130.0)];
pub const EXPLORED_AREA: f64 = 758.0;

pub const ROCKS: u64 = 26;
pub const SAND_PATCHES: u64 = 6;

struct Builder {
    events: Vec<MissionEvent>,
    next_poi: u64,
    clock: f64,
}

impl Builder {
    fn tick(&mut self) -> f64 {
        self.clock += 1.0;
        self.clock
    }

    fn create(
        &mut self,
        poi_type: PoiType,
        target: Option<u64>,
        by_operator: bool,
        robot: &str,
    ) -> PoiId {
        let id = PoiId(self.next_poi);
        self.next_poi += 1;
        let t = self.tick();
        let kind = EventKind::Create {
            poi_id: id,
            poi_type,
            pose: Pose2::new(id.0 as f64, 0.0, 0.0),
            mission_value: 1.0,
            target_id: target,
        };
        self.events.push(if by_operator {
            MissionEvent::by_operator(t, None, kind)
        } else {
            MissionEvent::by_robot(t, &RobotId::new(robot), kind)
        });
        id
    }

    fn attempt(&mut self, robot: &str, poi: PoiId, poi_type: PoiType, success: bool) {
        let r = RobotId::new(robot);
        let t = self.tick();
        self.events.push(MissionEvent::by_robot(
            t,
            &r,
            EventKind::Claim {
                poi_id: poi,
                granted: true,
            },
        ));
        if poi_type.is_measurement() {
            self.events.push(MissionEvent::by_robot(
                t,
                &r,
                EventKind::Measurement {
                    poi_id: poi,
                    poi_type,
                    success,
                    detail: if success {
                        "ok".into()
                    } else {
                        "not positioned close enough".into()
                    },
                },
            ));
        }
        let t = self.tick();
        self.events.push(MissionEvent::by_robot(
            t,
            &r,
            EventKind::Free {
                poi_id: poi,
                success,
                detail: None,
            },
        ));
    }
}

/// The ledger and its target catalogue (rocks 1..=26, sand patches 27..=32).
pub fn field_ledger() -> (Vec<MissionEvent>, Vec<TargetRef>) {
    let mut b = Builder {
        events: Vec::new(),
        next_poi: 1,
        clock: 0.0,
    };
    b.events.push(MissionEvent::by_system(
        0.0,
        None,
        EventKind::MissionStart {
            schema: EVENT_SCHEMA_VERSION,
            scenario: "field-test-ledger".into(),
            seed: 0,
            robots: ACTIVITY
                .iter()
                .map(|(id, role, ..)| RosterEntry {
                    id: RobotId::new(*id),
                    role: *role,
                })
                .collect(),
        },
    ));

    // Donkey: five ground POIs on sand patches 27..=30 plus one unlinked, all succeed.
    for target in [Some(27), Some(28), Some(29), Some(30), None] {
        let p = b.create(PoiType::GroundMeasurement, target, true, "");
        b.attempt(DONKEY, p, PoiType::GroundMeasurement, true);
    }
    // Donkey: five operator-selected rocks, three measured, two fail for good.
    for (rock, ok) in [(1, true), (2, true), (3, true), (4, false), (5, false)] {
        let p = b.create(PoiType::RockMeasurement, Some(rock), true, "");
        b.attempt(DONKEY, p, PoiType::RockMeasurement, ok);
    }
    for _ in 0..4 {
        let p = b.create(PoiType::Move, None, true, "");
        b.attempt(DONKEY, p, PoiType::Move, true);
    }

    // Husky: seven ground POIs near the lander. The first needs one retry,
    // the last fails and is left alone.
    let mut husky_pois = Vec::new();
    for _ in 0..7 {
        husky_pois.push(b.create(PoiType::GroundMeasurement, None, true, ""));
    }
    b.attempt(HUSKY, husky_pois[0], PoiType::GroundMeasurement, false);
    b.attempt(HUSKY, husky_pois[0], PoiType::GroundMeasurement, true);
    for p in &husky_pois[1..6] {
        b.attempt(HUSKY, *p, PoiType::GroundMeasurement, true);
    }
    b.attempt(HUSKY, husky_pois[6], PoiType::GroundMeasurement, false);
    let p = b.create(PoiType::Move, None, true, "");
    b.attempt(HUSKY, p, PoiType::Move, true);

    // Rocks 6..=14 marked as candidates from camera feeds and confirmed.
    for rock in 6..=14 {
        let p = b.create(PoiType::RockCandidate, Some(rock), true, "");
        let t = b.tick();
        b.events.push(MissionEvent::by_operator(
            t,
            None,
            EventKind::Convert {
                poi_id: p,
                from: PoiType::RockCandidate,
                to: PoiType::RockMeasurement,
            },
        ));
    }
    // Rocks 15 and 16 were flagged but never confirmed; sand patch 31 was only seen.
    for rock in [15, 16] {
        let p = b.create(PoiType::RockCandidate, Some(rock), false, DILLY);
        let t = b.tick();
        b.events.push(MissionEvent::by_operator(
            t,
            None,
            EventKind::Deactivate { poi_id: p },
        ));
    }
    let t = b.tick();
    b.events.push(MissionEvent::by_robot(
        t,
        &RobotId::new(SPOT),
        EventKind::Detection {
            target_id: 31,
            target_kind: TargetKind::SandPatch,
            poi_id: None,
        },
    ));

    // Coverage and walked distance, spread over the mission in whole-metre steps.
    for (robot, total) in SCOUT_DISTANCE {
        let r = RobotId::new(robot);
        let steps = total as usize;
        for i in 0..steps {
            let t = DURATION * (i + 1) as f64 / (steps + 1) as f64;
            b.events.push(MissionEvent::by_robot(
                t,
                &r,
                EventKind::DistanceDelta { distance: 1.0 },
            ));
        }
    }
    for (robot, walked) in [(HUSKY, 25.0), (DONKEY, 140.0)] {
        let r = RobotId::new(robot);
        b.events.push(MissionEvent::by_robot(
            DURATION / 2.0,
            &r,
            EventKind::DistanceDelta { distance: walked },
        ));
    }
    let spot = RobotId::new(SPOT);
    let dilly = RobotId::new(DILLY);
    for i in 0..379 {
        let t = DURATION * (i + 1) as f64 / 380.0;
        b.events.push(MissionEvent::by_robot(
            t,
            &spot,
            EventKind::CoverageDelta { area: 1.25 },
        ));
        b.events.push(MissionEvent::by_robot(
            t,
            &dilly,
            EventKind::CoverageDelta { area: 0.75 },
        ));
    }

    // Per-robot activity spans laid end to end: idle, planning, autonomous
    // execution, teleoperated execution.
    let pct = |p: f64| p / 100.0 * DURATION;
    for (robot, _, idle, planning, executing, teleop) in ACTIVITY {
        let r = RobotId::new(robot);
        let mut t = 0.0;
        for (state, share) in [
            (RobotActivity::Idle, idle),
            (RobotActivity::Planning, planning),
            (RobotActivity::Executing, executing - teleop),
            (RobotActivity::Teleop, teleop),
        ] {
            let end = if state == RobotActivity::Teleop {
                DURATION
            } else {
                t + pct(share)
            };
            b.events.push(MissionEvent::by_robot(
                end,
                &r,
                EventKind::StateSpan {
                    state,
                    start: t,
                    end,
                },
            ));
            t = end;
        }
    }

    let (monitor, teleop, troubleshoot) = OPERATOR;
    let m_end = pct(monitor);
    let tp_end = m_end + pct(teleop);
    let ts_end = tp_end + pct(troubleshoot);
    b.events.push(MissionEvent::by_operator(
        m_end,
        None,
        EventKind::MonitorSpan {
            start: 0.0,
            end: m_end,
        },
    ));
    b.events.push(MissionEvent::by_operator(
        tp_end,
        Some(&spot),
        EventKind::TeleopSpan {
            start: m_end,
            end: tp_end,
        },
    ));
    b.events.push(MissionEvent::by_operator(
        ts_end,
        Some(&spot),
        EventKind::TroubleshootSpan {
            start: tp_end,
            end: ts_end,
        },
    ));

    b.events.push(MissionEvent::by_system(
        DURATION,
        None,
        EventKind::MissionEnd {
            reason: "time".into(),
        },
    ));
    b.events.sort_by(|a, b| a.t.total_cmp(&b.t));

    let targets = (1..=ROCKS)
        .map(|id| TargetRef {
            id,
            kind: TargetKind::Rock,
        })
        .chain((ROCKS + 1..=ROCKS + SAND_PATCHES).map(|id| TargetRef {
            id,
            kind: TargetKind::SandPatch,
        }))
        .collect();
    (b.events, targets)
}
