#![allow(dead_code)]

use mosaic_core::events::{EventKind, MissionEvent};
use mosaic_core::{PoiId, PoiType, Point2, Pose2, RobotId};
use mosaic_sim::scenario::{PoiSpec, RobotSpec, TargetSpec, TerrainLayout, TerrainSpec};
use mosaic_sim::Scenario;

/// An all-flat 20 m x 20 m field with the given robots taken from the
/// default team, re-posed, and no targets or POIs.
pub fn open_field(robots: &[(&str, (f64, f64))]) -> Scenario {
    let mut sc = Scenario::field_default();
    let team = sc.robots.clone();
    sc.name = "open".to_owned();
    sc.terrain = TerrainSpec {
        origin: Point2::new(0.0, 0.0),
        cell_size: 1.0,
        corner_cutting: false,
        layout: TerrainLayout::Rows {
            rows: vec![".".repeat(20); 20],
        },
    };
    sc.lander = Point2::new(1.0, 10.0);
    sc.targets.clear();
    sc.pois.clear();
    sc.robots = robots
        .iter()
        .map(|(id, (x, y))| {
            let mut r: RobotSpec = team
                .iter()
                .find(|r| r.id.as_str() == *id)
                .expect("default robot")
                .clone();
            r.start = Pose2::new(*x, *y, 0.0);
            r
        })
        .collect();
    sc
}

/// A POI worth enough that a scout's travel penalties never outweigh it.
pub fn poi(x: f64, y: f64, poi_type: PoiType) -> PoiSpec {
    PoiSpec {
        pose: Pose2::new(x, y, 0.0),
        poi_type,
        mission_value: 20.0,
        target_id: None,
    }
}

pub fn target(id: u64, x: f64, y: f64, detectability: f64) -> TargetSpec {
    TargetSpec {
        id,
        kind: mosaic_core::events::TargetKind::Rock,
        position: Point2::new(x, y),
        detectability,
    }
}

pub fn rid(s: &str) -> RobotId {
    RobotId::new(s)
}

pub fn log_bytes(log: &[MissionEvent]) -> Vec<u8> {
    let mut out = Vec::new();
    for e in log {
        serde_json::to_writer(&mut out, e).unwrap();
        out.push(b'\n');
    }
    out
}

/// Granted claims as (time, robot, poi).
pub fn grants(log: &[MissionEvent]) -> Vec<(f64, RobotId, PoiId)> {
    log.iter()
        .filter_map(|e| match e.kind {
            EventKind::Claim {
                poi_id,
                granted: true,
            } => Some((e.t, e.robot.clone()?, poi_id)),
            _ => None,
        })
        .collect()
}

/// Frees as (time, robot, poi, success).
pub fn frees(log: &[MissionEvent]) -> Vec<(f64, RobotId, PoiId, bool)> {
    log.iter()
        .filter_map(|e| match e.kind {
            EventKind::Free {
                poi_id, success, ..
            } => Some((e.t, e.robot.clone()?, poi_id, success)),
            _ => None,
        })
        .collect()
}

/// Checks that no POI is ever granted while another robot holds it.
pub fn assert_single_assignment(log: &[MissionEvent]) {
    let mut holder: std::collections::BTreeMap<PoiId, RobotId> = Default::default();
    for e in log {
        match &e.kind {
            EventKind::Claim {
                poi_id,
                granted: true,
            } => {
                let robot = e.robot.clone().unwrap();
                assert!(
                    holder.insert(*poi_id, robot.clone()).is_none(),
                    "POI {poi_id} granted to {robot} at {} while held",
                    e.t
                );
            }
            EventKind::Free { poi_id, .. } => {
                assert_eq!(
                    holder.remove(poi_id).as_ref(),
                    e.robot.as_ref(),
                    "free by non-holder at {}",
                    e.t
                );
            }
            _ => {}
        }
    }
}
