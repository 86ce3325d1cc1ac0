//! Ground truth of the simulated field: robot bodies, motion, battery,
//! coverage, target detection and the measurement instrument.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::sync::Arc;

use mosaic_core::events::{RobotRole, TargetKind};
use mosaic_core::geometry::wrap_angle;
use mosaic_core::{PoiType, Point2, Pose2, RobotId};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

use crate::coverage::CoverageMap;
use crate::scenario::{InstrumentConfig, RobotSpec, Scenario, ScenarioError, TargetSpec};
use crate::terrain::{Mobility, Terrain, TerrainNav};

/// Random streams, one per purpose, so that adding draws in one place does
/// not perturb the others.
#[derive(Debug, Clone, Copy)]
pub enum Stream {
    Comms = 1,
    Navigation = 2,
    Detection = 3,
    Instrument = 4,
    Operator = 5,
}

pub fn stream_rng(seed: u64, stream: Stream) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream as u64);
    rng
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NavError {
    #[error("no path to goal")]
    NoPath,
    #[error("battery depleted")]
    BatteryDepleted,
    #[error("robot is not operational")]
    Dead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum InstrumentError {
    #[error("not positioned close enough")]
    Positioning,
    #[error("unreachable target")]
    Unreachable,
    #[error("instrument failure")]
    Failure,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub target_id: u64,
    pub kind: TargetKind,
    pub position: Point2,
}

#[derive(Debug, Clone)]
pub struct Body {
    pub spec: RobotSpec,
    pub pose: Pose2,
    pub battery: f64,
    pub alive: bool,
    route: VecDeque<Point2>,
    twist: Option<(f64, f64)>,
    moving_time: f64,
    /// Total distance travelled, m.
    pub odometer: f64,
    /// Total energy drawn, including any drawn after the battery hit zero.
    pub energy_used: f64,
    unflushed_distance: f64,
    unflushed_area: f64,
}

impl Body {
    fn new(spec: RobotSpec) -> Self {
        Self {
            pose: spec.start,
            battery: spec.battery_capacity,
            alive: true,
            route: VecDeque::new(),
            twist: None,
            moving_time: 0.0,
            odometer: 0.0,
            energy_used: 0.0,
            unflushed_distance: 0.0,
            unflushed_area: 0.0,
            spec,
        }
    }

    pub fn is_moving(&self) -> bool {
        !self.route.is_empty() || self.twist.is_some_and(|(vx, wz)| vx != 0.0 || wz != 0.0)
    }

    /// Remaining length of the current route, m.
    pub fn route_remaining(&self) -> f64 {
        let mut at = self.pose.position();
        let mut total = 0.0;
        for p in &self.route {
            total += at.distance(p);
            at = *p;
        }
        total
    }

    fn drain(&mut self, energy: f64) {
        self.energy_used += energy;
        self.battery = (self.battery - energy).max(0.0);
    }
}

pub struct World {
    terrain: Arc<Terrain>,
    legged: TerrainNav,
    wheeled: TerrainNav,
    coverage: CoverageMap,
    coverage_log: Vec<u32>,
    bodies: BTreeMap<RobotId, Body>,
    targets: Vec<TargetSpec>,
    detected: BTreeSet<u64>,
    instrument: InstrumentConfig,
    sense_interval: f64,
    nav_rng: ChaCha8Rng,
    detect_rng: ChaCha8Rng,
    instrument_rng: ChaCha8Rng,
}

impl World {
    pub fn new(scenario: &Scenario, seed: u64) -> Result<Self, ScenarioError> {
        let terrain = Arc::new(scenario.terrain.build()?);
        let (w, h) = terrain.extent();
        let coverage = CoverageMap::new(terrain.origin(), w, h, scenario.coverage_cell);
        Ok(Self {
            legged: TerrainNav::new(Arc::clone(&terrain), Mobility::Legged),
            wheeled: TerrainNav::new(Arc::clone(&terrain), Mobility::Wheeled),
            terrain,
            coverage,
            coverage_log: Vec::new(),
            bodies: scenario
                .robots
                .iter()
                .map(|r| (r.id.clone(), Body::new(r.clone())))
                .collect(),
            targets: scenario.targets.clone(),
            detected: BTreeSet::new(),
            instrument: scenario.instrument.clone(),
            sense_interval: scenario.executor.sense_interval,
            nav_rng: stream_rng(seed, Stream::Navigation),
            detect_rng: stream_rng(seed, Stream::Detection),
            instrument_rng: stream_rng(seed, Stream::Instrument),
        })
    }

    pub fn terrain(&self) -> &Terrain {
        &self.terrain
    }

    pub fn nav(&self, mobility: Mobility) -> &TerrainNav {
        match mobility {
            Mobility::Legged => &self.legged,
            Mobility::Wheeled => &self.wheeled,
        }
    }

    pub fn coverage(&self) -> &CoverageMap {
        &self.coverage
    }

    /// Every newly covered cell index in the order it was covered.
    pub fn coverage_log(&self) -> &[u32] {
        &self.coverage_log
    }

    pub fn body(&self, id: &RobotId) -> Option<&Body> {
        self.bodies.get(id)
    }

    pub fn bodies(&self) -> impl Iterator<Item = (&RobotId, &Body)> {
        self.bodies.iter()
    }

    pub fn detected(&self) -> &BTreeSet<u64> {
        &self.detected
    }

    fn body_mut(&mut self, id: &RobotId) -> &mut Body {
        self.bodies.get_mut(id).expect("known robot")
    }

    /// Plans a route to `goal`. With `noisy`, the robot actually ends up at a
    /// goal perturbed by its navigation noise. Returns the point it will reach.
    pub fn navigate(
        &mut self,
        id: &RobotId,
        goal: Point2,
        noisy: bool,
    ) -> Result<Point2, NavError> {
        let body = &self.bodies[id];
        if !body.alive {
            return Err(NavError::Dead);
        }
        if body.battery <= 0.0 {
            return Err(NavError::BatteryDepleted);
        }
        let mobility = body.spec.mobility;
        let sigma = body.spec.nav_noise;
        let mut actual = goal;
        if noisy && sigma > 0.0 {
            let normal = Normal::new(0.0, sigma).expect("valid sigma");
            let p = Point2::new(
                goal.x + normal.sample(&mut self.nav_rng),
                goal.y + normal.sample(&mut self.nav_rng),
            );
            if self.terrain.traversable_at(p, mobility) {
                actual = p;
            }
        }
        let from = body.pose.position();
        let path = self
            .nav(mobility)
            .path(from, actual)
            .ok_or(NavError::NoPath)?;
        let body = self.body_mut(id);
        body.twist = None;
        body.route = path.into_iter().skip(1).collect();
        Ok(actual)
    }

    pub fn stop(&mut self, id: &RobotId) {
        let body = self.body_mut(id);
        body.route.clear();
        body.twist = None;
    }

    /// Holds a velocity command until replaced; clears any route.
    pub fn set_twist(&mut self, id: &RobotId, vx: f64, wz: f64) {
        let body = self.body_mut(id);
        body.route.clear();
        body.twist = Some((vx, wz));
    }

    pub fn face(&mut self, id: &RobotId, point: Point2) {
        let body = self.body_mut(id);
        let p = body.pose.position();
        if p.distance(&point) > 1e-9 {
            body.pose.theta = (point.y - p.y).atan2(point.x - p.x);
        }
    }

    pub fn turn(&mut self, id: &RobotId, angle: f64) {
        let body = self.body_mut(id);
        body.pose.theta = wrap_angle(body.pose.theta + angle);
    }

    /// Integrates one step of motion and returns targets sensed on the way.
    pub fn advance(&mut self, id: &RobotId, dt: f64) -> Vec<Detection> {
        let terrain = Arc::clone(&self.terrain);
        let cell_area = self.coverage.cell_area();
        let body = self.bodies.get_mut(id).expect("known robot");
        if !body.alive || !body.is_moving() || body.battery <= 0.0 {
            return Vec::new();
        }
        let speed = body.spec.cruise_speed;
        let radius = body.spec.sensing_radius;
        let maps = body.spec.role == RobotRole::Scout;
        let mut segments = Vec::new();

        if let Some((vx, wz)) = body.twist {
            let vx = vx.clamp(-speed, speed);
            let theta = wrap_angle(body.pose.theta + wz * dt);
            let from = body.pose.position();
            let to = Point2::new(
                from.x + vx * dt * theta.cos(),
                from.y + vx * dt * theta.sin(),
            );
            body.pose.theta = theta;
            if terrain.traversable_at(to, body.spec.mobility) {
                body.pose.x = to.x;
                body.pose.y = to.y;
                segments.push((from, to));
            }
        } else {
            let mut budget = speed * dt;
            while budget > 0.0 {
                let Some(&next) = body.route.front() else {
                    break;
                };
                let from = body.pose.position();
                let d = from.distance(&next);
                let to = if d <= budget {
                    body.route.pop_front();
                    next
                } else {
                    let f = budget / d;
                    Point2::new(
                        from.x + (next.x - from.x) * f,
                        from.y + (next.y - from.y) * f,
                    )
                };
                budget -= d.min(budget);
                if d > 0.0 {
                    body.pose.theta = (next.y - from.y).atan2(next.x - from.x);
                }
                body.pose.x = to.x;
                body.pose.y = to.y;
                segments.push((from, to));
            }
        }

        let moved: f64 = segments.iter().map(|(a, b)| a.distance(b)).sum();
        body.odometer += moved;
        body.unflushed_distance += moved;
        let energy = body.spec.battery.move_cost(moved);
        body.drain(energy);
        if body.battery <= 0.0 {
            body.route.clear();
            body.twist = None;
        }

        if maps {
            let mut added = 0;
            for (a, b) in &segments {
                added += self.coverage.cover_segment(*a, *b, radius);
            }
            self.coverage_log.extend(self.coverage.take_changes());
            self.bodies.get_mut(id).expect("known robot").unflushed_area +=
                added as f64 * cell_area;
        }

        let body = self.bodies.get_mut(id).expect("known robot");
        if !body.spec.detection || moved <= 0.0 {
            return Vec::new();
        }
        body.moving_time += dt;
        if body.moving_time + 1e-9 >= self.sense_interval {
            body.moving_time = 0.0;
            self.sense(id)
        } else {
            Vec::new()
        }
    }

    /// One sensing pass from the current pose. Each undetected target in range
    /// is detected with its detectability; a target is detected at most once.
    pub fn sense(&mut self, id: &RobotId) -> Vec<Detection> {
        let body = &self.bodies[id];
        if !body.alive || !body.spec.detection {
            return Vec::new();
        }
        let p = body.pose.position();
        let r = body.spec.sensing_radius;
        let mut out = Vec::new();
        for t in &self.targets {
            if self.detected.contains(&t.id) || t.position.distance(&p) > r {
                continue;
            }
            if self.detect_rng.random::<f64>() < t.detectability {
                self.detected.insert(t.id);
                out.push(Detection {
                    target_id: t.id,
                    kind: t.kind,
                    position: t.position,
                });
            }
        }
        out
    }

    /// A stationary sweep: covers the sensing disk and runs a sensing pass.
    pub fn scan(&mut self, id: &RobotId) -> Vec<Detection> {
        let body = &self.bodies[id];
        if !body.alive {
            return Vec::new();
        }
        if body.spec.role == RobotRole::Scout {
            let added = self
                .coverage
                .cover_disk(body.pose.position(), body.spec.sensing_radius);
            self.coverage_log.extend(self.coverage.take_changes());
            let area = added as f64 * self.coverage.cell_area();
            self.body_mut(id).unflushed_area += area;
        }
        self.sense(id)
    }

    /// Charges the fixed energy of a completed task.
    pub fn complete_task(&mut self, id: &RobotId, poi_type: PoiType) {
        let body = self.body_mut(id);
        let e = body.spec.battery.task_cost(poi_type);
        body.drain(e);
    }

    /// Runs the instrument on `point` while the robot is meant to stand at `station`.
    pub fn measure(
        &mut self,
        id: &RobotId,
        station: Point2,
        point: Point2,
        poi_type: PoiType,
    ) -> Result<(), InstrumentError> {
        let p = self.bodies[id].pose.position();
        if p.distance(&station) > self.instrument.tolerance {
            return Err(InstrumentError::Positioning);
        }
        if p.distance(&point) > self.instrument.reach {
            return Err(InstrumentError::Unreachable);
        }
        if self.instrument_rng.random::<f64>() < self.instrument.success_probability(poi_type) {
            Ok(())
        } else {
            Err(InstrumentError::Failure)
        }
    }

    pub fn kill(&mut self, id: &RobotId) {
        let body = self.body_mut(id);
        body.alive = false;
        body.route.clear();
        body.twist = None;
    }

    /// Distance travelled and area newly covered since the last call.
    pub fn take_progress(&mut self, id: &RobotId) -> (f64, f64) {
        let body = self.body_mut(id);
        let out = (body.unflushed_distance, body.unflushed_area);
        body.unflushed_distance = 0.0;
        body.unflushed_area = 0.0;
        out
    }
}

/// Ground point seen at normalized image coordinates `(u, v)`, origin top left.
pub fn camera_point(pose: Pose2, u: f64, v: f64, cfg: &InstrumentConfig) -> Point2 {
    let forward = cfg.standoff + (0.5 - v) * cfg.image_span;
    let lateral = (0.5 - u) * cfg.image_span;
    let (s, c) = pose.theta.sin_cos();
    Point2::new(
        pose.x + forward * c - lateral * s,
        pose.y + forward * s + lateral * c,
    )
}

/// Image coordinates of a ground point, the inverse of [`camera_point`].
pub fn camera_pixel(pose: Pose2, point: Point2, cfg: &InstrumentConfig) -> (f64, f64) {
    let (dx, dy) = (point.x - pose.x, point.y - pose.y);
    let (s, c) = pose.theta.sin_cos();
    let forward = dx * c + dy * s;
    let lateral = -dx * s + dy * c;
    (
        0.5 - lateral / cfg.image_span,
        0.5 - (forward - cfg.standoff) / cfg.image_span,
    )
}
