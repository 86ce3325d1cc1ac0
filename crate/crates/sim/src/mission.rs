//! Mission control and the simulation loop. Robots run at a fixed 10 Hz tick;
//! messages, operator decisions, data syncs and robot failures are events on
//! one time-ordered queue.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use mosaic_core::comms::{
    robot_domain, ChannelStats, DataSync, DomainBridge, Network, QosProfile, Route, SHARED_DOMAIN,
};
use mosaic_core::events::{
    AutonomyLevel, EventKind, MissionEvent, RobotActivity, RobotRole, TargetKind,
    EVENT_SCHEMA_VERSION,
};
use mosaic_core::kpi::{KpiError, KpiReport};
use mosaic_core::registry::{FreeOutcome, JournalEntry, RegistryCommand};
use mosaic_core::utility::{detailed_utility, RobotStateEstimate};
use mosaic_core::{Actor, Poi, PoiId, PoiRegistry, PoiType, Point2, Pose2, RobotId};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coverage::CoverageGrid;
use crate::executor::{Effect, Executive, RobotStatus, ToMc, ToRobot};
use crate::operator::{CommandError, CommandOutcome, OperatorCommand, ScriptEntry};
use crate::queue::EventQueue;
use crate::scenario::{OperatorMode, Scenario, ScenarioError};
use crate::world::{camera_pixel, camera_point, stream_rng, Stream, World};

pub const TICK: f64 = 0.1;
const TICKS_PER_SECOND: u64 = 10;

pub const CH_POI_CMD: &str = "poi_cmd";
pub const CH_POI_REPLY: &str = "poi_reply";
pub const CH_POI_LIST: &str = "poi_list";
pub const CH_OPERATOR: &str = "operator";
pub const CH_STATUS: &str = "status";

const MC_SENDER: &str = mosaic_core::events::ACTOR_SYSTEM;
const COMMAND_BYTES: usize = 96;
const STATUS_BYTES: usize = 512;
const POI_BYTES: usize = 160;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Kpi(#[from] KpiError),
}

#[derive(Debug, Clone)]
enum Wire {
    ToMc(RobotId, ToMc),
    Status(Box<RobotStatus>),
    ToRobot(RobotId, ToRobot),
}

#[derive(Debug, Clone)]
enum AutoAction {
    Confirm {
        poi_id: PoiId,
        confirmed: bool,
    },
    Refine {
        poi_id: PoiId,
    },
    CreateGround {
        target_id: u64,
        position: Point2,
        detected_at: f64,
    },
    Troubleshoot {
        robot: RobotId,
        start: f64,
    },
}

#[derive(Debug)]
enum Event {
    Deliver { wire: Wire, tracked: bool },
    Kill(RobotId),
    SyncDone(u64),
    Auto(AutoAction),
}

/// Mission control's view of one robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotView {
    pub id: RobotId,
    pub role: RobotRole,
    /// False once mission control has declared the robot lost.
    pub alive: bool,
    /// Commanded autonomy level.
    pub level: AutonomyLevel,
    /// Last status received.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<RobotStatus>,
    pub last_seen: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RequestKind {
    Confirm,
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingRequest {
    pub kind: RequestKind,
    pub poi_id: PoiId,
    pub robot: RobotId,
    pub since: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionView {
    pub t: f64,
    pub robot: RobotId,
    pub target_id: u64,
    pub kind: TargetKind,
    pub position: Point2,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poi_id: Option<PoiId>,
}

/// Coverage cells added since a client's cursor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageUpdate {
    pub grid: CoverageGrid,
    /// Pass back as `since` to receive only later cells.
    pub cursor: usize,
    pub added: Vec<u32>,
    /// m²
    pub covered_area: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoiView {
    #[serde(flatten)]
    pub poi: Poi,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_id: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MissionSnapshot {
    pub t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ended: Option<String>,
    pub robots: Vec<RobotView>,
    pub pois: Vec<PoiView>,
    pub pending: Vec<PendingRequest>,
    pub detections: Vec<DetectionView>,
    pub coverage: CoverageUpdate,
}

#[derive(Debug, Clone)]
pub struct MissionResult {
    pub log: Vec<MissionEvent>,
    pub report: KpiReport,
    pub journal: Vec<JournalEntry>,
    /// Operator commands accepted, with their application times.
    pub applied: Vec<ScriptEntry>,
    pub end_reason: String,
    pub watchdog_trips: u32,
}

#[derive(Debug, Clone)]
struct Request {
    robot: RobotId,
    since: f64,
}

pub struct Mission {
    scenario: Scenario,
    duration: f64,
    t: f64,
    tick: u64,
    status_every: u64,
    world: World,
    registry: PoiRegistry,
    net: Network<Wire>,
    sync: DataSync,
    queue: EventQueue<Event>,
    execs: BTreeMap<RobotId, Executive>,
    alive: BTreeSet<RobotId>,
    views: BTreeMap<RobotId, RobotView>,
    teleop_since: BTreeMap<RobotId, f64>,
    confirms: BTreeMap<PoiId, Request>,
    target_requests: BTreeMap<PoiId, Request>,
    pending_conversion: BTreeSet<PoiId>,
    poi_targets: BTreeMap<PoiId, u64>,
    detections: Vec<DetectionView>,
    dirty: bool,
    in_flight: usize,
    pending_ops: usize,
    spans: BTreeMap<RobotId, (RobotActivity, f64)>,
    planning_tripped: BTreeSet<RobotId>,
    planning_trips: u32,
    operator_rng: ChaCha8Rng,
    applied: Vec<ScriptEntry>,
    log: Vec<MissionEvent>,
    end_reason: Option<String>,
}

impl Mission {
    pub fn new(scenario: Scenario, seed: u64) -> Result<Self, ScenarioError> {
        scenario.validate()?;
        let world = World::new(&scenario, seed)?;

        let mut net = Network::new(stream_rng(seed, Stream::Comms).random());
        for ch in [CH_POI_CMD, CH_POI_REPLY, CH_OPERATOR] {
            net.register_channel(SHARED_DOMAIN, ch, QosProfile::reliable());
        }
        net.register_channel(
            SHARED_DOMAIN,
            CH_POI_LIST,
            QosProfile::reliable().transient_local(),
        );
        for r in &scenario.robots {
            let domain = robot_domain(r.id.as_str());
            net.register_channel(&domain, CH_STATUS, QosProfile::best_effort());
            net.set_link(r.id.as_str(), scenario.comms.link_for(&r.id).clone())
                .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
            net.add_bridge(
                DomainBridge::new(domain, SHARED_DOMAIN, Some(r.id.0.clone()))
                    .relay(CH_STATUS, None),
            )
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        }

        let mut log = vec![MissionEvent::by_system(
            0.0,
            None,
            EventKind::MissionStart {
                schema: EVENT_SCHEMA_VERSION,
                scenario: scenario.name.clone(),
                seed,
                robots: scenario.roster(),
            },
        )];

        let mut registry = PoiRegistry::new();
        let mut poi_targets = BTreeMap::new();
        for p in &scenario.pois {
            let poi = registry
                .create_poi(p.pose, p.poi_type, p.mission_value)
                .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
            if let Some(target) = p.target_id {
                poi_targets.insert(poi.id, target);
            }
            log.push(MissionEvent::by_operator(
                0.0,
                None,
                EventKind::Create {
                    poi_id: poi.id,
                    poi_type: poi.poi_type,
                    pose: poi.pose,
                    mission_value: poi.mission_value,
                    target_id: p.target_id,
                },
            ));
        }

        let mut queue = EventQueue::new();
        for r in &scenario.robots {
            if let Some(at) = r.fail_at {
                queue.push(at, Event::Kill(r.id.clone()));
            }
        }

        let status_every = ((scenario.comms.status_period / TICK).round() as u64).max(1);
        Ok(Self {
            duration: scenario.duration,
            t: 0.0,
            tick: 0,
            status_every,
            world,
            registry,
            net,
            sync: DataSync::new(scenario.comms.sync_bandwidth),
            queue,
            execs: scenario
                .robots
                .iter()
                .map(|r| (r.id.clone(), Executive::new(r.clone())))
                .collect(),
            alive: scenario.robots.iter().map(|r| r.id.clone()).collect(),
            views: scenario
                .robots
                .iter()
                .map(|r| {
                    let view = RobotView {
                        id: r.id.clone(),
                        role: r.role,
                        alive: true,
                        level: AutonomyLevel::Mission,
                        status: None,
                        last_seen: 0.0,
                    };
                    (r.id.clone(), view)
                })
                .collect(),
            teleop_since: BTreeMap::new(),
            confirms: BTreeMap::new(),
            target_requests: BTreeMap::new(),
            pending_conversion: BTreeSet::new(),
            poi_targets,
            detections: Vec::new(),
            dirty: true,
            in_flight: 0,
            pending_ops: 0,
            spans: scenario
                .robots
                .iter()
                .map(|r| (r.id.clone(), (RobotActivity::Idle, 0.0)))
                .collect(),
            planning_tripped: BTreeSet::new(),
            planning_trips: 0,
            operator_rng: stream_rng(seed, Stream::Operator),
            applied: Vec::new(),
            log,
            end_reason: None,
            scenario,
        })
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn set_duration(&mut self, duration: f64) {
        self.duration = duration.max(self.t);
    }

    pub fn is_over(&self) -> bool {
        self.end_reason.is_some()
    }

    pub fn end_reason(&self) -> Option<&str> {
        self.end_reason.as_deref()
    }

    pub fn log(&self) -> &[MissionEvent] {
        &self.log
    }

    pub fn registry(&self) -> &PoiRegistry {
        &self.registry
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn executive(&self, id: &RobotId) -> Option<&Executive> {
        self.execs.get(id)
    }

    /// Operator commands accepted from outside, with the time they applied.
    pub fn applied_commands(&self) -> &[ScriptEntry] {
        &self.applied
    }

    pub fn comms_stats(&self) -> Vec<ChannelStats> {
        self.net.stats()
    }

    pub fn watchdog_trips(&self) -> u32 {
        self.planning_trips
            + self
                .execs
                .values()
                .map(Executive::watchdog_trips)
                .sum::<u32>()
    }

    /// Adds an event that is not part of the mission dynamics, such as a pause.
    pub fn annotate(&mut self, kind: EventKind) {
        self.log.push(MissionEvent::by_operator(self.t, None, kind));
    }

    /// Advances the simulation to `target`, or to the end of the mission.
    /// Ticks run before queue events due at the same instant.
    pub fn step_to(&mut self, target: f64) {
        let target = target.min(self.duration);
        while self.end_reason.is_none() {
            let tick_t = self.tick as f64 / TICKS_PER_SECOND as f64;
            let event_t = self.queue.peek_time();
            if tick_t <= target && event_t.is_none_or(|e| tick_t <= e) {
                self.t = tick_t;
                self.do_tick();
                self.tick += 1;
                continue;
            }
            match self.queue.pop_due(target) {
                Some((at, event)) => {
                    self.t = at;
                    self.handle(event);
                }
                None => break,
            }
        }
        if self.end_reason.is_none() {
            self.t = self.t.max(target);
            if target >= self.duration {
                self.finish("duration");
            }
        }
    }

    pub fn run_to_end(&mut self) {
        self.step_to(self.duration);
    }

    fn do_tick(&mut self) {
        let now = self.t;
        let ids: Vec<RobotId> = self.alive.iter().cloned().collect();
        for id in &ids {
            let detections = self.world.advance(id, TICK);
            let exec = self.execs.get_mut(id).expect("known robot");
            exec.on_detections(detections);
            exec.tick(&mut self.world, &self.scenario, now, &mut self.log);
            self.dispatch(id);
            self.update_span(id);
        }
        if self.tick.is_multiple_of(self.status_every) {
            for id in &ids {
                self.send_status(id);
            }
        }
        if self.dirty {
            self.publish_poi_list();
        }
        if self.tick > 0 && self.tick.is_multiple_of(TICKS_PER_SECOND) {
            self.flush_progress();
            self.check_liveness();
            if self.scenario.stop_when_exhausted && self.exhausted() {
                self.finish("exhausted");
            }
        }
    }

    fn distance_to_lander(&self, id: &RobotId) -> f64 {
        self.world
            .body(id)
            .map_or(0.0, |b| b.pose.position().distance(&self.scenario.lander))
    }

    fn deliver(&mut self, at: Option<f64>, wire: Wire, tracked: bool) {
        if let Some(at) = at {
            if tracked {
                self.in_flight += 1;
            }
            self.queue.push(at, Event::Deliver { wire, tracked });
        }
    }

    fn send_to_mc(&mut self, robot: &RobotId, msg: ToMc) {
        let route = Route {
            domain: SHARED_DOMAIN,
            channel: CH_POI_CMD,
            sender: robot.as_str(),
            link: Some(robot.as_str()),
            distance: self.distance_to_lander(robot),
        };
        let wire = Wire::ToMc(robot.clone(), msg);
        let env = self
            .net
            .send(route, wire, COMMAND_BYTES, self.t)
            .expect("registered channel");
        let first = env.into_iter().next().expect("addressed envelope");
        self.deliver(first.deliver_at, first.payload, true);
    }

    fn send_to_robot(&mut self, robot: &RobotId, channel: &str, msg: ToRobot, bytes: usize) {
        if !self.views[robot].alive {
            return;
        }
        let route = Route {
            domain: SHARED_DOMAIN,
            channel,
            sender: MC_SENDER,
            link: Some(robot.as_str()),
            distance: self.distance_to_lander(robot),
        };
        let wire = Wire::ToRobot(robot.clone(), msg);
        let env = self
            .net
            .send(route, wire, bytes, self.t)
            .expect("registered channel");
        let first = env.into_iter().next().expect("addressed envelope");
        self.deliver(first.deliver_at, first.payload, true);
    }

    fn send_status(&mut self, id: &RobotId) {
        let status = self.execs[id].status(&self.world);
        let domain = robot_domain(id.as_str());
        let route = Route {
            domain: &domain,
            channel: CH_STATUS,
            sender: id.as_str(),
            link: None,
            distance: self.distance_to_lander(id),
        };
        let env = self
            .net
            .send(route, Wire::Status(Box::new(status)), STATUS_BYTES, self.t)
            .expect("registered channel");
        if let Some(bridged) = env.into_iter().nth(1) {
            self.deliver(bridged.deliver_at, bridged.payload, false);
        }
    }

    fn publish_poi_list(&mut self) {
        self.dirty = false;
        self.registry.set_time(self.t).expect("monotone clock");
        let snapshot = Arc::new(
            self.registry
                .list_active(self.scenario.planner.staleness_horizon),
        );
        let bytes = 64 + POI_BYTES * snapshot.len();
        let ids: Vec<RobotId> = self
            .views
            .values()
            .filter(|v| v.alive)
            .map(|v| v.id.clone())
            .collect();
        for id in ids {
            self.send_to_robot(
                &id,
                CH_POI_LIST,
                ToRobot::PoiList(Arc::clone(&snapshot)),
                bytes,
            );
        }
    }

    fn dispatch(&mut self, id: &RobotId) {
        let effects = self.execs.get_mut(id).expect("known robot").take_effects();
        for effect in effects {
            match effect {
                Effect::Send(msg) => self.send_to_mc(id, msg),
                Effect::Sync(product) => {
                    let outages = self
                        .net
                        .link(id.as_str())
                        .map(|l| l.outages())
                        .unwrap_or_default();
                    let ticket = self.sync.submit(id.as_str(), product, self.t, &outages);
                    if ticket.completes_at.is_finite() {
                        self.queue
                            .push(ticket.completes_at, Event::SyncDone(ticket.id));
                    }
                }
            }
        }
    }

    fn update_span(&mut self, id: &RobotId) {
        let activity = if self.alive.contains(id) {
            self.execs[id].activity()
        } else {
            RobotActivity::Idle
        };
        let now = self.t;
        let (current, start) = self.spans[id];
        if activity != current {
            if now > start {
                self.log.push(MissionEvent::by_robot(
                    now,
                    id,
                    EventKind::StateSpan {
                        state: current,
                        start,
                        end: now,
                    },
                ));
            }
            self.spans.insert(id.clone(), (activity, now));
            self.planning_tripped.remove(id);
        } else if activity == RobotActivity::Planning
            && now - start > self.scenario.executor.watchdog
            && self.planning_tripped.insert(id.clone())
        {
            self.planning_trips += 1;
        }
    }

    fn schedule(&mut self, at: f64, action: AutoAction) {
        self.pending_ops += 1;
        self.queue.push(at, Event::Auto(action));
    }

    fn handle(&mut self, event: Event) {
        match event {
            Event::Deliver { wire, tracked } => {
                if tracked {
                    self.in_flight -= 1;
                }
                match wire {
                    Wire::ToMc(robot, msg) => self.mc_handle(&robot, msg),
                    Wire::Status(status) => {
                        let robot = status.robot.clone();
                        let view = self.views.get_mut(&robot).expect("known robot");
                        view.last_seen = self.t;
                        view.status = Some(*status);
                        if !view.alive {
                            view.alive = true;
                            self.dirty = true;
                        }
                    }
                    Wire::ToRobot(robot, msg) => {
                        if self.alive.contains(&robot) {
                            let exec = self.execs.get_mut(&robot).expect("known robot");
                            exec.handle(msg, &mut self.world, self.t);
                            self.dispatch(&robot);
                        }
                    }
                }
            }
            Event::Kill(id) => self.kill(&id),
            Event::SyncDone(ticket) => {
                if let Some(done) = self.sync.complete(ticket) {
                    let robot = RobotId::new(done.robot.clone());
                    self.log.push(MissionEvent::by_robot(
                        self.t,
                        &robot,
                        EventKind::SyncComplete {
                            product: done.product.name,
                            bytes: done.product.bytes,
                        },
                    ));
                }
            }
            Event::Auto(action) => {
                self.pending_ops -= 1;
                self.auto_action(action);
            }
        }
    }

    fn mc_handle(&mut self, robot: &RobotId, msg: ToMc) {
        if !self.views[robot].alive {
            return;
        }
        let now = self.t;
        self.registry.set_time(now).expect("monotone clock");
        match msg {
            ToMc::Claim { poi_id } => {
                let granted = self.registry.claim_poi(poi_id, robot).is_ok();
                self.log.push(MissionEvent::by_robot(
                    now,
                    robot,
                    EventKind::Claim { poi_id, granted },
                ));
                self.send_to_robot(
                    robot,
                    CH_POI_REPLY,
                    ToRobot::ClaimReply { poi_id, granted },
                    COMMAND_BYTES,
                );
                self.dirty |= granted;
            }
            ToMc::Free {
                poi_id,
                success,
                detail,
            } => {
                let outcome = if success {
                    FreeOutcome::Success
                } else {
                    FreeOutcome::Failed
                };
                if self.registry.free_poi(poi_id, robot, outcome).is_err() {
                    return;
                }
                self.log.push(MissionEvent::by_robot(
                    now,
                    robot,
                    EventKind::Free {
                        poi_id,
                        success,
                        detail,
                    },
                ));
                self.dirty = true;
                if !success {
                    let start = now;
                    let end = now + self.scenario.operator.troubleshoot_time;
                    self.schedule(
                        end,
                        AutoAction::Troubleshoot {
                            robot: robot.clone(),
                            start,
                        },
                    );
                }
                if success && self.pending_conversion.remove(&poi_id) {
                    let from = self.registry.get(poi_id).map(|p| p.poi_type);
                    if self
                        .registry
                        .convert_poi(poi_id, Actor::Operator, PoiType::RockMeasurement)
                        .is_ok()
                    {
                        self.log.push(MissionEvent::by_operator(
                            now,
                            None,
                            EventKind::Convert {
                                poi_id,
                                from: from.unwrap_or(PoiType::RockCandidate),
                                to: PoiType::RockMeasurement,
                            },
                        ));
                    }
                }
            }
            ToMc::Deactivate { poi_id } => {
                if self
                    .registry
                    .deactivate_poi(poi_id, Actor::Robot(robot.clone()))
                    .is_ok()
                {
                    self.log.push(MissionEvent::by_robot(
                        now,
                        robot,
                        EventKind::Deactivate { poi_id },
                    ));
                    self.dirty = true;
                }
            }
            ToMc::RecordUtility { poi_id, value } => {
                if self.registry.record_utility(poi_id, robot, value).is_ok() {
                    self.dirty = true;
                }
            }
            ToMc::Propose {
                target_id,
                kind,
                position,
            } => {
                let mut view = DetectionView {
                    t: now,
                    robot: robot.clone(),
                    target_id,
                    kind,
                    position,
                    poi_id: None,
                };
                if kind == TargetKind::Rock {
                    let pose = Pose2::new(position.x, position.y, 0.0);
                    if let Ok(poi) = self.registry.propose_candidate(robot, pose, 1.0) {
                        self.poi_targets.insert(poi.id, target_id);
                        view.poi_id = Some(poi.id);
                        self.log.push(MissionEvent::by_robot(
                            now,
                            robot,
                            EventKind::Create {
                                poi_id: poi.id,
                                poi_type: poi.poi_type,
                                pose: poi.pose,
                                mission_value: poi.mission_value,
                                target_id: Some(target_id),
                            },
                        ));
                        self.dirty = true;
                    }
                } else if self.scenario.operator.mode == OperatorMode::Auto {
                    self.schedule(
                        now + self.scenario.operator.sand_delay,
                        AutoAction::CreateGround {
                            target_id,
                            position,
                            detected_at: now,
                        },
                    );
                }
                self.log.push(MissionEvent::by_robot(
                    now,
                    robot,
                    EventKind::Detection {
                        target_id,
                        target_kind: kind,
                        poi_id: view.poi_id,
                    },
                ));
                self.detections.push(view);
            }
            ToMc::ConfirmRequest { poi_id } => {
                self.confirms.insert(
                    poi_id,
                    Request {
                        robot: robot.clone(),
                        since: now,
                    },
                );
                if self.scenario.operator.mode == OperatorMode::Auto {
                    let confirmed = self.operator_rng.random::<f64>()
                        < self.scenario.operator.confirm_probability;
                    self.schedule(
                        now + self.scenario.operator.confirm_delay,
                        AutoAction::Confirm { poi_id, confirmed },
                    );
                }
            }
            ToMc::TargetRequest { poi_id } => {
                self.target_requests.insert(
                    poi_id,
                    Request {
                        robot: robot.clone(),
                        since: now,
                    },
                );
                if self.scenario.operator.mode == OperatorMode::Auto {
                    self.schedule(
                        now + self.scenario.operator.target_delay,
                        AutoAction::Refine { poi_id },
                    );
                }
            }
        }
    }

    fn auto_action(&mut self, action: AutoAction) {
        match action {
            AutoAction::Confirm { poi_id, confirmed } => {
                let _ = self.apply(OperatorCommand::ConfirmCandidate { poi_id, confirmed });
            }
            AutoAction::Refine { poi_id } => {
                let Some(req) = self.target_requests.get(&poi_id) else {
                    return;
                };
                let pose = self.robot_pose(&req.robot);
                let aim = self
                    .poi_targets
                    .get(&poi_id)
                    .and_then(|t| self.scenario.targets.iter().find(|x| x.id == *t))
                    .map(|t| t.position)
                    .or_else(|| self.registry.get(poi_id).map(|p| p.pose.position()));
                let (u, v) = aim.map_or((0.5, 0.5), |p| {
                    camera_pixel(pose, p, &self.scenario.instrument)
                });
                let (u, v) = (u.clamp(0.0, 1.0), v.clamp(0.0, 1.0));
                if self
                    .apply(OperatorCommand::RefineTarget { poi_id, u, v })
                    .is_err()
                {
                    let _ = self.apply(OperatorCommand::RefineTarget {
                        poi_id,
                        u: 0.5,
                        v: 0.5,
                    });
                }
            }
            AutoAction::CreateGround {
                target_id,
                position,
                detected_at,
            } => {
                let created = self.apply(OperatorCommand::CreatePoi {
                    pose: Pose2::new(position.x, position.y, 0.0),
                    poi_type: PoiType::GroundMeasurement,
                    mission_value: 1.0,
                    target_id: Some(target_id),
                });
                if created.is_ok() {
                    self.log.push(MissionEvent::by_operator(
                        self.t,
                        None,
                        EventKind::MonitorSpan {
                            start: detected_at,
                            end: self.t,
                        },
                    ));
                }
            }
            AutoAction::Troubleshoot { robot, start } => {
                self.log.push(MissionEvent::by_operator(
                    self.t,
                    Some(&robot),
                    EventKind::TroubleshootSpan { start, end: self.t },
                ));
            }
        }
    }

    /// Mission control's best knowledge of a robot's pose.
    fn robot_pose(&self, id: &RobotId) -> Pose2 {
        self.views
            .get(id)
            .and_then(|v| v.status.as_ref())
            .map(|s| s.pose)
            .or_else(|| self.world.body(id).map(|b| b.pose))
            .unwrap_or_default()
    }

    /// Applies a console or script command at the current mission time.
    pub fn apply_operator(
        &mut self,
        command: OperatorCommand,
    ) -> Result<CommandOutcome, CommandError> {
        let outcome = self.apply(command.clone())?;
        self.applied.push(ScriptEntry { t: self.t, command });
        Ok(outcome)
    }

    fn check_robot(&self, robot: &RobotId) -> Result<&RobotView, CommandError> {
        let view = self
            .views
            .get(robot)
            .ok_or_else(|| CommandError::UnknownRobot(robot.clone()))?;
        if !view.alive {
            return Err(CommandError::RobotLost(robot.clone()));
        }
        Ok(view)
    }

    fn require_level(
        &self,
        robot: &RobotId,
        command: &'static str,
        required: AutonomyLevel,
    ) -> Result<(), CommandError> {
        let current = self.check_robot(robot)?.level;
        if current != required {
            return Err(CommandError::LevelMismatch {
                robot: robot.clone(),
                command,
                required,
                current,
            });
        }
        Ok(())
    }

    fn op_log(&mut self, robot: Option<&RobotId>, kind: EventKind) {
        self.log
            .push(MissionEvent::by_operator(self.t, robot, kind));
    }

    fn apply(&mut self, command: OperatorCommand) -> Result<CommandOutcome, CommandError> {
        if self.end_reason.is_some() {
            return Err(CommandError::MissionOver);
        }
        self.registry.set_time(self.t).expect("monotone clock");
        let now = self.t;
        match command {
            OperatorCommand::CreatePoi {
                pose,
                poi_type,
                mission_value,
                target_id,
            } => {
                if !pose.is_finite() || !self.world.terrain().contains(pose.position()) {
                    return Err(CommandError::Invalid(
                        "pose outside the mission area".to_owned(),
                    ));
                }
                let poi = self.registry.create_poi(pose, poi_type, mission_value)?;
                if let Some(t) = target_id {
                    self.poi_targets.insert(poi.id, t);
                }
                self.op_log(
                    None,
                    EventKind::Create {
                        poi_id: poi.id,
                        poi_type,
                        pose: poi.pose,
                        mission_value: poi.mission_value,
                        target_id,
                    },
                );
                self.dirty = true;
                return Ok(CommandOutcome::Created { poi_id: poi.id });
            }
            OperatorCommand::MovePoi { poi_id, pose } => {
                if !pose.is_finite() || !self.world.terrain().contains(pose.position()) {
                    return Err(CommandError::Invalid(
                        "pose outside the mission area".to_owned(),
                    ));
                }
                self.registry
                    .apply(RegistryCommand::MovePoi { poi_id, pose })?;
                self.op_log(None, EventKind::MovePoi { poi_id, pose });
                self.dirty = true;
            }
            OperatorCommand::ConvertPoi { poi_id, poi_type } => {
                let from = self
                    .registry
                    .get(poi_id)
                    .map(|p| p.poi_type)
                    .ok_or(mosaic_core::RegistryError::UnknownPoi(poi_id))?;
                self.registry
                    .convert_poi(poi_id, Actor::Operator, poi_type)?;
                self.op_log(
                    None,
                    EventKind::Convert {
                        poi_id,
                        from,
                        to: poi_type,
                    },
                );
                self.dirty = true;
            }
            OperatorCommand::DeactivatePoi { poi_id } => {
                self.registry.deactivate_poi(poi_id, Actor::Operator)?;
                self.op_log(None, EventKind::Deactivate { poi_id });
                self.dirty = true;
            }
            OperatorCommand::ReactivatePoi { poi_id } => {
                self.registry.reactivate_poi(poi_id)?;
                self.op_log(None, EventKind::Reactivate { poi_id });
                self.dirty = true;
            }
            OperatorCommand::SetAutonomyLevel { robot, level } => {
                let from = self.check_robot(&robot)?.level;
                if from == level {
                    return Ok(CommandOutcome::Applied);
                }
                self.views.get_mut(&robot).expect("checked").level = level;
                self.op_log(Some(&robot), EventKind::LevelChange { from, to: level });
                if from == AutonomyLevel::Mission {
                    self.teleop_since.insert(robot.clone(), now);
                } else if level == AutonomyLevel::Mission {
                    self.close_teleop(&robot);
                }
                self.send_to_robot(&robot, CH_OPERATOR, ToRobot::Level(level), COMMAND_BYTES);
            }
            OperatorCommand::Twist { robot, vx, wz } => {
                if !(vx.is_finite() && wz.is_finite()) {
                    return Err(CommandError::Invalid("non-finite velocity".to_owned()));
                }
                self.require_level(&robot, "twist", AutonomyLevel::Driver)?;
                self.op_log(Some(&robot), EventKind::Twist { vx, wz });
                self.send_to_robot(
                    &robot,
                    CH_OPERATOR,
                    ToRobot::Twist { vx, wz },
                    COMMAND_BYTES,
                );
            }
            OperatorCommand::PoseGoal { robot, pose } => {
                if !pose.is_finite() {
                    return Err(CommandError::Invalid("non-finite pose".to_owned()));
                }
                self.require_level(&robot, "pose_goal", AutonomyLevel::Task)?;
                self.op_log(Some(&robot), EventKind::PoseGoal { pose });
                self.send_to_robot(&robot, CH_OPERATOR, ToRobot::PoseGoal(pose), COMMAND_BYTES);
            }
            OperatorCommand::Abort { robot } => {
                self.check_robot(&robot)?;
                self.op_log(Some(&robot), EventKind::Abort);
                self.send_to_robot(&robot, CH_OPERATOR, ToRobot::Abort, COMMAND_BYTES);
            }
            OperatorCommand::ConfirmCandidate { poi_id, confirmed } => {
                let req = self
                    .confirms
                    .remove(&poi_id)
                    .ok_or(CommandError::StaleCandidate(poi_id))?;
                self.op_log(
                    Some(&req.robot),
                    EventKind::CandidateDecision { poi_id, confirmed },
                );
                self.op_log(
                    Some(&req.robot),
                    EventKind::MonitorSpan {
                        start: req.since,
                        end: now,
                    },
                );
                if confirmed {
                    self.pending_conversion.insert(poi_id);
                }
                self.send_to_robot(
                    &req.robot,
                    CH_OPERATOR,
                    ToRobot::Decision { poi_id, confirmed },
                    COMMAND_BYTES,
                );
            }
            OperatorCommand::RefineTarget { poi_id, u, v } => {
                let req = self
                    .target_requests
                    .get(&poi_id)
                    .cloned()
                    .ok_or(CommandError::NoPendingRequest(poi_id))?;
                if !((0.0..=1.0).contains(&u) && (0.0..=1.0).contains(&v)) {
                    return Err(CommandError::Invalid(
                        "image coordinates must lie in [0, 1]".to_owned(),
                    ));
                }
                let pose = self.robot_pose(&req.robot);
                let point = camera_point(pose, u, v, &self.scenario.instrument);
                let distance = point.distance(&pose.position());
                let reach = self.scenario.instrument.reach;
                if distance > reach {
                    return Err(CommandError::OutOfReach { distance, reach });
                }
                self.target_requests.remove(&poi_id);
                self.op_log(Some(&req.robot), EventKind::TargetRefined { poi_id, point });
                self.op_log(
                    Some(&req.robot),
                    EventKind::MonitorSpan {
                        start: req.since,
                        end: now,
                    },
                );
                self.send_to_robot(
                    &req.robot,
                    CH_OPERATOR,
                    ToRobot::Target { poi_id, point },
                    COMMAND_BYTES,
                );
            }
        }
        Ok(CommandOutcome::Applied)
    }

    fn close_teleop(&mut self, robot: &RobotId) {
        if let Some(start) = self.teleop_since.remove(robot) {
            if self.t > start {
                self.op_log(Some(robot), EventKind::TeleopSpan { start, end: self.t });
            }
        }
    }

    fn kill(&mut self, id: &RobotId) {
        if !self.alive.remove(id) {
            return;
        }
        self.world.kill(id);
        self.flush_robot(id);
        self.update_span(id);
        self.sync.abandon_robot(id.as_str());
    }

    fn flush_robot(&mut self, id: &RobotId) {
        let (distance, area) = self.world.take_progress(id);
        if distance > 0.0 {
            self.log.push(MissionEvent::by_robot(
                self.t,
                id,
                EventKind::DistanceDelta { distance },
            ));
        }
        if area > 0.0 {
            self.log.push(MissionEvent::by_robot(
                self.t,
                id,
                EventKind::CoverageDelta { area },
            ));
        }
    }

    fn flush_progress(&mut self) {
        let ids: Vec<RobotId> = self.alive.iter().cloned().collect();
        for id in &ids {
            self.flush_robot(id);
        }
    }

    fn check_liveness(&mut self) {
        let now = self.t;
        let timeout = self.scenario.comms.liveness_timeout;
        let lost: Vec<RobotId> = self
            .views
            .values()
            .filter(|v| v.alive && now - v.last_seen > timeout)
            .map(|v| v.id.clone())
            .collect();
        if lost.is_empty() {
            return;
        }
        self.registry.set_time(now).expect("monotone clock");
        for id in lost {
            self.close_teleop(&id);
            self.views.get_mut(&id).expect("known robot").alive = false;
            self.log.push(MissionEvent::by_system(
                now,
                Some(&id),
                EventKind::RobotDead,
            ));
            let held: Vec<PoiId> = self
                .registry
                .all()
                .filter(|p| p.robot.as_ref() == Some(&id))
                .map(|p| p.id)
                .collect();
            for poi_id in held {
                if self
                    .registry
                    .free_poi(poi_id, &id, FreeOutcome::Failed)
                    .is_ok()
                {
                    self.log.push(MissionEvent::by_system(
                        now,
                        Some(&id),
                        EventKind::Free {
                            poi_id,
                            success: false,
                            detail: Some("robot lost".to_owned()),
                        },
                    ));
                    let end = now + self.scenario.operator.troubleshoot_time;
                    self.schedule(
                        end,
                        AutoAction::Troubleshoot {
                            robot: id.clone(),
                            start: now,
                        },
                    );
                }
            }
            self.confirms.retain(|_, r| r.robot != id);
            self.target_requests.retain(|_, r| r.robot != id);
            self.dirty = true;
        }
    }

    /// True when nothing is left that any robot could still do: every robot
    /// is idle under autonomy, nothing is in flight or awaiting the operator,
    /// and no active POI holds positive utility for any robot.
    fn exhausted(&self) -> bool {
        if self.in_flight > 0 || self.pending_ops > 0 || self.sync.pending() > 0 {
            return false;
        }
        if !self.confirms.is_empty() || !self.target_requests.is_empty() {
            return false;
        }
        for id in &self.alive {
            if !self.execs[id].is_idle() || self.views[id].level != AutonomyLevel::Mission {
                return false;
            }
        }
        if self.registry.all().any(|p| p.robot.is_some()) {
            return false;
        }
        for poi in self.registry.all().filter(|p| p.active) {
            for id in &self.alive {
                let spec = self.scenario.robot(id).expect("known robot");
                let body = self.world.body(id).expect("known robot");
                let state = RobotStateEstimate {
                    position: body.pose.position(),
                    battery_remaining: body.battery,
                    time: self.t,
                };
                let nav = self.world.nav(spec.mobility);
                let u = detailed_utility(id, &state, poi, &spec.weights, nav, &spec.battery);
                if u.feasible && u.total > 0.0 {
                    return false;
                }
            }
        }
        true
    }

    fn finish(&mut self, reason: &str) {
        if self.end_reason.is_some() {
            return;
        }
        let now = self.t;
        for id in self
            .scenario
            .robots
            .iter()
            .map(|r| r.id.clone())
            .collect::<Vec<_>>()
        {
            let (state, start) = self.spans[&id];
            if now > start {
                self.log.push(MissionEvent::by_robot(
                    now,
                    &id,
                    EventKind::StateSpan {
                        state,
                        start,
                        end: now,
                    },
                ));
            }
            self.spans.insert(id.clone(), (state, now));
            self.close_teleop(&id);
            if self.alive.contains(&id) {
                self.flush_robot(&id);
            }
        }
        self.log.push(MissionEvent::by_system(
            now,
            None,
            EventKind::MissionEnd {
                reason: reason.to_owned(),
            },
        ));
        self.end_reason = Some(reason.to_owned());
    }

    pub fn snapshot(&self, coverage_since: usize) -> MissionSnapshot {
        let log = self.world.coverage_log();
        let since = coverage_since.min(log.len());
        let mut pending: Vec<PendingRequest> = self
            .confirms
            .iter()
            .map(|(poi_id, r)| PendingRequest {
                kind: RequestKind::Confirm,
                poi_id: *poi_id,
                robot: r.robot.clone(),
                since: r.since,
            })
            .collect();
        pending.extend(
            self.target_requests
                .iter()
                .map(|(poi_id, r)| PendingRequest {
                    kind: RequestKind::Target,
                    poi_id: *poi_id,
                    robot: r.robot.clone(),
                    since: r.since,
                }),
        );
        MissionSnapshot {
            t: self.t,
            ended: self.end_reason.clone(),
            robots: self.views.values().cloned().collect(),
            pois: self
                .registry
                .all()
                .map(|p| PoiView {
                    poi: p.clone(),
                    target_id: self.poi_targets.get(&p.id).copied(),
                })
                .collect(),
            pending,
            detections: self.detections.clone(),
            coverage: CoverageUpdate {
                grid: self.world.coverage().grid(),
                cursor: log.len(),
                added: log[since..].to_vec(),
                covered_area: self.world.coverage().covered_area(),
            },
        }
    }

    /// KPIs over the log so far, with open activity and teleop spans closed
    /// at the current time.
    pub fn report(&self) -> Result<KpiReport, KpiError> {
        let mut log = self.log.clone();
        if self.end_reason.is_none() {
            for (id, (state, start)) in &self.spans {
                if self.t > *start {
                    log.push(MissionEvent::by_robot(
                        self.t,
                        id,
                        EventKind::StateSpan {
                            state: *state,
                            start: *start,
                            end: self.t,
                        },
                    ));
                }
            }
            for (id, start) in &self.teleop_since {
                if self.t > *start {
                    log.push(MissionEvent::by_operator(
                        self.t,
                        Some(id),
                        EventKind::TeleopSpan {
                            start: *start,
                            end: self.t,
                        },
                    ));
                }
            }
        }
        let mut report = KpiReport::from_log(&log, &self.scenario.target_refs())?;
        report.comms = self.net.stats();
        Ok(report)
    }

    pub fn result(&self) -> Result<MissionResult, SimError> {
        let report = self.report()?;
        Ok(MissionResult {
            log: self.log.clone(),
            report,
            journal: self.registry.journal().to_vec(),
            applied: self.applied_commands().to_vec(),
            end_reason: self.end_reason.clone().unwrap_or_default(),
            watchdog_trips: self.watchdog_trips(),
        })
    }
}

/// Runs a mission without a console, applying `script` at its recorded times.
pub fn run_headless(
    scenario: Scenario,
    seed: u64,
    duration: Option<f64>,
    script: &[ScriptEntry],
) -> Result<MissionResult, SimError> {
    let mut mission = Mission::new(scenario, seed)?;
    if let Some(d) = duration {
        mission.set_duration(d);
    }
    for entry in script {
        mission.step_to(entry.t);
        let _ = mission.apply_operator(entry.command.clone());
    }
    mission.run_to_end();
    mission.result()
}
