//! Per-robot executive: a behavior tree that plans, claims and executes POIs,
//! plus the messages it exchanges with mission control.

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::FRAC_PI_2;
use std::sync::Arc;

use mosaic_core::comms::DataProduct;
use mosaic_core::events::{AutonomyLevel, EventKind, MissionEvent, RobotActivity, TargetKind};
use mosaic_core::planner::{self, Plan, RobotPlanningModel};
use mosaic_core::registry::PoiSnapshot;
use mosaic_core::utility::RobotStateEstimate;
use mosaic_core::{Poi, PoiId, PoiType, Point2, Pose2, RobotId};
use serde::{Deserialize, Serialize};

use crate::bt::{BehaviorNodeState, Blackboard, Node, Status};
use crate::scenario::{RobotSpec, Scenario};
use crate::world::{camera_point, Detection, World};

const EPS: f64 = 1e-9;

/// Robot to mission control.
#[derive(Debug, Clone, PartialEq)]
pub enum ToMc {
    Claim {
        poi_id: PoiId,
    },
    Free {
        poi_id: PoiId,
        success: bool,
        detail: Option<String>,
    },
    Deactivate {
        poi_id: PoiId,
    },
    RecordUtility {
        poi_id: PoiId,
        value: f64,
    },
    Propose {
        target_id: u64,
        kind: TargetKind,
        position: Point2,
    },
    ConfirmRequest {
        poi_id: PoiId,
    },
    TargetRequest {
        poi_id: PoiId,
    },
}

/// Mission control or operator to robot.
#[derive(Debug, Clone, PartialEq)]
pub enum ToRobot {
    ClaimReply { poi_id: PoiId, granted: bool },
    PoiList(Arc<PoiSnapshot>),
    Level(AutonomyLevel),
    Twist { vx: f64, wz: f64 },
    PoseGoal(Pose2),
    Abort,
    Decision { poi_id: PoiId, confirmed: bool },
    Target { poi_id: PoiId, point: Point2 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotStatus {
    pub robot: RobotId,
    pub pose: Pose2,
    pub battery: f64,
    pub activity: RobotActivity,
    pub level: AutonomyLevel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<PoiId>,
    pub behavior: Vec<BehaviorNodeState>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    Send(ToMc),
    Sync(DataProduct),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    GetBestPoi,
    ClaimPoi,
    Navigate,
    CheckArrival,
    Rotate,
    CaptureImage,
    AwaitConfirmation,
    AcquireTarget,
    Measure,
    FreeSuccess,
    FreeFailed,
    Deactivate,
}

const TASK_SWITCH: &str = "ExecuteTask";

fn leaf(a: Action) -> Node<Action> {
    Node::action(format!("{a:?}"), a)
}

/// The executive tree. The task switch picks one branch per POI type.
pub fn build_tree() -> Node<Action> {
    use Action::*;
    let task = Node::switch(
        TASK_SWITCH,
        vec![
            Node::sequence("MoveTask", vec![leaf(Navigate), leaf(CheckArrival)]),
            Node::sequence(
                "ExplorationTask",
                vec![
                    leaf(Navigate),
                    leaf(CheckArrival),
                    leaf(Rotate),
                    leaf(Rotate),
                    leaf(Rotate),
                    leaf(Rotate),
                ],
            ),
            Node::sequence(
                "CandidateTask",
                vec![
                    leaf(Navigate),
                    leaf(CheckArrival),
                    leaf(CaptureImage),
                    leaf(AwaitConfirmation),
                ],
            ),
            Node::sequence(
                "MeasurementTask",
                vec![leaf(Navigate), leaf(AcquireTarget), leaf(Measure)],
            ),
        ],
    );
    Node::sequence(
        "Main",
        vec![
            leaf(GetBestPoi),
            leaf(ClaimPoi),
            Node::fallback(
                "Execute",
                vec![
                    Node::sequence("Complete", vec![task, leaf(FreeSuccess), leaf(Deactivate)]),
                    leaf(FreeFailed),
                ],
            ),
        ],
    )
}

#[derive(Debug, Clone)]
struct NavProgress {
    best: f64,
    since: f64,
    tripped: bool,
}

#[derive(Debug)]
struct ExecState {
    spec: RobotSpec,
    level: AutonomyLevel,
    snapshot: Option<Arc<PoiSnapshot>>,
    snapshot_fresh: bool,
    completed: BTreeSet<PoiId>,
    plan: Option<Plan>,
    plan_idle: bool,
    plan_ready_at: f64,
    candidate: Option<Poi>,
    task: Option<Poi>,
    station: Option<Point2>,
    deadline: Option<f64>,
    awaiting_claim: Option<PoiId>,
    claim_reply: Option<bool>,
    abandoned_claims: BTreeSet<PoiId>,
    decisions: BTreeMap<PoiId, bool>,
    targets: BTreeMap<PoiId, Point2>,
    measure_point: Option<Point2>,
    fail_detail: Option<String>,
    skip_deactivate: bool,
    nav: Option<NavProgress>,
    nav_invalidated: bool,
    paused_at: Option<f64>,
    effects: Vec<Effect>,
    watchdog_trips: u32,
}

impl ExecState {
    fn send(&mut self, m: ToMc) {
        self.effects.push(Effect::Send(m));
    }

    fn clear_task(&mut self) {
        self.task = None;
        self.candidate = None;
        self.station = None;
        self.deadline = None;
        self.measure_point = None;
        self.fail_detail = None;
        self.skip_deactivate = false;
        self.nav = None;
        self.nav_invalidated = false;
    }
}

pub struct Executive {
    tree: Node<Action>,
    s: ExecState,
}

struct Ctx<'a> {
    s: &'a mut ExecState,
    world: &'a mut World,
    sc: &'a Scenario,
    now: f64,
    log: &'a mut Vec<MissionEvent>,
}

impl Executive {
    pub fn new(spec: RobotSpec) -> Self {
        Self {
            tree: build_tree(),
            s: ExecState {
                spec,
                level: AutonomyLevel::Mission,
                snapshot: None,
                snapshot_fresh: false,
                completed: BTreeSet::new(),
                plan: None,
                plan_idle: false,
                plan_ready_at: 0.0,
                candidate: None,
                task: None,
                station: None,
                deadline: None,
                awaiting_claim: None,
                claim_reply: None,
                abandoned_claims: BTreeSet::new(),
                decisions: BTreeMap::new(),
                targets: BTreeMap::new(),
                measure_point: None,
                fail_detail: None,
                skip_deactivate: false,
                nav: None,
                nav_invalidated: false,
                paused_at: None,
                effects: Vec::new(),
                watchdog_trips: 0,
            },
        }
    }

    pub fn id(&self) -> &RobotId {
        &self.s.spec.id
    }

    pub fn level(&self) -> AutonomyLevel {
        self.s.level
    }

    pub fn task(&self) -> Option<PoiId> {
        self.s.task.as_ref().map(|p| p.id)
    }

    pub fn watchdog_trips(&self) -> u32 {
        self.s.watchdog_trips
    }

    pub fn behavior(&self) -> Vec<BehaviorNodeState> {
        self.tree.states()
    }

    pub fn running_leaf(&self) -> Option<&str> {
        self.tree.running_leaf()
    }

    pub fn activity(&self) -> RobotActivity {
        if self.s.level != AutonomyLevel::Mission {
            return RobotActivity::Teleop;
        }
        match self.tree.running_leaf() {
            None => RobotActivity::Idle,
            Some("GetBestPoi") if self.s.plan_idle => RobotActivity::Idle,
            Some("GetBestPoi" | "ClaimPoi") => RobotActivity::Planning,
            Some(_) => RobotActivity::Executing,
        }
    }

    /// Waiting in MISSION level with nothing worth doing.
    pub fn is_idle(&self) -> bool {
        self.s.level == AutonomyLevel::Mission
            && self.tree.running_leaf() == Some("GetBestPoi")
            && self.s.plan_idle
    }

    pub fn take_effects(&mut self) -> Vec<Effect> {
        std::mem::take(&mut self.s.effects)
    }

    pub fn status(&self, world: &World) -> RobotStatus {
        let body = world.body(self.id()).expect("known robot");
        RobotStatus {
            robot: self.id().clone(),
            pose: body.pose,
            battery: body.battery,
            activity: self.activity(),
            level: self.s.level,
            task: self.task(),
            behavior: self.behavior(),
        }
    }

    pub fn on_detections(&mut self, detections: Vec<Detection>) {
        for d in detections {
            self.s.send(ToMc::Propose {
                target_id: d.target_id,
                kind: d.kind,
                position: d.position,
            });
        }
    }

    /// Runs the tree once if the robot is under autonomous control.
    pub fn tick(
        &mut self,
        world: &mut World,
        sc: &Scenario,
        now: f64,
        log: &mut Vec<MissionEvent>,
    ) {
        if self.s.level != AutonomyLevel::Mission {
            return;
        }
        let mut ctx = Ctx {
            s: &mut self.s,
            world,
            sc,
            now,
            log,
        };
        if self.tree.tick(&mut ctx).is_done() {
            self.tree.tick(&mut ctx);
        }
    }

    pub fn handle(&mut self, msg: ToRobot, world: &mut World, now: f64) {
        let s = &mut self.s;
        let id = s.spec.id.clone();
        match msg {
            ToRobot::PoiList(snapshot) => {
                s.snapshot = Some(snapshot);
                s.snapshot_fresh = true;
            }
            ToRobot::ClaimReply { poi_id, granted } => {
                if s.awaiting_claim == Some(poi_id) {
                    s.claim_reply = Some(granted);
                } else if granted {
                    s.abandoned_claims.remove(&poi_id);
                    s.send(ToMc::Free {
                        poi_id,
                        success: false,
                        detail: Some("claim abandoned".to_owned()),
                    });
                }
            }
            ToRobot::Level(level) => {
                let old = s.level;
                s.level = level;
                if old == level {
                    return;
                }
                world.stop(&id);
                if old == AutonomyLevel::Mission {
                    s.paused_at = Some(now);
                    s.nav_invalidated = s.nav.is_some();
                } else if level == AutonomyLevel::Mission {
                    let paused = now - s.paused_at.take().unwrap_or(now);
                    if let Some(d) = s.deadline.as_mut() {
                        *d += paused;
                    }
                    s.plan_ready_at += paused;
                    if let Some(n) = s.nav.as_mut() {
                        n.since += paused;
                    }
                    s.snapshot_fresh = true;
                }
            }
            ToRobot::Twist { vx, wz } => {
                if s.level == AutonomyLevel::Driver {
                    world.set_twist(&id, vx, wz);
                }
            }
            ToRobot::PoseGoal(pose) => {
                if s.level == AutonomyLevel::Task {
                    // an unreachable goal leaves the robot where it is
                    let _ = world.navigate(&id, pose.position(), false);
                }
            }
            ToRobot::Abort => {
                world.stop(&id);
                if let Some(task) = s.task.take() {
                    s.send(ToMc::Free {
                        poi_id: task.id,
                        success: false,
                        detail: Some("aborted by operator".to_owned()),
                    });
                }
                if let Some(poi) = s.awaiting_claim.take() {
                    s.abandoned_claims.insert(poi);
                }
                s.clear_task();
                s.plan = None;
                s.plan_idle = false;
                self.tree.reset();
            }
            ToRobot::Decision { poi_id, confirmed } => {
                s.decisions.insert(poi_id, confirmed);
            }
            ToRobot::Target { poi_id, point } => {
                s.targets.insert(poi_id, point);
            }
        }
    }
}

fn branch_for(t: PoiType) -> usize {
    match t {
        PoiType::Move => 0,
        PoiType::Exploration => 1,
        PoiType::RockCandidate => 2,
        PoiType::GroundMeasurement | PoiType::RockMeasurement => 3,
    }
}

impl Ctx<'_> {
    fn id(&self) -> RobotId {
        self.s.spec.id.clone()
    }

    fn pose(&self) -> Pose2 {
        self.world.body(&self.s.spec.id).expect("known robot").pose
    }

    /// Starts a dwell on the first tick and reports whether it has elapsed.
    fn dwell(&mut self, resumed: bool, duration: f64) -> bool {
        if !resumed || self.s.deadline.is_none() {
            self.s.deadline = Some(self.now + duration);
        }
        if self.now + EPS >= self.s.deadline.expect("set above") {
            self.s.deadline = None;
            true
        } else {
            false
        }
    }

    fn fail(&mut self, detail: impl Into<String>) -> Status {
        self.s.fail_detail = Some(detail.into());
        Status::Failure
    }

    fn start_planning(&mut self) {
        let s = &mut *self.s;
        s.snapshot_fresh = false;
        let candidates: Vec<Poi> = s
            .snapshot
            .as_ref()
            .map(|snap| {
                snap.pois
                    .iter()
                    .filter(|p| !s.completed.contains(&p.id))
                    .cloned()
                    .collect()
            })
            .unwrap_or_default();
        let body = self.world.body(&s.spec.id).expect("known robot");
        let start = RobotStateEstimate {
            position: body.pose.position(),
            battery_remaining: body.battery,
            time: self.now,
        };
        let motion = s.spec.motion();
        let model = RobotPlanningModel {
            robot: &s.spec.id,
            weights: &s.spec.weights,
            battery: &s.spec.battery,
            motion: &motion,
        };
        let nav = self.world.nav(s.spec.mobility);
        let plan = planner::plan(model, start, &candidates, &self.sc.planner, nav, self.now);
        let cfg = &self.sc.executor;
        s.candidate = plan
            .first()
            .and_then(|step| candidates.iter().find(|p| p.id == step.poi_id))
            .cloned();
        if plan.is_empty() {
            s.plan_idle = true;
            s.plan_ready_at = self.now + cfg.idle_poll;
        } else {
            s.plan_idle = false;
            s.plan_ready_at =
                self.now + cfg.planning_base + cfg.planning_per_eval * plan.evaluated as f64;
        }
        s.plan = Some(plan);
    }

    fn get_best_poi(&mut self, resumed: bool) -> Status {
        if !resumed {
            self.s.clear_task();
            self.start_planning();
        } else if self.s.plan_idle {
            if self.s.snapshot_fresh || self.now + EPS >= self.s.plan_ready_at {
                self.start_planning();
            }
            return Status::Running;
        }
        if self.s.plan_idle || self.now + EPS < self.s.plan_ready_at {
            return Status::Running;
        }
        let plan = self.s.plan.take().expect("plan computed");
        self.log.push(MissionEvent::plan(self.now, &plan));
        let first = plan.first().expect("non-empty plan");
        self.s.send(ToMc::RecordUtility {
            poi_id: first.poi_id,
            value: first.raw_utility,
        });
        Status::Success
    }

    fn claim_poi(&mut self, resumed: bool) -> Status {
        let Some(poi_id) = self.s.candidate.as_ref().map(|p| p.id) else {
            return Status::Failure;
        };
        if !resumed {
            self.s.send(ToMc::Claim { poi_id });
            self.s.awaiting_claim = Some(poi_id);
            self.s.claim_reply = None;
            self.s.deadline = Some(self.now + self.sc.executor.claim_timeout);
            return Status::Running;
        }
        match self.s.claim_reply.take() {
            Some(true) => {
                self.s.awaiting_claim = None;
                self.s.deadline = None;
                self.s.task = self.s.candidate.take();
                Status::Success
            }
            Some(false) => {
                self.s.awaiting_claim = None;
                self.s.clear_task();
                Status::Failure
            }
            None if self.now + EPS >= self.s.deadline.unwrap_or(f64::INFINITY) => {
                self.s.awaiting_claim = None;
                self.s.abandoned_claims.insert(poi_id);
                self.s.clear_task();
                Status::Failure
            }
            None => Status::Running,
        }
    }

    /// Where the robot should stand for `task`: on the POI, or at the
    /// instrument standoff short of it for measurements.
    fn station_for(&self, task: &Poi) -> Point2 {
        let goal = task.pose.position();
        if !task.poi_type.is_measurement() {
            return goal;
        }
        let here = self.pose().position();
        let d = here.distance(&goal);
        let standoff = self.sc.instrument.standoff;
        if d <= standoff + EPS {
            return here;
        }
        let f = standoff / d;
        let p = Point2::new(
            goal.x - (goal.x - here.x) * f,
            goal.y - (goal.y - here.y) * f,
        );
        if self.world.terrain().traversable_at(p, self.s.spec.mobility) {
            p
        } else {
            goal
        }
    }

    fn navigate(&mut self, resumed: bool) -> Status {
        let Some(task) = self.s.task.clone() else {
            return self.fail("no task");
        };
        let id = self.id();
        if !resumed || self.s.nav_invalidated {
            self.s.nav_invalidated = false;
            let station = self.station_for(&task);
            self.s.station = Some(station);
            if let Err(e) = self.world.navigate(&id, station, true) {
                self.s.nav = None;
                return self.fail(e.to_string());
            }
            let best = self.world.body(&id).expect("known robot").route_remaining();
            self.s.nav = Some(NavProgress {
                best,
                since: self.now,
                tripped: false,
            });
        }
        let body = self.world.body(&id).expect("known robot");
        if !body.is_moving() {
            self.s.nav = None;
            if body.battery <= 0.0 {
                return self.fail("battery depleted");
            }
            if task.poi_type.is_measurement() {
                self.world.face(&id, task.pose.position());
            }
            return Status::Success;
        }
        let remaining = body.route_remaining();
        let watchdog = self.sc.executor.watchdog;
        let nav = self.s.nav.as_mut().expect("navigation started");
        if remaining < nav.best - 1e-6 {
            nav.best = remaining;
            nav.since = self.now;
        } else if self.now - nav.since > watchdog && !nav.tripped {
            nav.tripped = true;
            self.s.watchdog_trips += 1;
        }
        Status::Running
    }

    fn check_arrival(&mut self) -> Status {
        let station = self.s.station.unwrap_or_else(|| self.pose().position());
        if self.pose().position().distance(&station) <= self.sc.executor.arrival_tolerance {
            Status::Success
        } else {
            self.fail("arrival check failed")
        }
    }

    fn rotate(&mut self, resumed: bool) -> Status {
        if !self.dwell(resumed, self.s.spec.rotation_dwell) {
            return Status::Running;
        }
        let id = self.id();
        self.world.turn(&id, FRAC_PI_2);
        let detections = self.world.scan(&id);
        for d in detections {
            self.s.send(ToMc::Propose {
                target_id: d.target_id,
                kind: d.kind,
                position: d.position,
            });
        }
        Status::Success
    }

    fn capture_image(&mut self, resumed: bool) -> Status {
        let duration = self.s.spec.task_duration.get(PoiType::RockCandidate);
        if !self.dwell(resumed, duration) {
            return Status::Running;
        }
        let poi_id = self.s.task.as_ref().expect("claimed").id;
        self.s.send(ToMc::ConfirmRequest { poi_id });
        Status::Success
    }

    fn await_confirmation(&mut self, resumed: bool) -> Status {
        let poi_id = self.s.task.as_ref().expect("claimed").id;
        if !resumed || self.s.deadline.is_none() {
            self.s.deadline = Some(self.now + self.sc.operator.confirm_timeout);
        }
        if let Some(confirmed) = self.s.decisions.remove(&poi_id) {
            self.s.deadline = None;
            self.s.skip_deactivate = confirmed;
            return Status::Success;
        }
        if self.now + EPS >= self.s.deadline.expect("set above") {
            self.s.deadline = None;
            return self.fail("confirmation timeout");
        }
        Status::Running
    }

    fn acquire_target(&mut self, resumed: bool) -> Status {
        let poi_id = self.s.task.as_ref().expect("claimed").id;
        let default = camera_point(self.pose(), 0.5, 0.5, &self.sc.instrument);
        if !self.s.spec.refine_targets {
            self.s.measure_point = Some(default);
            return Status::Success;
        }
        if !resumed || self.s.deadline.is_none() {
            self.s.send(ToMc::TargetRequest { poi_id });
            self.s.deadline = Some(self.now + self.sc.operator.target_timeout);
        }
        if let Some(p) = self.s.targets.remove(&poi_id) {
            self.s.deadline = None;
            self.s.measure_point = Some(p);
            return Status::Success;
        }
        if self.now + EPS >= self.s.deadline.expect("set above") {
            self.s.deadline = None;
            self.s.measure_point = Some(default);
            return Status::Success;
        }
        Status::Running
    }

    fn measure(&mut self, resumed: bool) -> Status {
        let task = self.s.task.clone().expect("claimed");
        if !self.dwell(resumed, self.s.spec.task_duration.get(task.poi_type)) {
            return Status::Running;
        }
        let id = self.id();
        let station = self.s.station.unwrap_or_else(|| self.pose().position());
        let point = self.s.measure_point.unwrap_or_else(|| task.pose.position());
        let result = self.world.measure(&id, station, point, task.poi_type);
        self.log.push(MissionEvent::by_robot(
            self.now,
            &id,
            EventKind::Measurement {
                poi_id: task.id,
                poi_type: task.poi_type,
                success: result.is_ok(),
                detail: match &result {
                    Ok(()) => "ok".to_owned(),
                    Err(e) => e.to_string(),
                },
            },
        ));
        match result {
            Ok(()) => {
                self.s.effects.push(Effect::Sync(DataProduct {
                    name: format!(
                        "{}-{}-{}",
                        id,
                        task.poi_type.as_str().to_lowercase(),
                        task.id
                    ),
                    bytes: self.sc.instrument.product_bytes(task.poi_type),
                }));
                Status::Success
            }
            Err(e) => self.fail(e.to_string()),
        }
    }

    fn free(&mut self, success: bool) -> Status {
        let Some(task) = self.s.task.clone() else {
            return Status::Success;
        };
        if success {
            let id = self.id();
            self.world.complete_task(&id, task.poi_type);
            self.s.completed.insert(task.id);
            self.s.send(ToMc::Free {
                poi_id: task.id,
                success: true,
                detail: None,
            });
        } else {
            let detail = self
                .s
                .fail_detail
                .take()
                .unwrap_or_else(|| "task failed".to_owned());
            self.s.send(ToMc::Free {
                poi_id: task.id,
                success: false,
                detail: Some(detail),
            });
            self.s.clear_task();
        }
        Status::Success
    }

    fn deactivate(&mut self) -> Status {
        if let Some(task) = self.s.task.clone() {
            if !self.s.skip_deactivate {
                self.s.send(ToMc::Deactivate { poi_id: task.id });
            }
        }
        self.s.clear_task();
        Status::Success
    }
}

impl Blackboard<Action> for Ctx<'_> {
    fn run(&mut self, action: &Action, resumed: bool) -> Status {
        match action {
            Action::GetBestPoi => self.get_best_poi(resumed),
            Action::ClaimPoi => self.claim_poi(resumed),
            Action::Navigate => self.navigate(resumed),
            Action::CheckArrival => self.check_arrival(),
            Action::Rotate => self.rotate(resumed),
            Action::CaptureImage => self.capture_image(resumed),
            Action::AwaitConfirmation => self.await_confirmation(resumed),
            Action::AcquireTarget => self.acquire_target(resumed),
            Action::Measure => self.measure(resumed),
            Action::FreeSuccess => self.free(true),
            Action::FreeFailed => self.free(false),
            Action::Deactivate => self.deactivate(),
        }
    }

    fn select(&mut self, name: &str) -> Option<usize> {
        debug_assert_eq!(name, TASK_SWITCH);
        self.s.task.as_ref().map(|t| branch_for(t.poi_type))
    }
}
