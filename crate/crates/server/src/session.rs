//! The live mission loop. One task owns the [`Mission`] and is its only
//! writer; connections talk to it over a command queue and receive immutable
//! snapshots over a broadcast channel.

use std::collections::VecDeque;
use std::sync::Arc;
use std::time::Duration;

use mosaic_core::events::{EventKind, MissionEvent};
use mosaic_core::kpi::KpiReport;
use mosaic_core::registry::JournalEntry;
use mosaic_sim::{Mission, ScriptEntry};
use tokio::sync::{broadcast, mpsc, oneshot, watch};
use tokio::time::{interval, Instant, MissedTickBehavior};

use crate::protocol::{
    codes, Ack, ClientRequest, ErrorPayload, MissionState, ProtocolError, ServerBody,
    SnapshotPayload, StatePayload, Welcome, OPERATOR_COMMANDS, PROTOCOL_VERSION, SESSION_COMMANDS,
};

#[derive(Debug, Clone)]
pub struct SessionConfig {
    /// Simulated seconds per wall-clock second.
    pub speed: f64,
    /// Wall-clock period of the simulation loop.
    pub step: Duration,
    /// Minimum wall-clock spacing of broadcast snapshots.
    pub snapshot_period: Duration,
    /// Start running immediately instead of waiting for a `start` command.
    pub autostart: bool,
    /// Recorded operator commands injected when the clock reaches them.
    pub script: Vec<ScriptEntry>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            speed: 1.0,
            step: Duration::from_millis(50),
            snapshot_period: Duration::from_millis(200),
            autostart: true,
            script: Vec::new(),
        }
    }
}

/// One broadcast message with the simulation time it describes.
#[derive(Debug, Clone)]
pub struct Frame {
    pub t: f64,
    pub body: ServerBody,
}

/// Everything a finished session leaves behind.
#[derive(Debug, Clone)]
pub struct SessionOutcome {
    pub log: Vec<MissionEvent>,
    /// Operator commands accepted, with their application times.
    pub applied: Vec<ScriptEntry>,
    pub journal: Vec<JournalEntry>,
    pub report: Option<KpiReport>,
    pub end_reason: String,
}

impl SessionOutcome {
    /// The log without pause annotations, as a headless replay produces it.
    pub fn replayable_log(&self) -> Vec<MissionEvent> {
        without_pauses(&self.log)
    }
}

pub fn without_pauses(log: &[MissionEvent]) -> Vec<MissionEvent> {
    log.iter()
        .filter(|e| !matches!(e.kind, EventKind::Paused | EventKind::Resumed))
        .cloned()
        .collect()
}

enum LoopRequest {
    Client {
        seq: u64,
        request: ClientRequest,
        reply: oneshot::Sender<(f64, ServerBody)>,
    },
    Join {
        reply: oneshot::Sender<(Welcome, Frame)>,
    },
}

/// Cloneable handle to a running session.
#[derive(Clone)]
pub struct SessionHandle {
    requests: mpsc::Sender<LoopRequest>,
    frames: broadcast::Sender<Arc<Frame>>,
    outcome: watch::Receiver<Option<Arc<SessionOutcome>>>,
}

impl SessionHandle {
    /// Starts the mission loop on the current tokio runtime.
    pub fn spawn(mission: Mission, seed: u64, config: SessionConfig) -> Self {
        let (requests, rx) = mpsc::channel(256);
        let (frames, _) = broadcast::channel(256);
        let (outcome_tx, outcome) = watch::channel(None);
        let state = if config.autostart {
            MissionState::Running
        } else {
            MissionState::Loaded
        };
        let script = config.script.iter().cloned().collect();
        let runner = Runner {
            mission,
            script,
            seed,
            state,
            config,
            frames: frames.clone(),
            frame: 0,
            cursor: 0,
            dirty: true,
            outcome: outcome_tx,
        };
        tokio::spawn(runner.run(rx));
        Self {
            requests,
            frames,
            outcome,
        }
    }

    pub fn subscribe(&self) -> broadcast::Receiver<Arc<Frame>> {
        self.frames.subscribe()
    }

    /// Session description and a full snapshot taken at one instant.
    pub async fn join(&self) -> Option<(Welcome, Frame)> {
        let (reply, rx) = oneshot::channel();
        self.requests.send(LoopRequest::Join { reply }).await.ok()?;
        rx.await.ok()
    }

    /// Submits one request and returns the reply with its simulation time.
    pub async fn request(&self, seq: u64, request: ClientRequest) -> Option<(f64, ServerBody)> {
        let (reply, rx) = oneshot::channel();
        self.requests
            .send(LoopRequest::Client {
                seq,
                request,
                reply,
            })
            .await
            .ok()?;
        rx.await.ok()
    }

    /// Waits until the mission has finished.
    pub async fn finished(&self) -> Arc<SessionOutcome> {
        let mut rx = self.outcome.clone();
        let done = rx
            .wait_for(Option::is_some)
            .await
            .expect("session loop alive");
        Arc::clone(done.as_ref().expect("checked"))
    }
}

struct Runner {
    mission: Mission,
    script: VecDeque<ScriptEntry>,
    seed: u64,
    state: MissionState,
    config: SessionConfig,
    frames: broadcast::Sender<Arc<Frame>>,
    frame: u64,
    cursor: usize,
    dirty: bool,
    outcome: watch::Sender<Option<Arc<SessionOutcome>>>,
}

impl Runner {
    async fn run(mut self, mut rx: mpsc::Receiver<LoopRequest>) {
        let mut ticker = interval(self.config.step);
        ticker.set_missed_tick_behavior(MissedTickBehavior::Delay);
        let sim_step = self.config.speed * self.config.step.as_secs_f64();
        let mut last_snapshot: Option<Instant> = None;
        loop {
            tokio::select! {
                _ = ticker.tick() => {
                    if self.state == MissionState::Running {
                        let target = self.mission.time() + sim_step;
                        self.advance(target);
                        self.dirty = true;
                        if self.mission.is_over() {
                            self.finish();
                        }
                    }
                }
                req = rx.recv() => match req {
                    Some(req) => self.handle(req),
                    None => break,
                },
            }
            let due = last_snapshot.is_none_or(|at| at.elapsed() >= self.config.snapshot_period);
            if self.dirty && due {
                self.broadcast_snapshot();
                last_snapshot = Some(Instant::now());
            }
        }
    }

    fn advance(&mut self, target: f64) {
        while self.script.front().is_some_and(|e| e.t <= target) {
            let entry = self.script.pop_front().expect("checked");
            self.mission.step_to(entry.t);
            // rejected script lines are skipped, as in headless replay
            let _ = self.mission.apply_operator(entry.command);
        }
        self.mission.step_to(target);
    }

    fn welcome(&self) -> Welcome {
        let mut accepts: Vec<String> = SESSION_COMMANDS.iter().map(|s| s.to_string()).collect();
        accepts.extend(OPERATOR_COMMANDS.iter().map(|s| s.to_string()));
        Welcome {
            protocol: PROTOCOL_VERSION.to_owned(),
            scenario: self.mission.scenario().name.clone(),
            seed: self.seed,
            state: self.state,
            duration: self.mission.duration(),
            speed: self.config.speed,
            snapshot_rate: 1.0 / self.config.snapshot_period.as_secs_f64(),
            accepts,
        }
    }

    fn snapshot(&self, since: usize, frame: u64) -> Frame {
        let snapshot = self.mission.snapshot(since);
        Frame {
            t: snapshot.t,
            body: ServerBody::Snapshot(Box::new(SnapshotPayload {
                frame,
                state: self.state,
                full: since == 0,
                snapshot,
            })),
        }
    }

    fn broadcast_snapshot(&mut self) {
        self.frame += 1;
        let frame = self.snapshot(self.cursor, self.frame);
        if let ServerBody::Snapshot(s) = &frame.body {
            self.cursor = s.snapshot.coverage.cursor;
        }
        self.dirty = false;
        // no receivers is fine
        let _ = self.frames.send(Arc::new(frame));
    }

    fn broadcast_state(&mut self) {
        let body = ServerBody::State(StatePayload {
            state: self.state,
            end_reason: self.mission.end_reason().map(str::to_owned),
        });
        let _ = self.frames.send(Arc::new(Frame {
            t: self.mission.time(),
            body,
        }));
        self.dirty = true;
    }

    fn finish(&mut self) {
        self.state = MissionState::Finished;
        self.broadcast_state();
        self.broadcast_snapshot();
        let outcome = SessionOutcome {
            log: self.mission.log().to_vec(),
            applied: self.mission.applied_commands().to_vec(),
            journal: self.mission.registry().journal().to_vec(),
            report: self.mission.report().ok(),
            end_reason: self.mission.end_reason().unwrap_or_default().to_owned(),
        };
        self.outcome.send_replace(Some(Arc::new(outcome)));
    }

    fn transition(&mut self, to: MissionState) -> Result<(), ProtocolError> {
        use MissionState::*;
        let legal = matches!(
            (self.state, to),
            (Loaded, Running) | (Running, Paused) | (Paused, Running)
        );
        if !legal {
            return Err(ProtocolError::new(
                codes::ILLEGAL_TRANSITION,
                format!("cannot go from {:?} to {:?}", self.state, to).to_lowercase(),
            ));
        }
        match (self.state, to) {
            (Running, Paused) => self.mission.annotate(EventKind::Paused),
            (Paused, Running) => self.mission.annotate(EventKind::Resumed),
            _ => {}
        }
        self.state = to;
        self.broadcast_state();
        Ok(())
    }

    fn handle(&mut self, req: LoopRequest) {
        match req {
            LoopRequest::Join { reply } => {
                let _ = reply.send((self.welcome(), self.snapshot(0, self.frame)));
            }
            LoopRequest::Client {
                seq,
                request,
                reply,
            } => {
                let body = match self.apply(request) {
                    Ok(body) => body.unwrap_or(ServerBody::Ack(Ack {
                        ref_seq: seq,
                        result: None,
                        duplicate: false,
                    })),
                    Err(e) => ServerBody::Error(ErrorPayload {
                        ref_seq: Some(seq),
                        code: e.code,
                        message: e.message,
                    }),
                };
                let body = match body {
                    ServerBody::Ack(mut ack) => {
                        ack.ref_seq = seq;
                        ServerBody::Ack(ack)
                    }
                    other => other,
                };
                let _ = reply.send((self.mission.time(), body));
            }
        }
    }

    fn apply(&mut self, request: ClientRequest) -> Result<Option<ServerBody>, ProtocolError> {
        match request {
            ClientRequest::Hello { .. } => Ok(Some(ServerBody::Welcome(self.welcome()))),
            ClientRequest::Start => self.transition(MissionState::Running).map(|_| None),
            ClientRequest::Pause => self.transition(MissionState::Paused).map(|_| None),
            ClientRequest::Resume => self.transition(MissionState::Running).map(|_| None),
            ClientRequest::GetKpi => self
                .mission
                .report()
                .map(|r| Some(ServerBody::Kpi(Box::new(r))))
                .map_err(|e| ProtocolError::new(codes::KPI_UNAVAILABLE, e.to_string())),
            ClientRequest::Command(command) => {
                let outcome = self.mission.apply_operator(command)?;
                self.dirty = true;
                Ok(Some(ServerBody::Ack(Ack {
                    ref_seq: 0,
                    result: Some(outcome),
                    duplicate: false,
                })))
            }
        }
    }
}
