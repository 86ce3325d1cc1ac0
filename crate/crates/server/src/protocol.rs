//! Operator wire protocol, version "v1". Every WebSocket text frame carries
//! one JSON envelope `{v, seq, t, type, payload}`; frames may also hold
//! several envelopes separated by newlines.

use mosaic_core::kpi::KpiReport;
use mosaic_sim::{CommandError, CommandOutcome, MissionSnapshot, OperatorCommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const PROTOCOL_VERSION: &str = "v1";

/// Command types accepted from a console in addition to operator commands.
pub const SESSION_COMMANDS: [&str; 5] = ["hello", "start", "pause", "resume", "get_kpi"];

/// Operator command types, as they appear in the `type` field.
pub const OPERATOR_COMMANDS: [&str; 11] = [
    "create_poi",
    "move_poi",
    "convert_poi",
    "deactivate_poi",
    "reactivate_poi",
    "set_autonomy_level",
    "twist",
    "pose_goal",
    "abort",
    "confirm_candidate",
    "refine_target",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissionState {
    Loaded,
    Running,
    Paused,
    Finished,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientEnvelope {
    pub v: String,
    pub seq: u64,
    /// Console clock, informational only; commands take effect at receipt.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(default)]
    pub payload: Value,
}

impl ClientEnvelope {
    pub fn new(seq: u64, kind: &str, payload: Value) -> Self {
        Self {
            v: PROTOCOL_VERSION.to_owned(),
            seq,
            t: None,
            kind: kind.to_owned(),
            payload,
        }
    }

    /// Wraps an operator command, moving its tag into the envelope.
    pub fn command(seq: u64, command: &OperatorCommand) -> Self {
        let mut payload = serde_json::to_value(command).expect("commands serialize");
        let kind = payload
            .as_object_mut()
            .and_then(|o| o.remove("type"))
            .and_then(|v| v.as_str().map(str::to_owned))
            .expect("tagged command");
        Self::new(seq, &kind, payload)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum ClientRequest {
    Hello {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        client: Option<String>,
        /// Operator station, e.g. "mission_control" or "science".
        #[serde(default, skip_serializing_if = "Option::is_none")]
        role: Option<String>,
    },
    Start,
    Pause,
    Resume,
    GetKpi,
    Command(OperatorCommand),
}

/// Error reply codes that are not operator command errors.
pub mod codes {
    pub const MALFORMED: &str = "malformed";
    pub const UNSUPPORTED_VERSION: &str = "unsupported_version";
    pub const UNKNOWN_TYPE: &str = "unknown_type";
    pub const INVALID_PAYLOAD: &str = "invalid_payload";
    pub const ILLEGAL_TRANSITION: &str = "illegal_transition";
    pub const KPI_UNAVAILABLE: &str = "kpi_unavailable";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolError {
    pub code: String,
    pub message: String,
}

impl ProtocolError {
    pub fn new(code: &str, message: impl Into<String>) -> Self {
        Self {
            code: code.to_owned(),
            message: message.into(),
        }
    }
}

impl From<CommandError> for ProtocolError {
    fn from(e: CommandError) -> Self {
        Self::new(e.code(), e.to_string())
    }
}

/// Parses one envelope and its payload.
pub fn parse_client(
    text: &str,
) -> Result<(ClientEnvelope, ClientRequest), (Option<u64>, ProtocolError)> {
    let raw: Value = serde_json::from_str(text)
        .map_err(|e| (None, ProtocolError::new(codes::MALFORMED, e.to_string())))?;
    let seq = raw.get("seq").and_then(Value::as_u64);
    let env: ClientEnvelope = serde_json::from_value(raw)
        .map_err(|e| (seq, ProtocolError::new(codes::MALFORMED, e.to_string())))?;
    let seq = Some(env.seq);
    if env.v != PROTOCOL_VERSION {
        return Err((
            seq,
            ProtocolError::new(
                codes::UNSUPPORTED_VERSION,
                format!(
                    "protocol {:?} is not supported, expected {PROTOCOL_VERSION:?}",
                    env.v
                ),
            ),
        ));
    }
    let kind = env.kind.as_str();
    let invalid = |e: serde_json::Error| {
        (
            seq,
            ProtocolError::new(codes::INVALID_PAYLOAD, e.to_string()),
        )
    };
    let request = if SESSION_COMMANDS.contains(&kind) {
        match kind {
            "hello" => {
                #[derive(Deserialize, Default)]
                struct Hello {
                    client: Option<String>,
                    role: Option<String>,
                }
                let h: Hello = if env.payload.is_null() {
                    Hello::default()
                } else {
                    serde_json::from_value(env.payload.clone()).map_err(invalid)?
                };
                ClientRequest::Hello {
                    client: h.client,
                    role: h.role,
                }
            }
            "start" => ClientRequest::Start,
            "pause" => ClientRequest::Pause,
            "resume" => ClientRequest::Resume,
            _ => ClientRequest::GetKpi,
        }
    } else if OPERATOR_COMMANDS.contains(&kind) {
        let mut obj = match env.payload.clone() {
            Value::Object(o) => o,
            Value::Null => Default::default(),
            _ => {
                return Err((
                    seq,
                    ProtocolError::new(codes::INVALID_PAYLOAD, "payload must be an object"),
                ))
            }
        };
        obj.insert("type".to_owned(), Value::String(kind.to_owned()));
        ClientRequest::Command(serde_json::from_value(Value::Object(obj)).map_err(invalid)?)
    } else {
        return Err((
            seq,
            ProtocolError::new(
                codes::UNKNOWN_TYPE,
                format!("unknown message type {kind:?}"),
            ),
        ));
    };
    Ok((env, request))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Welcome {
    pub protocol: String,
    pub scenario: String,
    pub seed: u64,
    pub state: MissionState,
    /// s
    pub duration: f64,
    /// Simulated seconds per wall-clock second.
    pub speed: f64,
    /// Hz
    pub snapshot_rate: f64,
    pub accepts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotPayload {
    /// Broadcast frame number; 0 for a connection's initial full snapshot
    /// taken before any broadcast.
    pub frame: u64,
    pub state: MissionState,
    /// Whether `coverage.added` lists every covered cell.
    pub full: bool,
    #[serde(flatten)]
    pub snapshot: MissionSnapshot,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub ref_seq: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<CommandOutcome>,
    /// The seq was already seen on this connection; nothing was applied.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub duplicate: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorPayload {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_seq: Option<u64>,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePayload {
    pub state: MissionState,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "snake_case")]
pub enum ServerBody {
    Welcome(Welcome),
    Snapshot(Box<SnapshotPayload>),
    Ack(Ack),
    Error(ErrorPayload),
    Kpi(Box<KpiReport>),
    State(StatePayload),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerEnvelope {
    pub v: String,
    pub seq: u64,
    /// Simulation time, s.
    pub t: f64,
    #[serde(flatten)]
    pub body: ServerBody,
}

impl ServerEnvelope {
    pub fn new(seq: u64, t: f64, body: ServerBody) -> Self {
        Self {
            v: PROTOCOL_VERSION.to_owned(),
            seq,
            t,
            body,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("server messages serialize")
    }
}
