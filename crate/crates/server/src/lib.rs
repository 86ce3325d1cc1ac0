//! Live mission control service: the v1 operator wire protocol, the mission
//! loop that owns the simulation, and the WebSocket endpoint consoles use.

pub mod protocol;
pub mod session;
pub mod ws;

pub use protocol::{
    ClientEnvelope, ClientRequest, MissionState, ServerBody, ServerEnvelope, PROTOCOL_VERSION,
};
pub use session::{SessionConfig, SessionHandle, SessionOutcome};
pub use ws::{router, serve, WS_PATH};
