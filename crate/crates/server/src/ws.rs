//! WebSocket endpoint: one task per console connection.

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::IntoResponse;
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use tokio::net::TcpListener;
use tokio::sync::broadcast::error::RecvError;

use crate::protocol::{parse_client, Ack, ErrorPayload, ServerBody, ServerEnvelope};
use crate::session::SessionHandle;

pub const WS_PATH: &str = "/v1/ws";

pub fn router(session: SessionHandle) -> Router {
    Router::new()
        .route(WS_PATH, get(upgrade))
        .route("/health", get(|| async { "ok" }))
        .with_state(session)
}

pub async fn serve(listener: TcpListener, session: SessionHandle) -> std::io::Result<()> {
    axum::serve(listener, router(session)).await
}

async fn upgrade(ws: WebSocketUpgrade, State(session): State<SessionHandle>) -> impl IntoResponse {
    ws.on_upgrade(move |socket| connection(socket, session))
}

struct Outbox {
    seq: u64,
}

impl Outbox {
    fn wrap(&mut self, t: f64, body: ServerBody) -> Message {
        self.seq += 1;
        Message::Text(ServerEnvelope::new(self.seq, t, body).to_json().into())
    }
}

async fn connection(socket: WebSocket, session: SessionHandle) {
    let (mut tx, mut rx) = socket.split();
    let mut frames = session.subscribe();
    let mut out = Outbox { seq: 0 };
    let Some((welcome, full)) = session.join().await else {
        return;
    };
    let mut last_frame = match &full.body {
        ServerBody::Snapshot(s) => s.frame,
        _ => 0,
    };
    for (t, body) in [(full.t, ServerBody::Welcome(welcome)), (full.t, full.body)] {
        if tx.send(out.wrap(t, body)).await.is_err() {
            return;
        }
    }
    let mut last_seq: Option<u64> = None;
    let mut now = full.t;
    loop {
        tokio::select! {
            incoming = rx.next() => {
                let text = match incoming {
                    Some(Ok(Message::Text(text))) => text,
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                for line in text.lines().filter(|l| !l.trim().is_empty()) {
                    let (t, body) = match parse_client(line) {
                        Err((ref_seq, e)) => (
                            now,
                            ServerBody::Error(ErrorPayload { ref_seq, code: e.code, message: e.message }),
                        ),
                        Ok((env, _)) if last_seq.is_some_and(|s| env.seq <= s) => (
                            now,
                            ServerBody::Ack(Ack { ref_seq: env.seq, result: None, duplicate: true }),
                        ),
                        Ok((env, request)) => {
                            last_seq = Some(env.seq);
                            match session.request(env.seq, request).await {
                                Some(reply) => reply,
                                None => return,
                            }
                        }
                    };
                    now = now.max(t);
                    if tx.send(out.wrap(t, body)).await.is_err() {
                        return;
                    }
                }
            }
            frame = frames.recv() => {
                let frame = match frame {
                    Ok(frame) => frame,
                    Err(RecvError::Lagged(_)) => {
                        // deltas were missed; resynchronise with a full snapshot
                        let Some((_, full)) = session.join().await else { return };
                        if let ServerBody::Snapshot(s) = &full.body {
                            last_frame = s.frame;
                        }
                        if tx.send(out.wrap(full.t, full.body)).await.is_err() {
                            return;
                        }
                        continue;
                    }
                    Err(RecvError::Closed) => break,
                };
                if let ServerBody::Snapshot(s) = &frame.body {
                    if s.frame <= last_frame {
                        continue;
                    }
                    last_frame = s.frame;
                }
                now = now.max(frame.t);
                if tx.send(out.wrap(frame.t, frame.body.clone())).await.is_err() {
                    return;
                }
            }
        }
    }
}
