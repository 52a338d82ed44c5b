//! Async front end: axum routes around a single kernel task.

use std::net::SocketAddr;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use log::{debug, warn};
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio::task::JoinHandle;

use crate::session::{Accepted, ClientCommand, GatewayError, Session, SnapshotFrame};

pub const HEARTBEAT: Duration = Duration::from_millis(500);
/// How often the kernel task catches up with the wall clock.
pub const PACE: Duration = Duration::from_millis(10);
/// Frames buffered per subscriber before the oldest are dropped.
pub const FRAME_QUEUE: usize = 256;

pub fn wall_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

enum Request {
    Command(ClientCommand, oneshot::Sender<Result<Accepted, GatewayError>>),
    History(String, oneshot::Sender<Result<Value, GatewayError>>),
    Devices(oneshot::Sender<Value>),
    Log(oneshot::Sender<String>),
}

/// Cloneable handle to the kernel task.
#[derive(Clone)]
pub struct Gateway {
    requests: mpsc::Sender<Request>,
    frames: broadcast::Sender<SnapshotFrame>,
}

impl Gateway {
    /// Moves `session` onto its own task, paced against the wall clock.
    pub fn spawn(session: Session) -> (Gateway, JoinHandle<Session>) {
        let (req_tx, req_rx) = mpsc::channel(64);
        let (frame_tx, _) = broadcast::channel(FRAME_QUEUE);
        let task = tokio::spawn(kernel_task(session, req_rx, frame_tx.clone()));
        (
            Gateway {
                requests: req_tx,
                frames: frame_tx,
            },
            task,
        )
    }

    pub fn subscribe(&self) -> broadcast::Receiver<SnapshotFrame> {
        self.frames.subscribe()
    }

    async fn ask<T>(&self, make: impl FnOnce(oneshot::Sender<T>) -> Request) -> Result<T, GatewayError> {
        let (tx, rx) = oneshot::channel();
        self.requests.send(make(tx)).await.map_err(|_| GatewayError::Stopped)?;
        rx.await.map_err(|_| GatewayError::Stopped)
    }

    pub async fn command(&self, mut cmd: ClientCommand) -> Result<Accepted, GatewayError> {
        cmd.received_wall_ms = wall_ms();
        self.ask(|tx| Request::Command(cmd, tx)).await?
    }

    pub async fn history(&self, table: String) -> Result<Value, GatewayError> {
        self.ask(|tx| Request::History(table, tx)).await?
    }

    pub async fn devices(&self) -> Result<Value, GatewayError> {
        self.ask(Request::Devices).await
    }

    pub async fn command_log(&self) -> Result<String, GatewayError> {
        self.ask(Request::Log).await
    }
}

async fn kernel_task(
    mut session: Session,
    mut requests: mpsc::Receiver<Request>,
    frames: broadcast::Sender<SnapshotFrame>,
) -> Session {
    let mut pace = tokio::time::interval(PACE);
    let mut heartbeat = tokio::time::interval(HEARTBEAT);
    let publish = |batch: Vec<SnapshotFrame>| {
        for f in batch {
            let _ = frames.send(f);
        }
    };
    loop {
        tokio::select! {
            req = requests.recv() => {
                let Some(req) = req else { break };
                match session.advance_to_wall(wall_ms()) {
                    Ok(batch) => publish(batch),
                    Err(e) => warn!("advance failed: {e}"),
                }
                match req {
                    Request::Command(cmd, reply) => {
                        let result = session.map_realtime_to_virtual(cmd);
                        debug!("command: {result:?}");
                        let _ = reply.send(result);
                    }
                    Request::History(table, reply) => {
                        let _ = reply.send(session.history(&table));
                    }
                    Request::Devices(reply) => {
                        let _ = reply.send(session.devices());
                    }
                    Request::Log(reply) => {
                        let _ = reply.send(session.command_log());
                    }
                }
            }
            _ = pace.tick() => match session.advance_to_wall(wall_ms()) {
                Ok(batch) => publish(batch),
                Err(e) => warn!("advance failed: {e}"),
            },
            _ = heartbeat.tick() => publish(session.heartbeat()),
        }
    }
    session
}

fn error_body(e: &GatewayError) -> Value {
    json!({ "error": { "kind": e.kind(), "message": e.to_string() } })
}

impl IntoResponse for GatewayError {
    fn into_response(self) -> Response {
        let status = match self {
            GatewayError::UnknownTable(_) => StatusCode::NOT_FOUND,
            GatewayError::RejectedAction(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::SERVICE_UNAVAILABLE,
        };
        (status, Json(error_body(&self))).into_response()
    }
}

pub fn router(gateway: Gateway) -> Router {
    Router::new()
        .route("/ws", get(ws_upgrade))
        .route("/history/{table}", get(history))
        .route("/devices", get(devices))
        .with_state(gateway)
}

async fn history(State(gw): State<Gateway>, Path(table): Path<String>) -> Result<Json<Value>, GatewayError> {
    gw.history(table).await.map(Json)
}

async fn devices(State(gw): State<Gateway>) -> Result<Json<Value>, GatewayError> {
    gw.devices().await.map(Json)
}

async fn ws_upgrade(State(gw): State<Gateway>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| client(socket, gw))
}

async fn client(mut socket: WebSocket, gw: Gateway) {
    let mut frames = gw.subscribe();
    loop {
        tokio::select! {
            frame = frames.recv() => {
                let frame = match frame {
                    Ok(f) => f,
                    Err(broadcast::error::RecvError::Lagged(n)) => {
                        debug!("client lagged, dropped {n} frames");
                        continue;
                    }
                    Err(broadcast::error::RecvError::Closed) => break,
                };
                let text = serde_json::to_string(&frame).expect("frame serializes");
                if socket.send(Message::Text(text.into())).await.is_err() {
                    break;
                }
            }
            msg = socket.recv() => {
                let text = match msg {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                let reply = match serde_json::from_str::<ClientCommand>(&text) {
                    Ok(cmd) => match gw.command(cmd).await {
                        Ok(acc) => json!({ "ack": acc }),
                        Err(e) => error_body(&e),
                    },
                    Err(e) => error_body(&GatewayError::RejectedAction(format!("malformed command: {e}"))),
                };
                if socket.send(Message::Text(reply.to_string().into())).await.is_err() {
                    break;
                }
            }
        }
    }
}

/// Binds `addr` and serves until the future is dropped.
pub async fn serve(listener: TcpListener, gateway: Gateway) -> std::io::Result<()> {
    axum::serve(listener, router(gateway)).await
}

pub async fn bind(addr: SocketAddr) -> std::io::Result<TcpListener> {
    TcpListener::bind(addr).await
}
