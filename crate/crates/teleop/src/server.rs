//! HTTP/WebSocket front end: `/ws/teleop`, `GET /datasets` and static UI files.
//!
//! The tick loop owns the [`Session`]. Socket handlers only replace the
//! latest-action mailbox and queue control commands; state messages fan out
//! through a broadcast channel.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use dolly_core::demos::Dataset;
use dolly_core::sim::Action;
use futures::{SinkExt, StreamExt};
use serde::Serialize;
use tokio::net::TcpListener;
use tokio::sync::{broadcast, mpsc, oneshot};
use tokio::task::JoinHandle;
use tower_http::services::ServeDir;

use crate::protocol::{ClientMessage, ServerMessage};
use crate::session::{RecordOutcome, Session, SessionConfig};

#[derive(Clone, Debug)]
pub struct ServerConfig {
    pub session: SessionConfig,
    pub bind: SocketAddr,
    /// Built UI bundle; `None` serves a placeholder page.
    pub static_dir: Option<PathBuf>,
}

impl ServerConfig {
    /// Directory listed by `/datasets`: the active dataset's parent.
    pub fn dataset_dir(&self) -> PathBuf {
        match self.session.dataset.parent() {
            Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
            _ => PathBuf::from("."),
        }
    }
}

enum Command {
    Control(ClientMessage),
}

#[derive(Clone)]
struct AppState {
    commands: mpsc::UnboundedSender<Command>,
    mailbox: Arc<Mutex<Option<(u64, Action)>>>,
    states: broadcast::Sender<ServerMessage>,
    operator_connected: Arc<AtomicBool>,
    dataset: PathBuf,
    dataset_dir: PathBuf,
}

#[derive(Debug, Serialize, PartialEq)]
pub struct DatasetEntry {
    pub file: String,
    pub active: bool,
    pub task: Option<String>,
    pub diversity: Option<String>,
    pub trajectories: usize,
    pub transitions: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Summaries of every `.jsonl` file in `dir`, plus the active dataset even if not yet written.
pub fn list_datasets(dir: &Path, active: &Path) -> Vec<DatasetEntry> {
    let active_name = active.file_name().map(|n| n.to_string_lossy().to_string());
    let mut names: Vec<String> = std::fs::read_dir(dir)
        .into_iter()
        .flatten()
        .flatten()
        .map(|e| e.file_name().to_string_lossy().to_string())
        .filter(|n| n.ends_with(".jsonl"))
        .collect();
    if let Some(a) = &active_name {
        if !names.contains(a) {
            names.push(a.clone());
        }
    }
    names.sort();
    names
        .into_iter()
        .map(|file| {
            let path = dir.join(&file);
            let active = Some(&file) == active_name.as_ref();
            let mut entry = DatasetEntry {
                file,
                active,
                task: None,
                diversity: None,
                trajectories: 0,
                transitions: 0,
                error: None,
            };
            if path.exists() {
                match Dataset::load(&path) {
                    Ok(ds) => {
                        entry.task = Some(ds.task.to_string());
                        entry.diversity = ds.diversity().map(|d| d.to_string());
                        entry.trajectories = ds.trajectories.len();
                        entry.transitions = ds.transition_count();
                    }
                    Err(e) => entry.error = Some(e.to_string()),
                }
            }
            entry
        })
        .collect()
}

/// A running server; dropping it does not stop the server, call [`RunningServer::shutdown`].
pub struct RunningServer {
    pub addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    server: JoinHandle<std::io::Result<()>>,
    ticker: JoinHandle<Option<usize>>,
}

impl RunningServer {
    /// Stops serving; returns the length of a recording discarded on the way out.
    pub async fn shutdown(mut self) -> std::io::Result<Option<usize>> {
        if let Some(stop) = self.stop.take() {
            let _ = stop.send(());
        }
        self.server.await.map_err(std::io::Error::other)??;
        self.ticker.await.map_err(std::io::Error::other)
    }

    /// Serves until `signal` resolves, then shuts down.
    pub async fn run_until(self, signal: impl std::future::Future<Output = ()>) -> std::io::Result<Option<usize>> {
        signal.await;
        self.shutdown().await
    }
}

/// Binds the listener and spawns the tick loop and HTTP server.
pub async fn start(cfg: ServerConfig) -> dolly_core::Result<RunningServer> {
    let session = Session::new(cfg.session.clone())?;
    let listener = TcpListener::bind(cfg.bind).await?;
    let addr = listener.local_addr()?;

    let (commands, command_rx) = mpsc::unbounded_channel();
    let (states, _) = broadcast::channel(256);
    let mailbox = Arc::new(Mutex::new(None));
    let (stop_tx, stop_rx) = oneshot::channel::<()>();
    let (tick_stop_tx, tick_stop_rx) = oneshot::channel::<()>();

    let state = AppState {
        commands,
        mailbox: mailbox.clone(),
        states: states.clone(),
        operator_connected: Arc::new(AtomicBool::new(false)),
        dataset: cfg.session.dataset.clone(),
        dataset_dir: cfg.dataset_dir(),
    };
    let period = Duration::from_secs_f64(1.0 / cfg.session.tick_hz);
    let ticker = tokio::spawn(tick_loop(session, period, command_rx, mailbox, states, cfg.dataset_dir(), tick_stop_rx));

    let app = router(state, cfg.static_dir.as_deref());
    let server = tokio::spawn(async move {
        let result = axum::serve(listener, app)
            .with_graceful_shutdown(async move {
                let _ = stop_rx.await;
            })
            .await;
        let _ = tick_stop_tx.send(());
        result
    });
    Ok(RunningServer {
        addr,
        stop: Some(stop_tx),
        server,
        ticker,
    })
}

fn router(state: AppState, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/ws/teleop", get(ws_handler))
        .route("/datasets", get(datasets_handler))
        .with_state(state);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(PLACEHOLDER_PAGE) })),
    }
}

const PLACEHOLDER_PAGE: &str = "<!doctype html><title>dolly teleop</title>\
<p>Teleop service is running. Connect a client to <code>/ws/teleop</code>; \
saved datasets are listed at <a href=\"/datasets\">/datasets</a>.</p>";

async fn datasets_handler(State(state): State<AppState>) -> Json<Vec<DatasetEntry>> {
    let (dir, active) = (state.dataset_dir.clone(), state.dataset.clone());
    let list = tokio::task::spawn_blocking(move || list_datasets(&dir, &active))
        .await
        .unwrap_or_default();
    Json(list)
}

async fn ws_handler(ws: WebSocketUpgrade, State(state): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| operator_socket(socket, state)).into_response()
}

async fn send_json(socket: &mut WebSocket, msg: &ServerMessage) -> bool {
    let text = serde_json::to_string(msg).expect("server message serializes");
    socket.send(Message::Text(text.into())).await.is_ok()
}

async fn operator_socket(mut socket: WebSocket, state: AppState) {
    if state.operator_connected.swap(true, Ordering::SeqCst) {
        let msg = ServerMessage::Error {
            message: "another operator session is active".into(),
        };
        send_json(&mut socket, &msg).await;
        let _ = socket.close().await;
        return;
    }
    let (mut sink, mut stream) = socket.split();
    let mut updates = state.states.subscribe();
    let (direct_tx, mut direct_rx) = mpsc::unbounded_channel::<ServerMessage>();

    let forward = tokio::spawn(async move {
        loop {
            let msg = tokio::select! {
                m = updates.recv() => match m {
                    Ok(m) => m,
                    Err(broadcast::error::RecvError::Lagged(_)) => continue,
                    Err(broadcast::error::RecvError::Closed) => break,
                },
                m = direct_rx.recv() => match m {
                    Some(m) => m,
                    None => break,
                },
            };
            let text = serde_json::to_string(&msg).expect("server message serializes");
            if sink.send(Message::Text(text.into())).await.is_err() {
                break;
            }
        }
    });

    while let Some(Ok(msg)) = stream.next().await {
        let text = match msg {
            Message::Text(t) => t,
            Message::Close(_) => break,
            _ => continue,
        };
        match serde_json::from_str::<ClientMessage>(&text) {
            Ok(ClientMessage::Action {
                seq,
                throttle,
                steering,
                pan,
                tilt,
            }) => {
                let action = Action {
                    throttle,
                    steering,
                    pan_rate: pan,
                    tilt_rate: tilt,
                };
                if [throttle, steering, pan, tilt].iter().all(|v| v.is_finite()) {
                    let mut slot = state.mailbox.lock().expect("mailbox lock");
                    if slot.is_none_or(|(s, _)| seq > s) {
                        *slot = Some((seq, action));
                    }
                } else {
                    let _ = direct_tx.send(ServerMessage::Error {
                        message: format!("action {seq} has non-finite components"),
                    });
                }
            }
            Ok(control) => {
                let _ = state.commands.send(Command::Control(control));
            }
            Err(e) => {
                let _ = direct_tx.send(ServerMessage::Error {
                    message: format!("bad message: {e}"),
                });
            }
        }
    }
    forward.abort();
    state.operator_connected.store(false, Ordering::SeqCst);
}

fn apply_control(session: &mut Session, msg: ClientMessage, dataset_dir: &Path) -> Option<ServerMessage> {
    let result = match msg {
        ClientMessage::Action { .. } => Ok(None),
        ClientMessage::Reset {
            start_position,
            seed,
            task,
        } => session.reset(task, start_position, seed).map(|_| None),
        ClientMessage::RecordStart => session.record_start().map(|_| None),
        ClientMessage::RecordStop { save } => session.record_stop(save).map(|outcome| {
            let file = session.config().dataset.file_name().map(|n| n.to_string_lossy().to_string());
            Some(match outcome {
                RecordOutcome::Saved {
                    trajectories,
                    transitions,
                } => ServerMessage::RecordResult {
                    saved: true,
                    file,
                    trajectories: Some(trajectories),
                    transitions,
                },
                RecordOutcome::Discarded { transitions } => ServerMessage::RecordResult {
                    saved: false,
                    file: None,
                    trajectories: None,
                    transitions,
                },
            })
        }),
        ClientMessage::Replay { file, index } => replay_file(session, dataset_dir, &file, index).map(|_| None),
    };
    result.unwrap_or_else(|e| {
        Some(ServerMessage::Error {
            message: e.to_string(),
        })
    })
}

fn replay_file(session: &mut Session, dir: &Path, file: &str, index: usize) -> dolly_core::Result<()> {
    if file.contains(['/', '\\']) || file.starts_with('.') {
        return Err(dolly_core::Error::Data(format!("'{file}' is not a dataset file name")));
    }
    let ds = Dataset::load(&dir.join(file))?;
    let traj = ds
        .trajectories
        .get(index)
        .ok_or_else(|| dolly_core::Error::Data(format!("{file} has no trajectory {index}")))?;
    session.start_replay(traj)
}

async fn tick_loop(
    mut session: Session,
    period: Duration,
    mut commands: mpsc::UnboundedReceiver<Command>,
    mailbox: Arc<Mutex<Option<(u64, Action)>>>,
    states: broadcast::Sender<ServerMessage>,
    dataset_dir: PathBuf,
    mut stop: oneshot::Receiver<()>,
) -> Option<usize> {
    let mut interval = tokio::time::interval(period);
    interval.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    loop {
        tokio::select! {
            _ = &mut stop => break,
            _ = interval.tick() => {}
        }
        while let Ok(Command::Control(msg)) = commands.try_recv() {
            if let Some(reply) = apply_control(&mut session, msg, &dataset_dir) {
                let _ = states.send(reply);
            }
        }
        if let Some((seq, action)) = *mailbox.lock().expect("mailbox lock") {
            session.offer_action(seq, action);
        }
        let msg = session.tick().unwrap_or_else(|e| ServerMessage::Error {
            message: e.to_string(),
        });
        let _ = states.send(msg);
    }
    session.shutdown()
}
