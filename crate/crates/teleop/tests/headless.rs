//! A headless WebSocket client drives the scripted expert through the service.

use std::net::SocketAddr;
use std::path::Path;
use std::time::Duration;

use dolly_core::demos::{expert_action, Dataset, Diversity, ExpertGains};
use dolly_core::gail::{train_gail, GailConfig};
use dolly_core::ppo::PpoConfig;
use dolly_core::rewards::RewardWeights;
use dolly_core::sim::{BoundingBox, EpisodeConfig, StartPosition, Task};
use dolly_teleop::{start, ClientMessage, Mode, ServerConfig, ServerMessage, SessionConfig};
use futures::{SinkExt, StreamExt};
use tokio::io::{AsyncReadExt, AsyncWriteExt};
use tokio::net::TcpStream;
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

type Ws = WebSocketStream<MaybeTlsStream<TcpStream>>;

fn config(dir: &Path, tick_hz: f64) -> ServerConfig {
    ServerConfig {
        session: SessionConfig {
            env: EpisodeConfig::default(),
            weights: RewardWeights::default(),
            tick_hz,
            input_timeout_ms: 1000,
            dataset: dir.join("teleop.demos.jsonl"),
            require_success: true,
            operator: "headless".into(),
        },
        bind: "127.0.0.1:0".parse().unwrap(),
        static_dir: None,
    }
}

async fn connect(addr: SocketAddr) -> Ws {
    connect_async(format!("ws://{addr}/ws/teleop")).await.unwrap().0
}

async fn send(ws: &mut Ws, msg: &ClientMessage) {
    ws.send(Message::Text(serde_json::to_string(msg).unwrap().into())).await.unwrap();
}

async fn recv(ws: &mut Ws) -> ServerMessage {
    loop {
        let msg = tokio::time::timeout(Duration::from_secs(10), ws.next())
            .await
            .expect("server message within 10 s")
            .unwrap()
            .unwrap();
        if let Message::Text(t) = msg {
            return serde_json::from_str(&t).unwrap();
        }
    }
}

async fn http_get(addr: SocketAddr, path: &str) -> String {
    let mut stream = TcpStream::connect(addr).await.unwrap();
    let req = format!("GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n");
    stream.write_all(req.as_bytes()).await.unwrap();
    let mut buf = String::new();
    stream.read_to_string(&mut buf).await.unwrap();
    assert!(buf.starts_with("HTTP/1.1 200"), "{buf}");
    buf.split("\r\n\r\n").nth(1).unwrap().to_string()
}

/// Records one demonstration by answering each state with the expert's action.
async fn record_demo(ws: &mut Ws, start: StartPosition, seed: u64, seq: &mut u64) -> ServerMessage {
    let cfg = EpisodeConfig::default();
    send(ws, &ClientMessage::Reset { start_position: Some(start), seed, task: Task::Base }).await;
    send(ws, &ClientMessage::RecordStart).await;
    loop {
        match recv(ws).await {
            ServerMessage::State { mode: Mode::Recording, bbox, camera, .. } => {
                let b = BoundingBox { cx: bbox.cx, cy: bbox.cy, area: bbox.area };
                let a = expert_action(Some(&b), &camera, &cfg, &ExpertGains::default());
                *seq += 1;
                send(
                    ws,
                    &ClientMessage::Action {
                        seq: *seq,
                        throttle: a.throttle,
                        steering: a.steering,
                        pan: a.pan_rate,
                        tilt: a.tilt_rate,
                    },
                )
                .await;
            }
            ServerMessage::State { mode: Mode::Idle, done: true, recording_len, .. } if recording_len > 0 => break,
            ServerMessage::Error { message } => panic!("server error: {message}"),
            _ => {}
        }
    }
    send(ws, &ClientMessage::RecordStop { save: true }).await;
    loop {
        if let m @ ServerMessage::RecordResult { .. } = recv(ws).await {
            return m;
        }
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn scripted_client_records_a_trainable_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), 120.0);
    let path = cfg.session.dataset.clone();
    let server = start(cfg).await.unwrap();
    let mut ws = connect(server.addr).await;

    let mut seq = 0;
    for (i, p) in StartPosition::ALL.into_iter().enumerate() {
        match record_demo(&mut ws, p, 100 + i as u64, &mut seq).await {
            ServerMessage::RecordResult { saved, trajectories, .. } => {
                assert!(saved);
                assert_eq!(trajectories, Some(i + 1));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    let listing: serde_json::Value = serde_json::from_str(&http_get(server.addr, "/datasets").await).unwrap();
    assert_eq!(listing[0]["file"], "teleop.demos.jsonl");
    assert_eq!(listing[0]["trajectories"], 5);
    assert_eq!(listing[0]["diversity"], "high");
    assert!(http_get(server.addr, "/").await.contains("/ws/teleop"));

    drop(ws);
    assert_eq!(server.shutdown().await.unwrap(), None);

    let ds = Dataset::load_for_task(&path, Task::Base).unwrap();
    assert_eq!(ds.diversity(), Some(Diversity::High));
    let ppo = PpoConfig { total_timesteps: 2048, eval_episodes: 2, ..Default::default() };
    let out = train_gail(&ds, &EpisodeConfig::default(), &RewardWeights::default(), &ppo, &GailConfig::default(), 0).unwrap();
    assert!(out.train.eval.mean_reward.is_finite());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn discard_and_second_operator() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), 60.0);
    let path = cfg.session.dataset.clone();
    let server = start(cfg).await.unwrap();
    let mut ws = connect(server.addr).await;

    let mut other = connect(server.addr).await;
    match recv(&mut other).await {
        ServerMessage::Error { message } => assert!(message.contains("another operator")),
        m => panic!("unexpected {m:?}"),
    }

    send(&mut ws, &ClientMessage::Reset { start_position: Some(StartPosition::P3), seed: 1, task: Task::Base }).await;
    send(&mut ws, &ClientMessage::RecordStart).await;
    send(&mut ws, &ClientMessage::Action { seq: 1, throttle: 0.5, steering: 0.0, pan: 0.0, tilt: 0.0 }).await;
    loop {
        if let ServerMessage::State { recording_len, .. } = recv(&mut ws).await {
            if recording_len >= 3 {
                break;
            }
        }
    }
    send(&mut ws, &ClientMessage::RecordStop { save: false }).await;
    loop {
        if let ServerMessage::RecordResult { saved, .. } = recv(&mut ws).await {
            assert!(!saved);
            break;
        }
    }
    assert!(!path.exists());

    send(&mut ws, &ClientMessage::RecordStop { save: true }).await;
    loop {
        if let ServerMessage::Error { message } = recv(&mut ws).await {
            assert!(message.contains("no recording"));
            break;
        }
    }

    // A recording still open at shutdown is discarded.
    send(&mut ws, &ClientMessage::RecordStart).await;
    loop {
        if let ServerMessage::State { recording_len, .. } = recv(&mut ws).await {
            if recording_len >= 2 {
                break;
            }
        }
    }
    drop(ws);
    let discarded = server.shutdown().await.unwrap();
    assert!(discarded.is_some_and(|n| n >= 2));
    assert!(!path.exists());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn one_state_per_tick_without_input() {
    let dir = tempfile::tempdir().unwrap();
    let server = start(config(dir.path(), 100.0)).await.unwrap();
    let mut ws = connect(server.addr).await;
    send(&mut ws, &ClientMessage::Reset { start_position: Some(StartPosition::P2), seed: 3, task: Task::Full }).await;
    let mut ticks = Vec::new();
    let mut poses = Vec::new();
    while ticks.len() < 10 {
        if let ServerMessage::State { tick, mode: Mode::Live, pose, paused: false, .. } = recv(&mut ws).await {
            ticks.push(tick);
            poses.push(pose);
        }
    }
    assert!(ticks.windows(2).all(|w| w[1] == w[0] + 1), "{ticks:?}");
    assert!(poses.windows(2).all(|w| w[0] == w[1]));
    drop(ws);
    server.shutdown().await.unwrap();
}
