//! Live session host.
//!
//! Each WebSocket connection on `/ws` owns one [`SessionState`]. A fixed-rate
//! clock advances it; control input arriving between ticks is latched, most
//! recent wins, so client timing never changes the simulation. REST routes
//! list scenarios and serve completed episode logs.
//!
//! A dropped connection parks its session, paused. Connecting to
//! `/ws?session=<id>` picks it up again and resends the latest episode
//! start, state update and episode end so the client can redraw.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use teleassist_core::harness::{EpisodeLog, Outcome};
use teleassist_core::session::{
    ClientMessage, ControlInput, ServerMessage, SessionConfig, SessionError, SessionState,
};
use teleassist_core::workspace::Scenario;
use tokio::sync::mpsc;
use tower_http::services::ServeDir;

pub const DEFAULT_PORT: u16 = 8080;
pub const PORT_ENV: &str = "TELEASSIST_PORT";

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub scenario: Arc<Scenario>,
    pub session: SessionConfig,
    /// Advance one tick per received `ControlInput` instead of on the clock.
    /// Meant for scripted clients and tests.
    pub lockstep: bool,
    /// Directory of UI assets served at `/`.
    pub static_dir: Option<PathBuf>,
    /// Completed episode logs are also written here as JSONL.
    pub log_dir: Option<PathBuf>,
}

impl ServiceConfig {
    pub fn new(scenario: Scenario) -> Self {
        Self {
            scenario: Arc::new(scenario),
            session: SessionConfig::default(),
            lockstep: false,
            static_dir: None,
            log_dir: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LogEntry {
    pub id: usize,
    pub session: u64,
    pub episode: usize,
    pub object: String,
    pub attempt: u32,
    pub outcome: Outcome,
    pub alpha: f64,
}

#[derive(Default)]
struct LogStore {
    entries: Vec<(LogEntry, Arc<EpisodeLog>)>,
}

/// Detached sessions kept for reconnects; the oldest is dropped beyond this.
pub const MAX_PARKED_SESSIONS: usize = 64;

#[derive(Clone)]
pub struct AppState {
    cfg: Arc<ServiceConfig>,
    logs: Arc<Mutex<LogStore>>,
    parked: Arc<Mutex<BTreeMap<u64, Parked>>>,
    sessions: Arc<AtomicU64>,
}

impl AppState {
    pub fn new(cfg: ServiceConfig) -> Result<Self, SessionError> {
        // fail fast on a session config that could never start
        SessionState::new(cfg.scenario.clone(), cfg.session.clone())?;
        Ok(Self {
            cfg: Arc::new(cfg),
            logs: Arc::default(),
            parked: Arc::default(),
            sessions: Arc::default(),
        })
    }

    fn store(&self, session: u64, episode: usize, log: &EpisodeLog) {
        let mut store = self.logs.lock().expect("log store poisoned");
        let id = store.entries.len();
        let entry = LogEntry {
            id,
            session,
            episode,
            object: log.header.object.clone(),
            attempt: log.header.attempt,
            outcome: log.outcome.clone(),
            alpha: log.header.controller.alpha,
        };
        if let Some(dir) = &self.cfg.log_dir {
            let path = dir.join(format!("session{session:04}_ep{episode:04}.jsonl"));
            if let Err(e) =
                std::fs::create_dir_all(dir).and_then(|_| std::fs::write(&path, log.to_jsonl()))
            {
                tracing::warn!("writing {}: {e}", path.display());
            }
        }
        store.entries.push((entry, Arc::new(log.clone())));
    }

    fn park(&self, id: u64, session: Parked) {
        let mut parked = self.parked.lock().expect("session table poisoned");
        parked.insert(id, session);
        while parked.len() > MAX_PARKED_SESSIONS {
            parked.pop_first();
        }
    }

    fn unpark(&self, id: u64) -> Option<Parked> {
        self.parked
            .lock()
            .expect("session table poisoned")
            .remove(&id)
    }
}

pub fn router(state: AppState) -> Router {
    let api = Router::new()
        .route("/ws", get(ws_handler))
        .route("/api/scenarios", get(list_scenarios))
        .route("/api/scenarios/{name}", get(get_scenario))
        .route("/api/logs", get(list_logs))
        .route("/api/logs/{id}", get(get_log));
    let api = match &state.cfg.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    };
    api.with_state(state)
}

/// Port from `flag`, else `TELEASSIST_PORT`, else [`DEFAULT_PORT`].
pub fn resolve_port(flag: Option<u16>) -> Result<u16, String> {
    if let Some(p) = flag {
        return Ok(p);
    }
    match std::env::var(PORT_ENV) {
        Ok(v) => v
            .parse()
            .map_err(|_| format!("{PORT_ENV}={v} is not a port number")),
        Err(_) => Ok(DEFAULT_PORT),
    }
}

pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}

#[derive(Serialize)]
struct ScenarioEntry {
    name: String,
    active: bool,
    goals: Vec<String>,
}

async fn list_scenarios(State(state): State<AppState>) -> Json<Vec<ScenarioEntry>> {
    let active = &state.cfg.scenario;
    let mut out = vec![ScenarioEntry {
        name: active.name.clone(),
        active: true,
        goals: active.goals.iter().map(|g| g.id.clone()).collect(),
    }];
    for name in Scenario::builtin_names() {
        if *name != active.name {
            let s = Scenario::builtin(name).expect("builtin scenarios load");
            out.push(ScenarioEntry {
                name: name.to_string(),
                active: false,
                goals: s.goals.iter().map(|g| g.id.clone()).collect(),
            });
        }
    }
    Json(out)
}

fn not_found(what: String) -> Response {
    (
        StatusCode::NOT_FOUND,
        Json(serde_json::json!({ "error": what })),
    )
        .into_response()
}

async fn get_scenario(State(state): State<AppState>, Path(name): Path<String>) -> Response {
    if name == state.cfg.scenario.name {
        return Json((*state.cfg.scenario).clone()).into_response();
    }
    match Scenario::builtin(&name) {
        Ok(s) => Json(s).into_response(),
        Err(_) => not_found(format!("scenario `{name}`")),
    }
}

async fn list_logs(State(state): State<AppState>) -> Json<Vec<LogEntry>> {
    let store = state.logs.lock().expect("log store poisoned");
    Json(store.entries.iter().map(|(e, _)| e.clone()).collect())
}

async fn get_log(State(state): State<AppState>, Path(id): Path<usize>) -> Response {
    let log = {
        let store = state.logs.lock().expect("log store poisoned");
        store.entries.get(id).map(|(_, l)| l.clone())
    };
    match log {
        Some(log) => (
            [(header::CONTENT_TYPE, "application/x-ndjson")],
            log.to_jsonl(),
        )
            .into_response(),
        None => not_found(format!("log {id}")),
    }
}

#[derive(Debug, Deserialize)]
struct WsQuery {
    session: Option<u64>,
}

async fn ws_handler(
    ws: WebSocketUpgrade,
    Query(q): Query<WsQuery>,
    State(state): State<AppState>,
) -> Response {
    ws.on_upgrade(move |socket| run_session(socket, state, q.session))
}

/// Input accumulated between ticks: latest axes, and whether any message
/// asked for a mode toggle.
#[derive(Debug, Default)]
struct Latch {
    input: ControlInput,
}

impl Latch {
    fn push(&mut self, input: ControlInput) {
        self.input = ControlInput {
            axes: input.axes,
            toggle_mode: self.input.toggle_mode || input.toggle_mode,
        };
    }

    fn take(&mut self) -> ControlInput {
        let out = self.input;
        self.input.toggle_mode = false;
        out
    }
}

/// The messages a reconnecting client needs to redraw exactly what it last
/// showed for the current episode.
#[derive(Debug, Default)]
struct Snapshot {
    start: Option<ServerMessage>,
    update: Option<ServerMessage>,
    end: Option<ServerMessage>,
}

impl Snapshot {
    fn observe(&mut self, msg: &ServerMessage) {
        match msg {
            ServerMessage::EpisodeStart { .. } => {
                *self = Snapshot {
                    start: Some(msg.clone()),
                    ..Default::default()
                }
            }
            ServerMessage::StateUpdate(_) => self.update = Some(msg.clone()),
            ServerMessage::EpisodeEnd { .. } => self.end = Some(msg.clone()),
            _ => {}
        }
    }

    fn messages(&self) -> impl Iterator<Item = ServerMessage> + '_ {
        [&self.start, &self.update, &self.end]
            .into_iter()
            .flatten()
            .cloned()
    }
}

struct Parked {
    session: SessionState,
    stored: usize,
    snapshot: Snapshot,
}

fn info(session: &SessionState, id: u64) -> ServerMessage {
    match session.info() {
        ServerMessage::SessionInfo {
            tick,
            scenario,
            objects,
            rate_hz,
            limits,
            deadzone_fraction,
            alpha,
            condition,
            ..
        } => ServerMessage::SessionInfo {
            tick,
            session_id: Some(id),
            scenario,
            objects,
            rate_hz,
            limits,
            deadzone_fraction,
            alpha,
            condition,
        },
        other => other,
    }
}

async fn run_session(socket: WebSocket, state: AppState, resume: Option<u64>) {
    let resumed = resume.and_then(|id| state.unpark(id).map(|p| (id, p)));
    let (id, mut parked, mut pending) = match resumed {
        Some((id, p)) => {
            let mut pending = vec![info(&p.session, id)];
            pending.extend(p.snapshot.messages());
            (id, p, pending)
        }
        None => {
            let id = state.sessions.fetch_add(1, Ordering::Relaxed);
            let session =
                match SessionState::new(state.cfg.scenario.clone(), state.cfg.session.clone()) {
                    Ok(s) => s,
                    Err(e) => {
                        tracing::error!("session {id}: {e}");
                        return;
                    }
                };
            let mut pending = vec![info(&session, id)];
            if let Some(gone) = resume {
                let e = SessionError::NotFound(format!("session {gone}; started session {id}"));
                pending.push(ServerMessage::error(session.clock(), &e));
            }
            pending.push(session.episode_start());
            let p = Parked {
                session,
                stored: 0,
                snapshot: Snapshot::default(),
            };
            (id, p, pending)
        }
    };
    tracing::info!("session {id} attached");

    let (mut tx, mut rx) = socket.split();
    let (in_tx, mut inbox) = mpsc::unbounded_channel::<String>();
    let reader = tokio::spawn(async move {
        while let Some(Ok(msg)) = rx.next().await {
            match msg {
                Message::Text(t) => {
                    if in_tx.send(t.to_string()).is_err() {
                        break;
                    }
                }
                Message::Close(_) => break,
                _ => {}
            }
        }
    });

    let mut latch = Latch::default();
    let period = Duration::from_secs_f64(1.0 / state.cfg.session.rate_hz);
    let mut clock = tokio::time::interval(period);
    clock.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);

    'outer: loop {
        for msg in pending.drain(..) {
            parked.snapshot.observe(&msg);
            if tx.send(Message::Text(msg.to_json().into())).await.is_err() {
                break 'outer;
            }
        }
        let session = &mut parked.session;
        for log in &session.completed()[parked.stored..] {
            state.store(id, parked.stored, log);
            parked.stored += 1;
        }
        tokio::select! {
            _ = clock.tick(), if !state.cfg.lockstep => {
                if session.is_running() {
                    match session.session_tick(&latch.take()) {
                        Ok(msgs) => pending = msgs,
                        Err(e) => pending = vec![ServerMessage::error(session.clock(), &e)],
                    }
                }
            }
            text = inbox.recv() => {
                let Some(text) = text else { break };
                match ClientMessage::parse(&text) {
                    Ok(msg) => match msg.control_input() {
                        Some(input) if state.cfg.lockstep => pending = session.handle_client_message(&ClientMessage::control(input)),
                        Some(input) => latch.push(input),
                        None => {
                            pending = session.handle_client_message(&msg);
                            if matches!(msg, ClientMessage::NextObject { .. } | ClientMessage::RestartRound { .. }) {
                                latch = Latch::default();
                            }
                        }
                    },
                    Err(e) => pending = vec![ServerMessage::error(session.clock(), &e)],
                }
            }
        }
    }
    reader.abort();
    // anything produced but never delivered still counts for the redraw
    for msg in pending.drain(..) {
        parked.snapshot.observe(&msg);
    }
    tracing::info!("session {id} detached");
    state.park(id, parked);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn latch_keeps_latest_axes_and_any_toggle() {
        let mut l = Latch::default();
        l.push(ControlInput {
            axes: [1.0, 0.0, 0.0],
            toggle_mode: true,
        });
        l.push(ControlInput {
            axes: [0.0, -1.0, 0.0],
            toggle_mode: false,
        });
        assert_eq!(
            l.take(),
            ControlInput {
                axes: [0.0, -1.0, 0.0],
                toggle_mode: true
            }
        );
        // axes stay held; the toggle fires once
        assert_eq!(
            l.take(),
            ControlInput {
                axes: [0.0, -1.0, 0.0],
                toggle_mode: false
            }
        );
    }

    #[test]
    fn port_resolution() {
        assert_eq!(resolve_port(Some(9000)), Ok(9000));
    }

    #[test]
    fn rejects_unstartable_config() {
        let mut cfg = ServiceConfig::new(Scenario::builtin("tabletop4").unwrap());
        cfg.session.objects = Some(vec!["teapot".into()]);
        assert!(AppState::new(cfg).is_err());
    }
}
