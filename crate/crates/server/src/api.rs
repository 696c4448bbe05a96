//! HTTP and websocket routes over [`Session`].

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::body::Bytes;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::{mpsc, Mutex as AsyncMutex, OwnedMutexGuard};

use lwm::camera::WaypointSet;
use lwm::cem::CemConfig;
use lwm::scene::Scene;
use lwm::sim::Observation;

use crate::session::{Session, SessionConfig, StepPayload, SCHEMA};

type Slot = Arc<AsyncMutex<Session>>;

#[derive(Clone)]
pub struct AppState {
    scenes: Arc<BTreeMap<String, Arc<Scene>>>,
    sessions: Arc<Mutex<HashMap<String, Slot>>>,
    next_id: Arc<AtomicU64>,
}

impl AppState {
    pub fn new(scenes: impl IntoIterator<Item = Scene>) -> Self {
        AppState {
            scenes: Arc::new(scenes.into_iter().map(|s| (s.id.clone(), Arc::new(s))).collect()),
            sessions: Arc::default(),
            next_id: Arc::default(),
        }
    }

    pub fn scene_ids(&self) -> Vec<String> {
        self.scenes.keys().cloned().collect()
    }

    fn slot(&self, id: &str) -> Result<Slot, ApiError> {
        self.sessions
            .lock()
            .expect("session table lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("session {id}")))
    }

    /// Claims the session for one operation; a second concurrent request
    /// gets a busy error instead of waiting.
    fn claim(&self, id: &str) -> Result<OwnedMutexGuard<Session>, ApiError> {
        self.slot(id)?.try_lock_owned().map_err(|_| ApiError {
            status: StatusCode::CONFLICT,
            kind: "busy",
            message: format!("session {id} is running another request"),
        })
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn not_found(what: String) -> Self {
        ApiError {
            status: StatusCode::NOT_FOUND,
            kind: "not-found",
            message: format!("{what} not found"),
        }
    }

    fn body(&self) -> serde_json::Value {
        json!({ "schema": SCHEMA, "error": { "kind": self.kind, "message": self.message } })
    }
}

impl From<lwm::Error> for ApiError {
    fn from(e: lwm::Error) -> Self {
        let (status, kind) = match &e {
            lwm::Error::NotFound(_) => (StatusCode::NOT_FOUND, "not-found"),
            lwm::Error::InvalidInput(_) | lwm::Error::Infeasible(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError {
            status,
            kind,
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body())).into_response()
    }
}

/// Request bodies are parsed here so that malformed JSON gets the same error
/// shape as every other failure.
fn parse<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ApiError> {
    let text = if body.iter().all(u8::is_ascii_whitespace) { b"{}".as_slice() } else { body };
    serde_json::from_slice(text).map_err(|e| ApiError {
        status: StatusCode::UNPROCESSABLE_ENTITY,
        kind: "invalid",
        message: e.to_string(),
    })
}

fn internal(e: impl std::fmt::Display) -> ApiError {
    ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        kind: "internal",
        message: e.to_string(),
    }
}

#[derive(Deserialize)]
pub struct CreateRequest {
    pub scene_id: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub config: SessionConfig,
}

#[derive(Deserialize)]
pub struct StepRequest {
    #[serde(default = "WaypointSet::empty")]
    pub waypoints: WaypointSet,
    #[serde(default = "one")]
    pub sample_count: usize,
}

fn one() -> usize {
    1
}

#[derive(Deserialize)]
pub struct PlanRequest {
    pub snapshot_id: usize,
    #[serde(default)]
    pub cem: Option<CemConfig>,
}

/// Without an observation the current frame is saved.
#[derive(Deserialize, Default)]
pub struct SnapshotRequest {
    #[serde(default)]
    pub observation: Option<Observation>,
}

#[derive(Serialize)]
struct Scenes {
    schema: &'static str,
    scenes: Vec<String>,
}

async fn list_scenes(State(app): State<AppState>) -> Json<Scenes> {
    Json(Scenes {
        schema: SCHEMA,
        scenes: app.scene_ids(),
    })
}

async fn create_session(State(app): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let req: CreateRequest = parse(&body)?;
    let scene = app
        .scenes
        .get(&req.scene_id)
        .cloned()
        .ok_or_else(|| ApiError::not_found(format!("scene {}", req.scene_id)))?;
    let id = format!("s{}", app.next_id.fetch_add(1, Ordering::Relaxed));
    let sid = id.clone();
    let session = tokio::task::spawn_blocking(move || Session::new(sid, scene, req.seed, req.config))
        .await
        .map_err(internal)??;
    let frame = session.frame();
    app.sessions
        .lock()
        .expect("session table lock")
        .insert(id, Arc::new(AsyncMutex::new(session)));
    Ok((StatusCode::OK, Json(frame)).into_response())
}

async fn get_frame(State(app): State<AppState>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let session = app.claim(&id)?;
    Ok(Json(session.frame()).into_response())
}

async fn step_session(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let req: StepRequest = parse(&body)?;
    let mut session = app.claim(&id)?;
    let payload = tokio::task::spawn_blocking(move || session.step(&req.waypoints, req.sample_count, |_| {}))
        .await
        .map_err(internal)??;
    Ok(Json(payload).into_response())
}

async fn snapshot_session(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let req: SnapshotRequest = parse(&body)?;
    let mut session = app.claim(&id)?;
    let payload = match req.observation {
        Some(o) => session.save_snapshot(o),
        None => session.snapshot(),
    };
    Ok(Json(payload).into_response())
}

async fn plan_session(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let req: PlanRequest = parse(&body)?;
    let session = app.claim(&id)?;
    let payload = tokio::task::spawn_blocking(move || session.plan(req.snapshot_id, req.cem))
        .await
        .map_err(internal)??;
    Ok(Json(payload).into_response())
}

async fn socket(
    State(app): State<AppState>,
    Path(id): Path<String>,
    ws: WebSocketUpgrade,
) -> Result<Response, ApiError> {
    app.slot(&id)?;
    Ok(ws.on_upgrade(move |socket| drive_socket(app, id, socket)))
}

async fn send_json(socket: &mut WebSocket, value: &impl Serialize) -> bool {
    match serde_json::to_string(value) {
        Ok(text) => socket.send(Message::Text(text.into())).await.is_ok(),
        Err(_) => false,
    }
}

/// Each text message is a step request; the server streams one `frame`
/// message per simulated step, then the full `rollout`.
async fn drive_socket(app: AppState, id: String, mut socket: WebSocket) {
    while let Some(Ok(msg)) = socket.recv().await {
        let Message::Text(text) = msg else { continue };
        let req: StepRequest = match parse(text.as_bytes()) {
            Ok(r) => r,
            Err(err) => {
                if !send_json(&mut socket, &json!({ "schema": SCHEMA, "type": "error", "error": err.body()["error"] })).await {
                    return;
                }
                continue;
            }
        };
        let mut session = match app.claim(&id) {
            Ok(s) => s,
            Err(err) => {
                if !send_json(&mut socket, &json!({ "schema": SCHEMA, "type": "error", "error": err.body()["error"] })).await {
                    return;
                }
                continue;
            }
        };
        let (tx, mut rx) = mpsc::unbounded_channel();
        let job = tokio::task::spawn_blocking(move || {
            session.step(&req.waypoints, req.sample_count, |f| {
                let _ = tx.send(f.clone());
            })
        });
        while let Some(frame) = rx.recv().await {
            if !send_json(&mut socket, &json!({ "schema": SCHEMA, "type": "frame", "frame": frame })).await {
                return;
            }
        }
        let reply = match job.await.map_err(internal).and_then(|r| r.map_err(ApiError::from)) {
            Ok(payload) => rollout_message(&payload),
            Err(err) => json!({ "schema": SCHEMA, "type": "error", "error": err.body()["error"] }),
        };
        if !send_json(&mut socket, &reply).await {
            return;
        }
    }
}

fn rollout_message(payload: &StepPayload) -> serde_json::Value {
    json!({ "schema": SCHEMA, "type": "rollout", "rollout": payload })
}

pub fn router(app: AppState) -> Router {
    Router::new()
        .route("/scenes", get(list_scenes))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/frame", get(get_frame))
        .route("/sessions/{id}/step", post(step_session))
        .route("/sessions/{id}/plan", post(plan_session))
        .route("/sessions/{id}/snapshot", post(snapshot_session))
        .route("/sessions/{id}/socket", get(socket))
        .with_state(app)
}
