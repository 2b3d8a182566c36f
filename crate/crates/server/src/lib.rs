//! HTTP service that lets a person (or a scripted client) answer the
//! preference queries of an elicitation run.
//!
//! Endpoints, all JSON unless noted:
//!
//! | method | path | body / result |
//! |---|---|---|
//! | POST | `/sessions` | `{"config": {..partial config..}, "seed": 7}` → [`CreatedSession`] |
//! | GET | `/sessions/{id}/query` | [`QueryView`] |
//! | POST | `/sessions/{id}/label` | [`LabelRequest`] → [`LabelResponse`] |
//! | GET | `/sessions/{id}/status` | [`StatusView`] |
//! | GET | `/sessions/{id}/metrics.csv` | `text/csv` |
//!
//! Errors are `{"code": ..., "message": ...}` with codes such as
//! `unknown_environment`, `invalid_config`, `not_found`, `stale_ordinal` and
//! `session_done`.

mod error;
mod session;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::{header, StatusCode};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use oprl::harness::ExperimentConfig;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::cors::CorsLayer;

pub use error::ApiError;
pub use session::{
    display_swapped, LabelRequest, LabelResponse, QueryView, Session, Snapshot, StatusView, Status, StepView,
    TrajectoryView,
};

type ApiResult<T> = Result<T, ApiError>;

/// Body of `POST /sessions`. A missing config means the Star preset with
/// Sim-OPRL; a missing seed means the config's first seed.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct CreateSession {
    #[serde(default)]
    pub config: Option<Value>,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session_id: String,
    pub seed: u64,
    pub status: Status,
    pub config: ExperimentConfig,
}

/// All live sessions, optionally mirrored to a directory of snapshots.
pub struct AppState {
    sessions: RwLock<HashMap<String, Arc<Session>>>,
    store: Option<PathBuf>,
    counter: AtomicU64,
}

impl AppState {
    pub fn in_memory() -> Self {
        Self { sessions: RwLock::new(HashMap::new()), store: None, counter: AtomicU64::new(0) }
    }

    /// Uses `dir` for snapshots, restoring every session found there.
    pub fn persistent(dir: impl Into<PathBuf>) -> oprl::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        let mut sessions = HashMap::new();
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                let snapshot: Snapshot = serde_json::from_str(&std::fs::read_to_string(&path)?)?;
                let session = Session::restore(&snapshot)?;
                sessions.insert(session.id.clone(), Arc::new(session));
            }
        }
        let counter = AtomicU64::new(sessions.len() as u64);
        Ok(Self { sessions: RwLock::new(sessions), store: Some(dir), counter })
    }

    pub fn session(&self, id: &str) -> Option<Arc<Session>> {
        self.sessions.read().expect("sessions lock").get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("sessions lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn next_id(&self) -> String {
        let n = self.counter.fetch_add(1, Ordering::SeqCst);
        let nanos = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_nanos() as u64);
        format!("s{n:04}-{:08x}", (nanos ^ n.wrapping_mul(0x9e37_79b9_7f4a_7c15)) as u32)
    }

    fn insert(&self, session: Arc<Session>) {
        self.sessions.write().expect("sessions lock").insert(session.id.clone(), session);
    }
}

fn write_snapshot(dir: &Path, snapshot: &Snapshot) -> std::io::Result<()> {
    let path = dir.join(format!("{}.json", snapshot.session_id));
    let tmp = dir.join(format!("{}.json.tmp", snapshot.session_id));
    std::fs::write(&tmp, serde_json::to_vec(snapshot)?)?;
    std::fs::rename(tmp, path)
}

fn lookup(state: &AppState, id: &str) -> ApiResult<Arc<Session>> {
    state.session(id).ok_or_else(|| ApiError::not_found(id))
}

fn parse_json<T: serde::de::DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    if body.is_empty() {
        return serde_json::from_str("{}").map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_json", e.to_string()));
    }
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_json", e.to_string()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError::internal(e.to_string()))?
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<impl IntoResponse> {
    let req: CreateSession = parse_json(&body)?;
    let cfg = match &req.config {
        Some(v) => ExperimentConfig::from_json_str(&v.to_string())?,
        None => ExperimentConfig::default(),
    };
    let seed = req.seed.unwrap_or(cfg.seeds[0]);
    let id = state.next_id();
    let st = Arc::clone(&state);
    let created = blocking(move || {
        let session = Session::create(id, &cfg, seed)?;
        if let Some(dir) = &st.store {
            let run = session.run.try_lock().expect("fresh session is unshared");
            write_snapshot(dir, &session.snapshot(&run)).map_err(|e| ApiError::internal(e.to_string()))?;
        }
        let created = CreatedSession { session_id: session.id.clone(), seed, status: session.status().status, config: cfg };
        st.insert(Arc::new(session));
        Ok(created)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(created)))
}

async fn get_query(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<QueryView>> {
    let session = lookup(&state, &id)?;
    let run = session.run.lock().await;
    let Some(pair) = run.pending() else {
        return Err(ApiError::conflict("session_done", "the preference budget is exhausted"));
    };
    Ok(Json(session::render_query(&session.id, &run, pair)))
}

async fn post_label(
    State(state): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Json<LabelResponse>> {
    let req: LabelRequest = parse_json(&body)?;
    let session = lookup(&state, &id)?;
    let mut run = Arc::clone(&session.run).lock_owned().await;
    if run.is_done() {
        return Err(ApiError::conflict("session_done", "the preference budget is exhausted"));
    }
    let ordinal = run.n_prefs() as u64;
    if req.ordinal != ordinal {
        return Err(ApiError::conflict(
            "stale_ordinal",
            format!("label is for query {} but query {ordinal} is pending", req.ordinal),
        ));
    }
    if req.label > 1 {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_input", "label must be 0 or 1"));
    }
    let internal = if display_swapped(run.seed(), ordinal) { 1 - req.label } else { req.label };
    let cfg = run.config();
    let n = run.n_prefs() + 1;
    let refits = n % cfg.batch_size == 0 || n == cfg.budget;
    if refits {
        session.refitting.store(true, Ordering::SeqCst);
    }
    let store = state.store.clone();
    let sess = Arc::clone(&session);
    let result = blocking(move || {
        let refit = run.submit_label(internal)?;
        sess.labels.lock().expect("labels lock").push(internal);
        if !run.is_done() {
            run.next_query()?;
        }
        if let Some(dir) = &store {
            write_snapshot(dir, &sess.snapshot(&run)).map_err(|e| ApiError::internal(e.to_string()))?;
        }
        let view = session::status_view(&sess.id, &run, sess.env_anchors);
        let response = LabelResponse { n_prefs: view.n_prefs, status: view.status, refit };
        *sess.last_status.lock().expect("status lock") = view;
        Ok(response)
    })
    .await;
    session.refitting.store(false, Ordering::SeqCst);
    result.map(Json)
}

async fn get_status(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<StatusView>> {
    Ok(Json(lookup(&state, &id)?.status()))
}

async fn get_metrics_csv(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<impl IntoResponse> {
    let view = lookup(&state, &id)?.status();
    let meta = json!({ "session_id": view.session_id, "seed": view.seed, "anchors": view.anchors });
    Ok(([(header::CONTENT_TYPE, "text/csv")], view.metrics.to_csv(&meta)))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/query", get(get_query))
        .route("/sessions/{id}/label", post(post_label))
        .route("/sessions/{id}/status", get(get_status))
        .route("/sessions/{id}/metrics.csv", get(get_metrics_csv))
        .layer(CorsLayer::permissive())
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(addr: SocketAddr, state: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}
