//! HTTP/JSON facade over replay sessions.
//!
//! Sessions live in memory and are dropped after an idle TTL. Each session
//! sits behind its own mutex, so requests against one session run one at a
//! time while different sessions proceed independently.

use std::collections::{BTreeMap, HashMap};
use std::path::{Component, Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path as UrlPath, Request, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use repcl::error::{Constraint, ReplayError, TraceError};
use repcl::replay::ReplaySession;
use repcl::trace::{EventRecord, TraceLog};
use serde::{Deserialize, Serialize};
use tower_http::services::ServeDir;

pub const DEFAULT_TTL: Duration = Duration::from_secs(30 * 60);
const MAX_UPLOAD: usize = 64 << 20;

#[derive(Debug, Clone, Default)]
pub struct ServiceConfig {
    /// Root for `{path}` session requests. Without it only uploads work.
    pub trace_dir: Option<PathBuf>,
    /// Built UI bundle, served for any path the API does not claim.
    pub static_dir: Option<PathBuf>,
    /// Idle time after which a session is dropped. Defaults to [`DEFAULT_TTL`].
    pub ttl: Option<Duration>,
}

struct Entry {
    name: String,
    session: Mutex<ReplaySession>,
    last_used: Mutex<Instant>,
}

impl Entry {
    fn lock(&self) -> MutexGuard<'_, ReplaySession> {
        *lock(&self.last_used) = Instant::now();
        lock(&self.session)
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

#[derive(Clone)]
pub struct AppState {
    sessions: Arc<Mutex<HashMap<String, Arc<Entry>>>>,
    trace_dir: Option<PathBuf>,
    ttl: Duration,
}

impl AppState {
    pub fn new(cfg: &ServiceConfig) -> Self {
        AppState {
            sessions: Arc::default(),
            trace_dir: cfg.trace_dir.clone(),
            ttl: cfg.ttl.unwrap_or(DEFAULT_TTL),
        }
    }

    /// Drops sessions idle for longer than the TTL. Returns how many went.
    pub fn evict_idle(&self) -> usize {
        let now = Instant::now();
        let mut map = lock(&self.sessions);
        let before = map.len();
        map.retain(|_, e| now.duration_since(*lock(&e.last_used)) <= self.ttl);
        before - map.len()
    }

    pub fn session_count(&self) -> usize {
        lock(&self.sessions).len()
    }

    fn get(&self, id: &str) -> Result<Arc<Entry>, ApiError> {
        lock(&self.sessions).get(id).cloned().ok_or_else(|| ApiError::UnknownSession(id.to_string()))
    }

    fn insert(&self, name: String, trace: TraceLog) -> Result<Descriptor, ApiError> {
        let session = ReplaySession::new(trace)?;
        let id = uuid::Uuid::new_v4().simple().to_string();
        let desc = Descriptor::of(&id, &name, &session);
        self.evict_idle();
        let entry =
            Entry { name, session: Mutex::new(session), last_used: Mutex::new(Instant::now()) };
        lock(&self.sessions).insert(id, Arc::new(entry));
        Ok(desc)
    }

    /// Resolves a client path under the trace root, refusing anything that
    /// would step outside it.
    fn resolve(&self, rel: &str) -> Result<PathBuf, ApiError> {
        let root = self.trace_dir.as_ref().ok_or(ApiError::NoTraceDir)?;
        let rel = Path::new(rel);
        if rel.components().any(|c| !matches!(c, Component::Normal(_))) {
            return Err(ApiError::BadPath(rel.display().to_string()));
        }
        let root = root.canonicalize().map_err(|e| ApiError::Io(e.to_string()))?;
        let full = root
            .join(rel)
            .canonicalize()
            .map_err(|_| ApiError::TraceNotFound(rel.display().to_string()))?;
        if !full.starts_with(&root) {
            return Err(ApiError::BadPath(rel.display().to_string()));
        }
        Ok(full)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ApiError {
    #[error("no session with id {0}")]
    UnknownSession(String),
    #[error("{0}")]
    Parse(TraceError),
    #[error("{0}")]
    BadTrace(ReplayError),
    #[error("event {key} is not in the frontier: {constraint}")]
    NotInFrontier { key: usize, constraint: Constraint },
    #[error("unknown event key {0}")]
    UnknownEvent(usize),
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("path `{0}` is not inside the trace directory")]
    BadPath(String),
    #[error("trace `{0}` not found")]
    TraceNotFound(String),
    #[error("server has no trace directory; upload the trace instead")]
    NoTraceDir,
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<ReplayError> for ApiError {
    fn from(e: ReplayError) -> Self {
        match e {
            ReplayError::NotInFrontier { key, constraint } => ApiError::NotInFrontier { key, constraint },
            ReplayError::UnknownEvent(k) => ApiError::UnknownEvent(k),
            ReplayError::Trace(t) => ApiError::Parse(t),
            other => ApiError::BadTrace(other),
        }
    }
}

/// Error body: `{code, message, violated_constraint?, line?}`.
#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub violated_constraint: Option<Constraint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, code) = match &self {
            ApiError::UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown_session"),
            ApiError::TraceNotFound(_) => (StatusCode::NOT_FOUND, "trace_not_found"),
            ApiError::Parse(_) => (StatusCode::BAD_REQUEST, "parse_error"),
            ApiError::BadTrace(_) => (StatusCode::BAD_REQUEST, "invalid_trace"),
            ApiError::NotInFrontier { .. } => (StatusCode::CONFLICT, "not_in_frontier"),
            ApiError::UnknownEvent(_) => (StatusCode::BAD_REQUEST, "unknown_event"),
            ApiError::BadRequest(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            ApiError::BadPath(_) => (StatusCode::BAD_REQUEST, "bad_path"),
            ApiError::NoTraceDir => (StatusCode::BAD_REQUEST, "no_trace_dir"),
            ApiError::Io(_) => (StatusCode::INTERNAL_SERVER_ERROR, "io_error"),
        };
        let body = ErrorBody {
            code: code.to_string(),
            message: self.to_string(),
            violated_constraint: match &self {
                ApiError::NotInFrontier { constraint, .. } => Some(constraint.clone()),
                _ => None,
            },
            line: match &self {
                ApiError::Parse(TraceError::Malformed { line, .. })
                | ApiError::Parse(TraceError::MixedFormats { line }) => Some(*line),
                _ => None,
            },
        };
        (status, Json(body)).into_response()
    }
}

/// One event as the client sees it. `key` is the position in the trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventSummary {
    pub key: usize,
    pub event_id: u64,
    pub event_type: String,
    pub node: String,
    pub sender: String,
    pub receiver: String,
    pub mx: u64,
    pub offsets: BTreeMap<usize, u32>,
    pub counters: BTreeMap<usize, u32>,
    pub line: String,
}

impl EventSummary {
    fn of(trace: &TraceLog, key: usize) -> Self {
        let e: &EventRecord = &trace.events[key];
        EventSummary {
            key,
            event_id: e.event_id,
            event_type: e.event_type.as_str().to_string(),
            node: e.node.clone(),
            sender: e.sender.clone(),
            receiver: e.receiver.clone(),
            mx: e.ts.mx(),
            offsets: e.ts.offsets().collect(),
            counters: (0..trace.config.n)
                .map(|k| (k, e.ts.counter(k)))
                .filter(|&(_, c)| c > 0)
                .collect(),
            line: trace.ascii_line(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Descriptor {
    pub session_id: String,
    pub trace_name: String,
    pub total: usize,
    pub replayed_count: usize,
    pub frontier: Vec<EventSummary>,
    pub done: bool,
}

impl Descriptor {
    fn of(id: &str, name: &str, s: &ReplaySession) -> Self {
        Descriptor {
            session_id: id.to_string(),
            trace_name: name.to_string(),
            total: s.total(),
            replayed_count: s.replayed().len(),
            frontier: s.frontier().into_iter().map(|k| EventSummary::of(s.trace(), k)).collect(),
            done: s.is_done(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    #[serde(flatten)]
    pub descriptor: Descriptor,
    pub nodes: Vec<String>,
    pub epsilon: u32,
    pub replayed: Vec<EventSummary>,
    /// Replayed keys per node, in replay order.
    pub lanes: BTreeMap<String, Vec<usize>>,
}

impl SessionState {
    fn of(id: &str, name: &str, s: &ReplaySession) -> Self {
        let t = s.trace();
        let mut lanes: BTreeMap<String, Vec<usize>> =
            t.nodes.iter().map(|n| (n.clone(), Vec::new())).collect();
        for &k in s.replayed() {
            lanes.entry(t.events[k].node.clone()).or_default().push(k);
        }
        SessionState {
            descriptor: Descriptor::of(id, name, s),
            nodes: t.nodes.clone(),
            epsilon: t.config.epsilon,
            replayed: s.replayed().iter().map(|&k| EventSummary::of(t, k)).collect(),
            lanes,
        }
    }
}

#[derive(Debug, Deserialize)]
pub struct CreateRequest {
    /// Trace file relative to the server's trace directory.
    pub path: Option<String>,
    /// Inline trace text, as an alternative to an upload.
    pub trace: Option<String>,
    pub name: Option<String>,
}

#[derive(Debug, Deserialize)]
pub struct ChooseRequest {
    pub event_key: usize,
}

pub fn router(cfg: &ServiceConfig) -> Router {
    router_with_state(cfg, AppState::new(cfg))
}

pub fn router_with_state(cfg: &ServiceConfig, state: AppState) -> Router {
    let api = Router::new()
        .route("/healthz", get(healthz))
        .route("/sessions", post(create))
        .route("/sessions/{id}/state", get(state_of))
        .route("/sessions/{id}/choose", post(choose))
        .route("/sessions/{id}/reset", post(reset))
        .layer(DefaultBodyLimit::max(MAX_UPLOAD))
        .with_state(state);
    match &cfg.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

async fn healthz(State(st): State<AppState>) -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok", "sessions": st.session_count() }))
}

async fn create(State(st): State<AppState>, req: Request) -> Result<(StatusCode, Json<Descriptor>), ApiError> {
    let is_multipart = req
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"));
    let (name, trace) = if is_multipart {
        let mut mp = Multipart::from_request(req, &())
            .await
            .map_err(|e| ApiError::BadRequest(e.body_text()))?;
        let field = mp
            .next_field()
            .await
            .map_err(|e| ApiError::BadRequest(e.body_text()))?
            .ok_or_else(|| ApiError::BadRequest("multipart body has no file".into()))?;
        let name = field.file_name().or(field.name()).unwrap_or("upload").to_string();
        let bytes = field.bytes().await.map_err(|e| ApiError::BadRequest(e.body_text()))?;
        (name, TraceLog::from_bytes(&bytes).map_err(ApiError::Parse)?)
    } else {
        let Json(body) = Json::<CreateRequest>::from_request(req, &())
            .await
            .map_err(|e| ApiError::BadRequest(e.body_text()))?;
        match (body.path, body.trace) {
            (Some(p), None) => {
                let full = st.resolve(&p)?;
                let t = TraceLog::read_file(&full).map_err(ApiError::Parse)?;
                (body.name.unwrap_or(p), t)
            }
            (None, Some(text)) => {
                let t = repcl::trace::parse_trace(&text).map_err(ApiError::Parse)?;
                (body.name.unwrap_or_else(|| "inline".into()), t)
            }
            _ => return Err(ApiError::BadRequest("give exactly one of `path` or `trace`".into())),
        }
    };
    let desc = st.insert(name, trace)?;
    log::info!("session {} created for {} ({} events)", desc.session_id, desc.trace_name, desc.total);
    Ok((StatusCode::CREATED, Json(desc)))
}

async fn state_of(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<SessionState>, ApiError> {
    let e = st.get(&id)?;
    let s = e.lock();
    Ok(Json(SessionState::of(&id, &e.name, &s)))
}

async fn choose(
    State(st): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<ChooseRequest>, axum::extract::rejection::JsonRejection>,
) -> Result<Json<Descriptor>, ApiError> {
    let e = st.get(&id)?;
    let Json(req) = body.map_err(|r| ApiError::BadRequest(r.body_text()))?;
    let mut s = e.lock();
    if req.event_key < s.total() && !s.in_frontier(req.event_key) {
        // The session's own check names the blocking predecessor.
        if let Some(constraint) = s.blocking_constraint(req.event_key)? {
            return Err(ApiError::NotInFrontier { key: req.event_key, constraint });
        }
    }
    s.choose(req.event_key)?;
    Ok(Json(Descriptor::of(&id, &e.name, &s)))
}

async fn reset(State(st): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<Descriptor>, ApiError> {
    let e = st.get(&id)?;
    let mut s = e.lock();
    s.reset();
    Ok(Json(Descriptor::of(&id, &e.name, &s)))
}

/// Runs until the process is interrupted, sweeping idle sessions once a minute.
pub async fn serve(listener: tokio::net::TcpListener, cfg: &ServiceConfig) -> std::io::Result<()> {
    let state = AppState::new(cfg);
    let sweeper = state.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            let gone = sweeper.evict_idle();
            if gone > 0 {
                log::info!("evicted {gone} idle sessions");
            }
        }
    });
    let app = router_with_state(cfg, state);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
