//! HTTP session API and its event stream.
//!
//! Sessions live in memory. Each holds the agent session behind a lock,
//! plus a snapshot of its record that the session listener refreshes on
//! every event, so reads never wait on a running plan. The event stream
//! replays the stored events after `Last-Event-ID` (all of them without
//! the header) and then follows new ones until `report_ready` or `failed`.

use std::collections::{HashMap, VecDeque};
use std::convert::Infallible;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use iod_core::agents::plan::{ClarificationRequest, Plan, PlanStep};
use iod_core::agents::{
    AgentError, EventKind, ReportMode, ResearchEnv, Session, SessionEvent, SessionRecord, SessionState,
};
use iod_core::object_store::Pid;
use iod_core::retrieval::tools::{call_tool, ToolError, SEARCH_CHUNKS, SEARCH_FINE, SEARCH_OBJECTS};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::watch;
use tower_http::services::ServeDir;

use crate::rpc::ToolServer;

#[derive(Debug, Clone, Default)]
pub struct HttpOptions {
    /// Mount the JSON-RPC tool server at `POST /rpc`.
    pub tools: bool,
    /// Append each session's events to `{log_dir}/{id}.events.jsonl`.
    pub log_dir: Option<PathBuf>,
    /// Serve files from this directory for any other path.
    pub static_dir: Option<PathBuf>,
}

/// A JSON error body `{"error": reason}` with its status.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }

    fn not_found(what: &str, id: &str) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, format!("unknown {what} {id}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

impl From<AgentError> for ApiError {
    fn from(e: AgentError) -> Self {
        let status = match e {
            AgentError::InvalidState { .. } | AgentError::InvalidTransition { .. } => StatusCode::CONFLICT,
            AgentError::Plan(_) | AgentError::EmptyQuery => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

struct Shared {
    record: Mutex<SessionRecord>,
    seq: watch::Sender<u64>,
}

struct Slot {
    session: Mutex<Session>,
    shared: Arc<Shared>,
}

impl Slot {
    fn snapshot(&self) -> SessionRecord {
        self.shared.record.lock().expect("record lock").clone()
    }

    fn state(&self) -> SessionState {
        self.shared.record.lock().expect("record lock").state
    }
}

pub struct AppState {
    env: ResearchEnv,
    options: HttpOptions,
    sessions: Mutex<HashMap<String, Arc<Slot>>>,
}

impl AppState {
    pub fn new(env: ResearchEnv, options: HttpOptions) -> Arc<Self> {
        Arc::new(AppState {
            env,
            options,
            sessions: Mutex::new(HashMap::new()),
        })
    }

    fn slot(&self, id: &str) -> ApiResult<Arc<Slot>> {
        self.sessions
            .lock()
            .expect("sessions lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found("session", id))
    }
}

/// What create, clarify and confirm return.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSummary {
    pub id: String,
    pub state: SessionState,
    #[serde(default)]
    pub plan: Option<Plan>,
    #[serde(default)]
    pub clarification: Option<ClarificationRequest>,
    #[serde(default)]
    pub error: Option<String>,
}

impl From<&SessionRecord> for SessionSummary {
    fn from(r: &SessionRecord) -> Self {
        SessionSummary {
            id: r.id.clone(),
            state: r.state,
            plan: r.plan.clone(),
            clarification: r.clarification.clone(),
            error: r.error.clone(),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateBody {
    query: String,
    #[serde(default)]
    mode: Option<ReportMode>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClarifyBody {
    answer: String,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfirmBody {
    #[serde(default)]
    steps: Option<Vec<PlanStep>>,
}

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("invalid body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
}

async fn create_session(State(app): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let body: CreateBody = parse_body(&body)?;
    if body.query.trim().is_empty() {
        return Err(AgentError::EmptyQuery.into());
    }
    let id = uuid::Uuid::new_v4().to_string();
    let mut session = Session::new(&id, &body.query, app.options.log_dir.as_deref()).with_mode(body.mode);
    let (seq, _) = watch::channel(0);
    let shared = Arc::new(Shared {
        record: Mutex::new(session.record().clone()),
        seq,
    });
    let sink = shared.clone();
    session.set_listener(Box::new(move |rec, ev| {
        *sink.record.lock().expect("record lock") = rec.clone();
        sink.seq.send_replace(ev.seq);
    }));
    let slot = Arc::new(Slot {
        session: Mutex::new(session),
        shared,
    });
    app.sessions
        .lock()
        .expect("sessions lock")
        .insert(id.clone(), slot.clone());
    let env = app.env.clone();
    let worker = slot.clone();
    let started = blocking(move || worker.session.lock().expect("session lock").start(&env)).await?;
    let summary = SessionSummary::from(&slot.snapshot());
    match started {
        Ok(()) => Ok((StatusCode::CREATED, Json(summary)).into_response()),
        Err(_) if summary.state == SessionState::Failed => Ok((StatusCode::CREATED, Json(summary)).into_response()),
        Err(e) => Err(e.into()),
    }
}

async fn get_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<SessionRecord>> {
    Ok(Json(app.slot(&id)?.snapshot()))
}

fn require_awaiting(slot: &Slot, action: &'static str) -> ApiResult<()> {
    let state = slot.state();
    if state != SessionState::AwaitingUser {
        return Err(AgentError::InvalidState { state, action }.into());
    }
    Ok(())
}

async fn clarify_session(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<SessionSummary>> {
    let slot = app.slot(&id)?;
    let body: ClarifyBody = parse_body(&body)?;
    require_awaiting(&slot, "clarify")?;
    let env = app.env.clone();
    let worker = slot.clone();
    blocking(move || worker.session.lock().expect("session lock").clarify(&body.answer, &env)).await??;
    Ok(Json(SessionSummary::from(&slot.snapshot())))
}

/// Confirm (optionally with edited steps) and start executing in the
/// background; the response returns once the plan is confirmed.
async fn confirm_session(State(app): State<Arc<AppState>>, Path(id): Path<String>, body: Bytes) -> ApiResult<Response> {
    let slot = app.slot(&id)?;
    let body: ConfirmBody = if body.iter().all(u8::is_ascii_whitespace) {
        ConfirmBody::default()
    } else {
        parse_body(&body)?
    };
    require_awaiting(&slot, "confirm")?;
    let worker = slot.clone();
    blocking(move || worker.session.lock().expect("session lock").confirm(body.steps)).await??;
    let summary = SessionSummary::from(&slot.snapshot());
    let env = app.env.clone();
    let worker = slot.clone();
    tokio::task::spawn_blocking(move || {
        let mut s = worker.session.lock().expect("session lock");
        if let Err(e) = s.execute(&env) {
            tracing::warn!(session = %s.record().id, "session failed: {e}");
        }
    });
    Ok((StatusCode::ACCEPTED, Json(summary)).into_response())
}

fn is_end(kind: EventKind) -> bool {
    matches!(kind, EventKind::ReportReady | EventKind::Failed)
}

fn sse_event(ev: &SessionEvent) -> Event {
    Event::default()
        .id(ev.seq.to_string())
        .event(ev.kind.as_str())
        .data(serde_json::to_string(ev).expect("event serializes"))
}

struct Follow {
    shared: Arc<Shared>,
    rx: watch::Receiver<u64>,
    last: u64,
    pending: VecDeque<SessionEvent>,
    done: bool,
}

/// Stored events after `last`, then live ones, ending after a terminal event.
fn follow(shared: Arc<Shared>, last: u64) -> impl Stream<Item = Result<Event, Infallible>> {
    let rx = shared.seq.subscribe();
    let st = Follow {
        shared,
        rx,
        last,
        pending: VecDeque::new(),
        done: false,
    };
    futures::stream::unfold(st, |mut st| async move {
        loop {
            if let Some(ev) = st.pending.pop_front() {
                st.last = ev.seq;
                if is_end(ev.kind) {
                    st.done = true;
                    st.pending.clear();
                }
                return Some((Ok(sse_event(&ev)), st));
            }
            if st.done {
                return None;
            }
            st.rx.borrow_and_update();
            let (fresh, terminal) = {
                let r = st.shared.record.lock().expect("record lock");
                let fresh: Vec<SessionEvent> = r.events.iter().filter(|e| e.seq > st.last).cloned().collect();
                (fresh, r.state.is_terminal())
            };
            if fresh.is_empty() {
                if terminal || st.rx.changed().await.is_err() {
                    return None;
                }
                continue;
            }
            st.pending.extend(fresh);
        }
    })
}

async fn session_events(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> ApiResult<Sse<impl Stream<Item = Result<Event, Infallible>>>> {
    let slot = app.slot(&id)?;
    let last = match headers.get("last-event-id") {
        None => 0,
        Some(v) => v
            .to_str()
            .ok()
            .and_then(|s| s.trim().parse::<u64>().ok())
            .ok_or_else(|| {
                ApiError::new(
                    StatusCode::BAD_REQUEST,
                    "Last-Event-ID must be an event sequence number",
                )
            })?,
    };
    Ok(Sse::new(follow(slot.shared.clone(), last)))
}

async fn get_report(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let rec = app.slot(&id)?.snapshot();
    let report = rec
        .report
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("session {id} has no report yet")))?;
    Ok((
        [(header::CONTENT_TYPE, "text/markdown; charset=utf-8")],
        report.to_markdown(),
    )
        .into_response())
}

fn tool_error(e: ToolError) -> ApiError {
    match e {
        ToolError::UnknownTool(_) | ToolError::InvalidParams(_) => {
            ApiError::new(StatusCode::BAD_REQUEST, e.to_string())
        }
        ToolError::Execution(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

/// Body: the search tool arguments plus an optional `tier`
/// (`object`, `chunk` or `fine`; default `chunk`).
async fn search(State(app): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<Value>> {
    let mut args: Value = parse_body(&body)?;
    let Some(map) = args.as_object_mut() else {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "body must be an object"));
    };
    let tool = match map.remove("tier").as_ref().map(|t| t.as_str()) {
        None | Some(Some("chunk")) => SEARCH_CHUNKS,
        Some(Some("object")) => SEARCH_OBJECTS,
        Some(Some("fine")) => SEARCH_FINE,
        Some(other) => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                format!(
                    "tier must be object, chunk or fine, got {}",
                    other.unwrap_or("a non-string")
                ),
            ))
        }
    };
    let retriever = app.env.retriever.clone();
    let out = blocking(move || call_tool(&retriever, tool, &args)).await?;
    out.map(Json).map_err(tool_error)
}

async fn get_object(State(app): State<Arc<AppState>>, Path(raw): Path<String>) -> ApiResult<Response> {
    let pid: Pid = raw
        .parse()
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, format!("invalid pid {raw:?}: {e}")))?;
    let obj = app
        .env
        .retriever
        .object(&pid)
        .ok_or_else(|| ApiError::not_found("object", &raw))?;
    Ok(Json(obj).into_response())
}

async fn rpc(State(tools): State<ToolServer>, body: Bytes) -> Response {
    let raw = String::from_utf8_lossy(&body);
    match tools.handle_str(&raw) {
        Some(reply) => ([(header::CONTENT_TYPE, "application/json")], reply).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

/// The full HTTP surface for `app`.
pub fn router(app: Arc<AppState>) -> Router {
    let mut r = Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/clarify", post(clarify_session))
        .route("/sessions/{id}/confirm", post(confirm_session))
        .route("/sessions/{id}/events", get(session_events))
        .route("/search", post(search))
        .route("/objects/{*pid}", get(get_object))
        .route("/reports/{id}", get(get_report))
        .with_state(app.clone());
    if app.options.tools {
        let tools = Router::new()
            .route("/rpc", post(rpc))
            .with_state(ToolServer::new(app.env.retriever.clone()));
        r = r.merge(tools);
    }
    if let Some(dir) = &app.options.static_dir {
        r = r.fallback_service(ServeDir::new(dir));
    }
    r
}

/// Bind `addr` and serve until the process ends.
pub async fn serve(addr: &str, app: Arc<AppState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(app)).await
}
