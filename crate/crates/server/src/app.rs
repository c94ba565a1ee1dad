//! HTTP API: sessions, actions, projections, event stream and seed search.
//!
//! Each session has one action queue (an async mutex). Actions run on the
//! blocking pool because backends make synchronous network calls. Readers
//! never take the queue: they read the event log and the latest view, both
//! updated before the queue is released.

use std::collections::{BTreeMap, VecDeque};
use std::convert::Infallible;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use anyhow::Context;
use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::IntoResponse;
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use narrator_core::clock::{Clock, SystemClock};
use narrator_core::seed::SeedMatch;
use narrator_core::session::{
    read_transcript, replay, to_jsonl, OperatorAction, Session, SessionConfig, SessionEvent,
    SessionState, TranscriptWriter,
};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::watch;

use crate::config::ServiceConfig;
use crate::error::ApiError;
use crate::runtime::Runtime;
use crate::view::{stage, SessionView, StageView};

pub struct SessionHandle {
    turn: tokio::sync::Mutex<()>,
    session: Mutex<Session>,
    log: RwLock<Vec<SessionEvent>>,
    view: RwLock<Arc<SessionView>>,
    writer: Mutex<Option<TranscriptWriter>>,
    notify: watch::Sender<u64>,
}

impl SessionHandle {
    fn new(session: Session, writer: Option<TranscriptWriter>, restored: bool) -> Self {
        let view = Arc::new(SessionView::of(&session, restored));
        let log = session.events().to_vec();
        let (notify, _) = watch::channel(session.last_sequence());
        Self {
            turn: tokio::sync::Mutex::new(()),
            session: Mutex::new(session),
            log: RwLock::new(log),
            view: RwLock::new(view),
            writer: Mutex::new(writer),
            notify,
        }
    }

    pub fn view(&self) -> Arc<SessionView> {
        self.view.read().unwrap().clone()
    }

    pub fn events_after(&self, since: u64) -> Vec<SessionEvent> {
        let log = self.log.read().unwrap();
        log.get(since as usize..).map(<[_]>::to_vec).unwrap_or_default()
    }

    /// Runs one action. Must be called with the turn held.
    fn apply(
        &self,
        action: OperatorAction,
        clock: &dyn Clock,
        runtime: &Runtime,
    ) -> Result<Vec<SessionEvent>, ApiError> {
        let mut session = self.session.lock().unwrap();
        let restored = self.view().restored;
        let events = session.apply(action, clock, &runtime.services())?;
        if events.is_empty() {
            return Ok(events);
        }
        self.persist(&events);
        self.log.write().unwrap().extend(events.iter().cloned());
        *self.view.write().unwrap() = Arc::new(SessionView::of(&session, restored));
        self.notify.send_replace(session.last_sequence());
        Ok(events)
    }

    /// Appends to the transcript, forcing it to disk at publication
    /// boundaries. A failed write is logged; the show goes on.
    fn persist(&self, events: &[SessionEvent]) {
        let mut writer = self.writer.lock().unwrap();
        let Some(writer) = writer.as_mut() else {
            return;
        };
        let sync = events.iter().any(|e| {
            matches!(
                e.event,
                narrator_core::session::EventBody::PublicationCompleted { .. }
                    | narrator_core::session::EventBody::SessionCreated { .. }
            ) || matches!(e.operator_action(), Some(OperatorAction::EndSession))
        });
        if let Err(e) = writer.append(events, sync) {
            tracing::error!(error = %e, "transcript write failed");
        }
    }
}

pub struct AppOptions {
    pub auth_token: Option<String>,
    pub clock: Arc<dyn Clock>,
    pub transcripts_dir: Option<PathBuf>,
    pub speaking_dwell_ms: u64,
    pub defaults: SessionConfig,
}

struct Inner {
    runtime: Arc<Runtime>,
    sessions: RwLock<BTreeMap<String, Arc<SessionHandle>>>,
    options: AppOptions,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

impl AppState {
    pub fn new(runtime: Runtime, options: AppOptions) -> Self {
        Self(Arc::new(Inner {
            runtime: Arc::new(runtime),
            sessions: RwLock::new(BTreeMap::new()),
            options,
        }))
    }

    /// Builds the runtime from `config` and restores saved sessions.
    pub fn from_config(config: &ServiceConfig) -> anyhow::Result<Self> {
        let runtime = Runtime::from_config(config)?;
        let defaults = SessionConfig {
            generation: config.generation.clone(),
            policy: config.filter.policy.clone(),
        };
        if let Some(dir) = &config.transcripts_dir {
            std::fs::create_dir_all(dir)
                .with_context(|| format!("creating {}", dir.display()))?;
        }
        let app = Self::new(
            runtime,
            AppOptions {
                auth_token: config.resolve_auth_token()?,
                clock: Arc::new(SystemClock),
                transcripts_dir: config.transcripts_dir.clone(),
                speaking_dwell_ms: config.stage.speaking_dwell_ms,
                defaults,
            },
        );
        let restored = app.restore_sessions()?;
        if restored > 0 {
            tracing::info!(restored, "sessions restored from transcripts");
        }
        Ok(app)
    }

    pub fn runtime(&self) -> &Runtime {
        &self.0.runtime
    }

    pub fn session(&self, id: &str) -> Option<Arc<SessionHandle>> {
        self.0.sessions.read().unwrap().get(id).cloned()
    }

    fn transcript_path(&self, id: &str) -> Option<PathBuf> {
        self.0
            .options
            .transcripts_dir
            .as_ref()
            .map(|dir| dir.join(format!("{id}.jsonl")))
    }

    /// Loads every `*.jsonl` transcript in the transcripts directory. With a
    /// replay backend the log is replayed and verified; otherwise, or if
    /// replay fails, the session comes back without pending candidates.
    pub fn restore_sessions(&self) -> anyhow::Result<usize> {
        let Some(dir) = self.0.options.transcripts_dir.clone() else {
            return Ok(0);
        };
        let mut paths: Vec<PathBuf> = std::fs::read_dir(&dir)
            .with_context(|| format!("reading {}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
            .collect();
        paths.sort();
        let mut count = 0;
        for path in paths {
            match self.restore_one(&path) {
                Ok(()) => count += 1,
                Err(e) => tracing::warn!(path = %path.display(), error = %e, "skipping transcript"),
            }
        }
        Ok(count)
    }

    fn restore_one(&self, path: &Path) -> anyhow::Result<()> {
        let events = read_transcript(path)?;
        let (session, restored) = if self.0.runtime.replays {
            match replay(&events, &self.0.runtime.services()) {
                Ok(session) => (session, false),
                Err(e) => {
                    tracing::warn!(path = %path.display(), error = %e, "replay failed; restoring without candidates");
                    (Session::restore(&events)?, true)
                }
            }
        } else {
            (Session::restore(&events)?, true)
        };
        anyhow::ensure!(!session.session_id().is_empty(), "empty transcript");
        let writer = TranscriptWriter::open(path)?;
        let id = session.session_id().to_string();
        let handle = Arc::new(SessionHandle::new(session, Some(writer), restored));
        self.0.sessions.write().unwrap().insert(id, handle);
        Ok(())
    }

    fn check_auth(&self, headers: &HeaderMap, query_token: Option<&str>) -> Result<(), ApiError> {
        let Some(expected) = &self.0.options.auth_token else {
            return Ok(());
        };
        let presented = headers
            .get(header::AUTHORIZATION)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.strip_prefix("Bearer "))
            .or(query_token);
        if presented == Some(expected.as_str()) {
            Ok(())
        } else {
            Err(ApiError::unauthorized())
        }
    }

    fn lookup(&self, id: &str) -> Result<Arc<SessionHandle>, ApiError> {
        self.session(id).ok_or_else(|| ApiError::no_session(id))
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/healthz", get(|| async { Json(json!({"status": "ok"})) }))
            .route("/v1/sessions", post(create_session).get(list_sessions))
            .route("/v1/sessions/{id}/actions", post(post_action))
            .route("/v1/sessions/{id}/state", get(get_state))
            .route("/v1/sessions/{id}/stage", get(get_stage))
            .route("/v1/sessions/{id}/events", get(get_events))
            .route("/v1/sessions/{id}/transcript", get(get_transcript))
            .route("/v1/seed/query", post(seed_query))
            .with_state(self.clone())
    }
}

/// Deep-merges `overrides` into `base`.
fn merge(base: &mut Value, overrides: Value) {
    match (base, overrides) {
        (Value::Object(base), Value::Object(overrides)) => {
            for (k, v) in overrides {
                merge(base.entry(k).or_insert(Value::Null), v);
            }
        }
        (base, v) => *base = v,
    }
}

#[derive(Serialize)]
struct Created {
    session_id: String,
}

async fn create_session(
    State(app): State<AppState>,
    headers: HeaderMap,
    body: Bytes,
) -> Result<impl IntoResponse, ApiError> {
    app.check_auth(&headers, None)?;
    let overrides: Value = if body.iter().all(u8::is_ascii_whitespace) {
        json!({})
    } else {
        serde_json::from_slice(&body).map_err(|e| {
            ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "MalformedRequest", e.to_string())
        })?
    };
    let mut config = serde_json::to_value(&app.0.options.defaults).expect("config serializes");
    merge(&mut config, overrides);
    let config: SessionConfig = serde_json::from_value(config).map_err(|e| {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "InvalidConfig", e.to_string())
    })?;
    let session = Session::create(config, app.0.options.clock.as_ref())?;
    let id = session.session_id().to_string();
    let writer = match app.transcript_path(&id) {
        Some(path) => {
            let mut writer = TranscriptWriter::open(&path)
                .map_err(|e| ApiError::internal(format!("opening transcript: {e}")))?;
            writer
                .append(session.events(), true)
                .map_err(|e| ApiError::internal(format!("writing transcript: {e}")))?;
            Some(writer)
        }
        None => None,
    };
    let handle = Arc::new(SessionHandle::new(session, writer, false));
    app.0.sessions.write().unwrap().insert(id.clone(), handle);
    tracing::info!(session = %id, "session created");
    Ok((StatusCode::CREATED, Json(Created { session_id: id })))
}

#[derive(Serialize)]
struct Listed {
    session_id: String,
    state: SessionState,
    last_sequence: u64,
}

async fn list_sessions(
    State(app): State<AppState>,
    headers: HeaderMap,
) -> Result<Json<Value>, ApiError> {
    app.check_auth(&headers, None)?;
    let sessions: Vec<Listed> = app
        .0
        .sessions
        .read()
        .unwrap()
        .values()
        .map(|h| {
            let view = h.view();
            Listed {
                session_id: view.session_id.clone(),
                state: view.state,
                last_sequence: view.last_sequence,
            }
        })
        .collect();
    Ok(Json(json!({ "sessions": sessions })))
}

#[derive(Serialize)]
struct Applied {
    events: Vec<SessionEvent>,
}

async fn post_action(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
    body: Result<Json<OperatorAction>, axum::extract::rejection::JsonRejection>,
) -> Result<Json<Applied>, ApiError> {
    app.check_auth(&headers, None)?;
    let handle = app.lookup(&id)?;
    let Json(action) = body?;
    let _turn = handle.turn.lock().await;
    let worker = app.clone();
    let target = handle.clone();
    let events = tokio::task::spawn_blocking(move || {
        target.apply(action, worker.0.options.clock.as_ref(), &worker.0.runtime)
    })
    .await
    .map_err(|e| ApiError::internal(format!("action task failed: {e}")))??;
    Ok(Json(Applied { events }))
}

async fn get_state(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
) -> Result<Json<SessionView>, ApiError> {
    app.check_auth(&headers, None)?;
    Ok(Json(SessionView::clone(&app.lookup(&id)?.view())))
}

/// Unauthenticated so a display device needs no credentials.
async fn get_stage(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<StageView>, ApiError> {
    let view = app.lookup(&id)?.view();
    Ok(Json(stage(
        &view,
        app.0.options.clock.now(),
        app.0.options.speaking_dwell_ms,
    )))
}

async fn get_transcript(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    headers: HeaderMap,
) -> Result<impl IntoResponse, ApiError> {
    app.check_auth(&headers, None)?;
    let handle = app.lookup(&id)?;
    let body = to_jsonl(&handle.log.read().unwrap());
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], body))
}

#[derive(Deserialize)]
struct EventsQuery {
    since: Option<u64>,
    /// For clients that cannot set headers (browser EventSource).
    access_token: Option<String>,
}

struct Cursor {
    handle: Arc<SessionHandle>,
    delivered: u64,
    rx: watch::Receiver<u64>,
    pending: VecDeque<SessionEvent>,
}

/// Server-sent events after `since` (or `Last-Event-ID`), then live ones.
/// `id:` is the event sequence. The stream closes once an ended session has
/// nothing left to send.
async fn get_events(
    State(app): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(query): Query<EventsQuery>,
    headers: HeaderMap,
) -> Result<Sse<impl Stream<Item = Result<Event, Infallible>>>, ApiError> {
    app.check_auth(&headers, query.access_token.as_deref())?;
    let handle = app.lookup(&id)?;
    let last_event_id = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.trim().parse::<u64>().ok());
    let cursor = Cursor {
        rx: handle.notify.subscribe(),
        handle,
        delivered: last_event_id.or(query.since).unwrap_or(0),
        pending: VecDeque::new(),
    };
    let stream = futures::stream::unfold(cursor, |mut c| async move {
        loop {
            if let Some(event) = c.pending.pop_front() {
                c.delivered = event.sequence;
                let sse = Event::default()
                    .id(event.sequence.to_string())
                    .data(event.to_json_line());
                return Some((Ok(sse), c));
            }
            c.rx.borrow_and_update();
            let fresh = c.handle.events_after(c.delivered);
            if !fresh.is_empty() {
                c.pending.extend(fresh);
                continue;
            }
            if c.handle.view().state == SessionState::Ended {
                return None;
            }
            if c.rx.changed().await.is_err() {
                return None;
            }
        }
    });
    Ok(Sse::new(stream).keep_alive(KeepAlive::new().interval(Duration::from_secs(15))))
}

#[derive(Deserialize)]
struct SeedQuery {
    suggestion: String,
    #[serde(default = "default_k")]
    k: usize,
}

fn default_k() -> usize {
    5
}

async fn seed_query(
    State(app): State<AppState>,
    headers: HeaderMap,
    body: Result<Json<SeedQuery>, axum::extract::rejection::JsonRejection>,
) -> Result<Json<Value>, ApiError> {
    app.check_auth(&headers, None)?;
    let Json(query) = body?;
    if query.k == 0 || query.suggestion.trim().is_empty() {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            "InvalidAction",
            "suggestion must be non-empty and k >= 1",
        ));
    }
    let Some(seeds) = app.0.runtime.seeds.clone() else {
        return Err(ApiError::new(
            StatusCode::SERVICE_UNAVAILABLE,
            "SeedUnavailable",
            "no seed corpus is loaded",
        ));
    };
    let matches: Vec<SeedMatch> =
        tokio::task::spawn_blocking(move || seeds.query(&query.suggestion, query.k))
            .await
            .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(Json(json!({ "matches": matches })))
}

/// Binds `config.listen` and serves until Ctrl-C.
pub async fn serve(config: &ServiceConfig) -> anyhow::Result<()> {
    let app = AppState::from_config(config)?;
    let listener = tokio::net::TcpListener::bind(config.listen)
        .await
        .with_context(|| format!("binding {}", config.listen))?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, app.router())
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
