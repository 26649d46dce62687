//! Session-oriented HTTP/JSON API for the interactive feedback loop.
//!
//! Each session owns a personalized model that is retrained synchronously on
//! every feedback request. Requests for one session are serialized in arrival
//! order; distinct sessions proceed concurrently. Accepted events are appended
//! to a per-session log before the response is sent, so a restarted server
//! replays every session to the same state.

pub mod api;
pub mod error;
pub mod store;
pub mod views;

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{StatusCode, Uri};
use axum::routing::{get, post};
use axum::{Json, Router};
use fairloop_core::artifacts::Baseline;
use fairloop_core::integration::{to_jsonl, FeedbackInstance};
use fairloop_core::session::Session;
use serde::Deserialize;
use tokio::sync::Mutex;

use api::{
    CreateSessionRequest, ExportResponse, FeedbackRequest, FeedbackResponse, ReplaySettings, SessionDescriptor,
    StepView, UndoResponse, API_SCHEMA_VERSION,
};
pub use error::ApiError;
use store::{SessionEvent, SessionStore};
pub use views::Loaded;

type SessionHandle = Arc<Mutex<Session>>;

/// Counts from replaying stored session logs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Recovery {
    pub recovered: usize,
    pub skipped: Vec<(String, String)>,
}

pub struct AppState {
    baseline: RwLock<Option<Arc<Loaded>>>,
    sessions: RwLock<HashMap<String, SessionHandle>>,
    store: Option<SessionStore>,
}

impl AppState {
    pub fn new(store: Option<SessionStore>) -> Arc<Self> {
        Arc::new(Self {
            baseline: RwLock::new(None),
            sessions: RwLock::new(HashMap::new()),
            store,
        })
    }

    /// Installs the baseline and replays stored sessions created against it.
    pub fn set_baseline(&self, loaded: Loaded) -> Recovery {
        let loaded = Arc::new(loaded);
        let recovery = self.recover(&loaded);
        *self.baseline.write().expect("baseline lock") = Some(loaded);
        recovery
    }

    pub fn loaded(&self) -> Result<Arc<Loaded>, ApiError> {
        self.baseline
            .read()
            .expect("baseline lock")
            .clone()
            .ok_or_else(ApiError::baseline_unavailable)
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().expect("session map lock").len()
    }

    fn session(&self, id: &str) -> Result<SessionHandle, ApiError> {
        self.sessions
            .read()
            .expect("session map lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::session_not_found(id))
    }

    fn record(&self, session_id: &str, event: &SessionEvent) -> Result<(), ApiError> {
        match &self.store {
            Some(s) => s
                .append(session_id, event)
                .map_err(|e| ApiError::internal(format!("session log write failed: {e}"))),
            None => Ok(()),
        }
    }

    fn recover(&self, loaded: &Arc<Loaded>) -> Recovery {
        let mut out = Recovery::default();
        let Some(store) = &self.store else {
            return out;
        };
        let stored = match store.load_all() {
            Ok(s) => s,
            Err(e) => {
                log::warn!("cannot read session store {}: {e}", store.dir().display());
                return out;
            }
        };
        for s in stored {
            match replay_events(loaded, &s.events) {
                Ok(session) => {
                    if s.truncated_at.is_some() {
                        if let Err(e) = store.rewrite(&s.session_id, &s.events) {
                            out.skipped.push((s.session_id, format!("cannot compact log: {e}")));
                            continue;
                        }
                    }
                    self.sessions
                        .write()
                        .expect("session map lock")
                        .insert(s.session_id, Arc::new(Mutex::new(session)));
                    out.recovered += 1;
                }
                Err(reason) => {
                    log::warn!("skipping stored session {}: {reason}", s.session_id);
                    out.skipped.push((s.session_id, reason));
                }
            }
        }
        out
    }
}

/// Rebuilds a session from its event log.
pub fn replay_events(loaded: &Arc<Loaded>, events: &[SessionEvent]) -> Result<Session, String> {
    let Some(SessionEvent::Created {
        session_id,
        participant_id,
        baseline_fingerprint,
    }) = events.first()
    else {
        return Err("log does not start with a created event".into());
    };
    if baseline_fingerprint != loaded.baseline_fingerprint() {
        return Err(format!("created against baseline {baseline_fingerprint}"));
    }
    let mut session = Session::new(session_id, participant_id, loaded.ctx.clone());
    for (i, e) in events.iter().enumerate().skip(1) {
        let r = match e {
            SessionEvent::Feedback { instance: f } => session
                .feedback(&f.application_id, f.label, f.weights.clone(), f.timestamp_ms)
                .map(drop),
            SessionEvent::Undo => session.undo().map(drop),
            SessionEvent::Created { .. } => return Err(format!("event {} repeats created", i + 1)),
        };
        r.map_err(|e| format!("event {}: {e}", i + 1))?;
    }
    Ok(session)
}

fn parse_json<T: for<'de> Deserialize<'de> + Default>(body: &Bytes, allow_empty: bool) -> Result<T, ApiError> {
    if allow_empty && body.iter().all(u8::is_ascii_whitespace) {
        return Ok(T::default());
    }
    serde_json::from_slice(body).map_err(|e| {
        let (status, code) = if e.is_data() {
            (StatusCode::UNPROCESSABLE_ENTITY, "invalid_payload")
        } else {
            (StatusCode::BAD_REQUEST, "malformed_json")
        };
        ApiError::new(status, code, e.to_string())
    })
}

fn parse_query<T: for<'de> Deserialize<'de>>(uri: &Uri) -> Result<T, ApiError> {
    Query::<T>::try_from_uri(uri)
        .map(|q| q.0)
        .map_err(|e| ApiError::bad_request("invalid_query", e.body_text()))
}

#[derive(Debug, Default, Deserialize)]
struct AttributesQuery {
    attributes: Option<String>,
}

fn now_ms() -> i64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as i64)
        .unwrap_or(0)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(format!("worker failed: {e}")))?
}

async fn create_session(
    State(st): State<Arc<AppState>>,
    body: Bytes,
) -> Result<(StatusCode, Json<SessionDescriptor>), ApiError> {
    let loaded = st.loaded()?;
    let req: CreateSessionRequest = parse_json(&body, true)?;
    let session_id = uuid::Uuid::new_v4().simple().to_string();
    let participant_id = req
        .participant_id
        .filter(|p| !p.trim().is_empty())
        .unwrap_or_else(|| session_id.clone());
    st.record(
        &session_id,
        &SessionEvent::Created {
            session_id: session_id.clone(),
            participant_id: participant_id.clone(),
            baseline_fingerprint: loaded.baseline_fingerprint().to_string(),
        },
    )?;
    let session = Session::new(&session_id, &participant_id, loaded.ctx.clone());
    st.sessions
        .write()
        .expect("session map lock")
        .insert(session_id.clone(), Arc::new(Mutex::new(session)));
    Ok((
        StatusCode::CREATED,
        Json(SessionDescriptor {
            schema_version: API_SCHEMA_VERSION,
            session_id,
            participant_id,
            baseline_fingerprint: loaded.baseline_fingerprint().to_string(),
            attributes: loaded.attributes.clone(),
            default_attributes: loaded.default_attributes.clone(),
            n_applications: loaded.ctx.pool().len(),
            feature_weights: loaded.ctx.baseline_fw().as_map().clone(),
            policy: views::SESSION_POLICY,
        }),
    ))
}

async fn list_applications(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    uri: Uri,
) -> Result<Json<api::ApplicationsResponse>, ApiError> {
    let loaded = st.loaded()?;
    let handle = st.session(&id)?;
    let q: views::ApplicationsQuery = parse_query(&uri)?;
    let session = handle.lock_owned().await;
    blocking(move || {
        let (total, applications) = views::applications(&loaded, &session, &q)?;
        Ok(Json(api::ApplicationsResponse {
            schema_version: API_SCHEMA_VERSION,
            session_id: session.id().to_string(),
            step: session.undo_depth(),
            total,
            applications,
        }))
    })
    .await
}

async fn get_metrics(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    uri: Uri,
) -> Result<Json<api::MetricsResponse>, ApiError> {
    let loaded = st.loaded()?;
    let handle = st.session(&id)?;
    let q: AttributesQuery = parse_query(&uri)?;
    let attributes = loaded.parse_attributes(q.attributes.as_deref())?;
    let session = handle.lock_owned().await;
    blocking(move || views::metrics(&loaded, &session, &attributes).map(Json)).await
}

async fn post_feedback(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    uri: Uri,
    body: Bytes,
) -> Result<Json<FeedbackResponse>, ApiError> {
    let loaded = st.loaded()?;
    let handle = st.session(&id)?;
    let q: AttributesQuery = parse_query(&uri)?;
    let attributes = loaded.parse_attributes(q.attributes.as_deref())?;
    let req: FeedbackRequest = serde_json::from_slice(&body).map_err(|e| {
        let (status, code) = if e.is_data() {
            (StatusCode::UNPROCESSABLE_ENTITY, "invalid_feedback")
        } else {
            (StatusCode::BAD_REQUEST, "malformed_json")
        };
        ApiError::new(status, code, e.to_string())
    })?;
    let mut session = handle.lock_owned().await;
    blocking(move || {
        let step = session.feedback(
            &req.application_id,
            req.label,
            req.weights,
            req.timestamp_ms.unwrap_or_else(now_ms),
        )?;
        let event = SessionEvent::Feedback {
            instance: step.instance.clone(),
        };
        if let Err(e) = st.record(session.id(), &event) {
            session.undo()?;
            return Err(e);
        }
        let row = loaded.ctx.pool().position(&req.application_id).expect("feedback accepted");
        Ok(Json(FeedbackResponse {
            schema_version: API_SCHEMA_VERSION,
            summary: StepView {
                step: step.step,
                model_fingerprint: step.state.model.fingerprint().to_string(),
                n_feedback_rows: step.state.n_feedback_rows,
                feature_weights: step.state.fw.as_map().clone(),
                deltas_vs_previous: step.deltas_vs_previous,
                deltas_vs_baseline: step.deltas_vs_baseline,
                warnings: step.warnings,
                instance: step.instance,
            },
            application: views::application_view(&loaded, &session, row),
            metrics: views::metrics(&loaded, &session, &attributes)?,
        }))
    })
    .await
}

async fn post_undo(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    uri: Uri,
) -> Result<Json<UndoResponse>, ApiError> {
    let loaded = st.loaded()?;
    let handle = st.session(&id)?;
    let q: AttributesQuery = parse_query(&uri)?;
    let attributes = loaded.parse_attributes(q.attributes.as_deref())?;
    let mut session = handle.lock_owned().await;
    blocking(move || {
        if session.undo_depth() == 0 {
            return Err(fairloop_core::session::SessionError::EmptyUndo.into());
        }
        st.record(session.id(), &SessionEvent::Undo)?;
        let undone = session.undo()?;
        Ok(Json(UndoResponse {
            schema_version: API_SCHEMA_VERSION,
            undone,
            metrics: views::metrics(&loaded, &session, &attributes)?,
        }))
    })
    .await
}

async fn export(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
) -> Result<Json<ExportResponse>, ApiError> {
    let loaded = st.loaded()?;
    let handle = st.session(&id)?;
    let session = handle.lock_owned().await;
    let log: Vec<FeedbackInstance> = session.log();
    let model = &session.current().model;
    let model_json = model.to_json().map_err(|e| ApiError::internal(e.to_string()))?;
    let policy = loaded.ctx.policy();
    Ok(Json(ExportResponse {
        schema_version: API_SCHEMA_VERSION,
        session_id: session.id().to_string(),
        participant_id: session.participant_id().to_string(),
        feedback_jsonl: to_jsonl(&log),
        model_fingerprint: model.fingerprint().to_string(),
        model: serde_json::from_str(&model_json).map_err(|e| ApiError::internal(e.to_string()))?,
        replay: ReplaySettings {
            mode: "personalized".into(),
            policy: policy.kind,
            alpha: policy.alpha,
            flip_reference: loaded.ctx.flip_reference(),
            baseline_fingerprint: loaded.baseline_fingerprint().to_string(),
        },
    }))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/applications", get(list_applications))
        .route("/sessions/{id}/metrics", get(get_metrics))
        .route("/sessions/{id}/feedback", post(post_feedback))
        .route("/sessions/{id}/undo", post(post_undo))
        .route("/sessions/{id}/export", get(export))
        .with_state(state)
}

/// Loads a baseline directory off the async runtime and installs it. Until
/// it completes, session creation answers 503.
pub fn spawn_baseline_load(state: Arc<AppState>, dir: &Path) -> tokio::task::JoinHandle<Result<Recovery, String>> {
    let dir = dir.to_path_buf();
    tokio::task::spawn_blocking(move || {
        let baseline = Baseline::read(&dir).map_err(|e| e.to_string())?;
        let loaded = Loaded::from_baseline(&baseline).map_err(|e| e.to_string())?;
        Ok(state.set_baseline(loaded))
    })
}

pub async fn serve(listener: tokio::net::TcpListener, state: Arc<AppState>) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
