//! HTTP routes and the shared service state.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex, RwLock};

use adaptrl_core::content::OptionLabel;
use adaptrl_core::design::{Design, DesignId};
use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::config::{Catalog, ConfigError, ServiceConfig};
use crate::session::{Advance, QuestionView, RevealPayload, Session, SessionError, SessionState, Summary};
use crate::store::{EpisodeSink, Snapshots};

/// Environment variable holding the listen address.
pub const ADDR_ENV: &str = "ADAPTRL_ADDR";
pub const DEFAULT_ADDR: &str = "127.0.0.1:8080";

#[derive(Debug, Error)]
pub enum StartupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("storage: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad listen address {0:?}")]
    Addr(String),
}

// ── Errors ──────────────────────────────────────────────────────────────

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("{0}")]
    NotFound(String),
    #[error("{message}")]
    Validation { status: StatusCode, message: String },
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Internal(String),
}

impl ApiError {
    fn validation(message: impl Into<String>) -> ApiError {
        ApiError::Validation {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            message: message.into(),
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::Validation(m) => ApiError::validation(m),
            SessionError::Conflict(m) => ApiError::Conflict(m),
            SessionError::Internal(m) => ApiError::Internal(m),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(r: JsonRejection) -> Self {
        ApiError::Validation {
            status: r.status(),
            message: r.body_text(),
        }
    }
}

impl From<std::io::Error> for ApiError {
    fn from(e: std::io::Error) -> Self {
        ApiError::Internal(format!("storage: {e}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind) = match &self {
            ApiError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ApiError::Validation { status, .. } => (*status, "validation"),
            ApiError::Conflict(_) => (StatusCode::CONFLICT, "conflict"),
            ApiError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        (status, Json(json!({ "error": kind, "message": self.to_string() }))).into_response()
    }
}

// ── State ───────────────────────────────────────────────────────────────

type SessionCell = Arc<Mutex<Session>>;

#[derive(Debug)]
pub struct AppState {
    pub catalog: Catalog,
    sessions: RwLock<HashMap<String, SessionCell>>,
    sink: EpisodeSink,
    snapshots: Snapshots,
}

impl AppState {
    /// Load the catalog, open the episode file, and resume stored sessions.
    pub fn new(cfg: &ServiceConfig) -> Result<AppState, StartupError> {
        let catalog = Catalog::build(cfg)?;
        let sink = EpisodeSink::open(&cfg.episodes_path)?;
        let snapshots = Snapshots::new(cfg.snapshot_dir.clone())?;
        let sessions = snapshots
            .load_all()?
            .into_iter()
            .map(|s| (s.session_id.clone(), Arc::new(Mutex::new(s))))
            .collect();
        Ok(AppState {
            catalog,
            sessions: RwLock::new(sessions),
            sink,
            snapshots,
        })
    }

    fn cell(&self, id: &str) -> Result<SessionCell, ApiError> {
        self.sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("no session {id}")))
    }

    /// A copy of a session's full internal record.
    pub fn session(&self, id: &str) -> Option<Session> {
        let cell = self.cell(id).ok()?;
        let s = cell.lock().unwrap_or_else(|p| p.into_inner()).clone();
        Some(s)
    }

    pub fn session_count(&self) -> usize {
        self.sessions.read().unwrap_or_else(|p| p.into_inner()).len()
    }
}

// ── Handlers ────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateRequest {
    pub design_id: String,
    pub policy_id: String,
    pub content_pack_id: String,
    pub nfc_responses: Vec<i64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateResponse {
    pub session_id: String,
    pub question: QuestionView,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AnswerRequest {
    pub choice: OptionLabel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AnswerResponse {
    Next { question: QuestionView },
    Finished { summary: Summary },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    #[serde(flatten)]
    pub state: SessionState,
    pub question: Option<QuestionView>,
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn questionnaire(State(app): State<Arc<AppState>>) -> Json<serde_json::Value> {
    Json(json!({
        "items": app.catalog.nfc_items,
        "scale": { "min": crate::session::LIKERT_MIN, "max": crate::session::LIKERT_MAX },
    }))
}

async fn create_session(
    State(app): State<Arc<AppState>>,
    body: Result<Json<CreateRequest>, JsonRejection>,
) -> Result<(StatusCode, Json<CreateResponse>), ApiError> {
    let Json(req) = body?;
    // shape first, then references
    app.catalog.scoring.score(&req.nfc_responses)?;
    let design_id: DesignId = req
        .design_id
        .parse()
        .map_err(|_| ApiError::NotFound(format!("no design {}", req.design_id)))?;
    let policy = app
        .catalog
        .policies
        .get(&req.policy_id)
        .ok_or_else(|| ApiError::NotFound(format!("no policy {}", req.policy_id)))?;
    let pack = app
        .catalog
        .packs
        .get(&req.content_pack_id)
        .ok_or_else(|| ApiError::NotFound(format!("no content pack {}", req.content_pack_id)))?;

    let session_id = uuid::Uuid::new_v4().to_string();
    let seed: u64 = rand::rng().random();
    let session = Session::start(
        session_id.clone(),
        &Design::new(design_id),
        &req.policy_id,
        policy,
        &req.content_pack_id,
        pack,
        &req.nfc_responses,
        &app.catalog.scoring,
        seed,
    )?;
    let question = session.current_question(pack)?.expect("new session has a question");
    app.snapshots.save(&session)?;
    app.sessions
        .write()
        .unwrap_or_else(|p| p.into_inner())
        .insert(session_id.clone(), Arc::new(Mutex::new(session)));
    Ok((StatusCode::CREATED, Json(CreateResponse { session_id, question })))
}

/// Lock one session and look up what it references.
fn with_session<T>(
    app: &AppState,
    id: &str,
    f: impl FnOnce(&mut Session, &Catalog) -> Result<T, ApiError>,
) -> Result<T, ApiError> {
    let cell = app.cell(id)?;
    let mut session = cell.lock().unwrap_or_else(|p| p.into_inner());
    f(&mut session, &app.catalog)
}

fn lookup<'c, T>(map: &'c std::collections::BTreeMap<String, Arc<T>>, id: &str, what: &str) -> Result<&'c T, ApiError> {
    map.get(id)
        .map(|a| a.as_ref())
        .ok_or_else(|| ApiError::Internal(format!("session references unloaded {what} {id}")))
}

async fn get_session(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    with_session(&app, &id, |s, cat| {
        let pack = lookup(&cat.packs, &s.pack_id, "content pack")?;
        Ok(Json(SessionView {
            session_id: s.session_id.clone(),
            state: s.state(),
            question: s.current_question(pack)?,
        }))
    })
}

async fn answer(
    State(app): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Json<AnswerRequest>, JsonRejection>,
) -> Result<Json<AnswerResponse>, ApiError> {
    let cell = app.cell(&id)?;
    let Json(req) = body?;
    let mut s = cell.lock().unwrap_or_else(|p| p.into_inner());
    let pack = lookup(&app.catalog.packs, &s.pack_id, "content pack")?;
    let policy = lookup(&app.catalog.policies, &s.policy_id, "policy")?;
    let design = Design::new(s.design_id);
    // work on a copy so a failed write leaves the session untouched
    let mut next = s.clone();
    let response = match next.answer(req.choice, pack, policy, &design)? {
        Advance::Next(question) => AnswerResponse::Next { question },
        Advance::Finished(episode) => {
            app.sink.append(&episode)?;
            AnswerResponse::Finished {
                summary: next.summary()?,
            }
        }
    };
    app.snapshots.save(&next)?;
    *s = next;
    Ok(Json(response))
}

async fn reveal(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<RevealPayload>, ApiError> {
    with_session(&app, &id, |s, cat| {
        let pack = lookup(&cat.packs, &s.pack_id, "content pack")?;
        let mut next = s.clone();
        let payload = next.reveal(pack)?;
        if next != *s {
            app.snapshots.save(&next)?;
            *s = next;
        }
        Ok(Json(payload))
    })
}

async fn summary(State(app): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<Summary>, ApiError> {
    with_session(&app, &id, |s, _| Ok(Json(s.summary()?)))
}

pub fn router(app: Arc<AppState>) -> Router {
    Router::new()
        .route("/v1/healthz", get(healthz))
        .route("/v1/questionnaire", get(questionnaire))
        .route("/v1/sessions", post(create_session))
        .route("/v1/sessions/{id}", get(get_session))
        .route("/v1/sessions/{id}/answer", post(answer))
        .route("/v1/sessions/{id}/reveal", post(reveal))
        .route("/v1/sessions/{id}/summary", get(summary))
        .with_state(app)
}

/// The listen address from `ADAPTRL_ADDR`, or the default.
pub fn listen_addr() -> Result<SocketAddr, StartupError> {
    let raw = std::env::var(ADDR_ENV).unwrap_or_else(|_| DEFAULT_ADDR.to_string());
    raw.parse().map_err(|_| StartupError::Addr(raw))
}

/// Serve until Ctrl-C.
pub async fn serve(app: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(app))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
