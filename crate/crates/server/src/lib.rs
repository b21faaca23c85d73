//! Live session service: runs the questionnaire and the vignette task for
//! human participants, asks a loaded policy which assistance to show, and
//! writes each finished session to the episode file.
//!
//! Routes (JSON bodies):
//!
//! - `POST /v1/sessions` → 201 `{session_id, question}`
//! - `GET /v1/sessions/{id}` → current state and question, for resuming
//! - `POST /v1/sessions/{id}/answer` with `{choice: "a" | "b"}` → `{status: "next", question}` or `{status: "finished", summary}`
//! - `POST /v1/sessions/{id}/reveal` → on-demand payload, or 409
//! - `GET /v1/sessions/{id}/summary` → 200 once finished, else 409
//! - `GET /v1/questionnaire`, `GET /v1/healthz`

pub mod api;
pub mod config;
pub mod session;
pub mod store;

pub use api::{listen_addr, router, serve, AppState, StartupError, ADDR_ENV};
pub use config::{Catalog, ConfigError, PackSource, ServiceConfig};
pub use session::{Assistance, QuestionView, RevealPayload, Session, SessionError, Summary};
