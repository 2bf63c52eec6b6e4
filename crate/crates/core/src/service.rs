//! HTTP service behind the annotation UI.
//!
//! ```text
//! GET  /api/session/next[?cursor=c]  -> 200 task | 204 when drained
//! POST /api/session/submit           {"task_id","best","worst"} -> 200 progress | 409 done
//! GET  /api/session/progress         -> {"done","pending","consumed_annotations"}
//! GET  /api/task/{id}                -> 200 task | 404
//! ```
//!
//! Tasks are served without pool indices or provenance. Every judgment is
//! journaled (and fsynced) before it is acknowledged.

use std::future::Future;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

use crate::annotation::{enqueue_human_task, Session};
use crate::config::RunConfig;
use crate::dataset::write_preferences;
use crate::error::{Error, Result};
use crate::pipeline::{load_selections, Corpus};

pub struct ServiceState {
    pub session: Mutex<Session>,
    /// Preference file rewritten after every accepted judgment.
    pub output: Option<PathBuf>,
}

impl ServiceState {
    pub fn new(session: Session, output: Option<PathBuf>) -> Arc<Self> {
        Arc::new(Self {
            session: Mutex::new(session),
            output,
        })
    }

    pub fn flush(&self) -> Result<()> {
        if let Some(out) = &self.output {
            let session = self.session.lock().expect("session lock poisoned");
            write_preferences(&session.pairs(), out)?;
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct CursorQuery {
    cursor: Option<String>,
}

#[derive(Deserialize)]
struct Submission {
    task_id: String,
    best: usize,
    worst: usize,
}

fn error_response(err: Error) -> Response {
    let status = match &err {
        Error::TaskDone(_) => StatusCode::CONFLICT,
        Error::TaskNotFound(_) => StatusCode::NOT_FOUND,
        Error::InvalidJudgment(_) => StatusCode::UNPROCESSABLE_ENTITY,
        _ => StatusCode::INTERNAL_SERVER_ERROR,
    };
    (status, Json(json!({ "error": err.to_string() }))).into_response()
}

async fn next_task(State(state): State<Arc<ServiceState>>, Query(q): Query<CursorQuery>) -> Response {
    let cursor = q.cursor.unwrap_or_else(|| "default".into());
    let mut session = state.session.lock().expect("session lock poisoned");
    match session.next_for(&cursor) {
        Some(task) => Json(task.view()).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    }
}

async fn submit(State(state): State<Arc<ServiceState>>, Json(s): Json<Submission>) -> Response {
    let progress = {
        let mut session = state.session.lock().expect("session lock poisoned");
        if let Err(e) = session.submit(&s.task_id, s.best, s.worst) {
            return error_response(e);
        }
        session.progress()
    };
    if let Err(e) = state.flush() {
        return error_response(e);
    }
    Json(progress).into_response()
}

async fn progress(State(state): State<Arc<ServiceState>>) -> Response {
    let session = state.session.lock().expect("session lock poisoned");
    Json(session.progress()).into_response()
}

async fn task(State(state): State<Arc<ServiceState>>, UrlPath(id): UrlPath<String>) -> Response {
    let session = state.session.lock().expect("session lock poisoned");
    match session.task(&id) {
        Some(t) => Json(t.view()).into_response(),
        None => error_response(Error::TaskNotFound(id)),
    }
}

const PLACEHOLDER: &str = "<!doctype html><title>annotation</title>\
<p>No UI assets configured. Start the server with <code>--assets DIR</code>, \
or drive <code>/api/session</code> directly.</p>";

pub fn router(state: Arc<ServiceState>, assets: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/session/next", get(next_task))
        .route("/api/session/submit", post(submit))
        .route("/api/session/progress", get(progress))
        .route("/api/task/{id}", get(task))
        .with_state(state);
    match assets {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(|| async { Html(PLACEHOLDER) })),
    }
}

/// Serves until `shutdown` resolves, then writes the preference file.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<ServiceState>,
    assets: Option<PathBuf>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> Result<()> {
    let addr = listener
        .local_addr()
        .map(|a| a.to_string())
        .unwrap_or_default();
    axum::serve(listener, router(state.clone(), assets))
        .with_graceful_shutdown(shutdown)
        .await
        .map_err(|e| Error::io(addr, e))?;
    state.flush()
}

/// Opens the journaled session, queues any selections not yet in it, and
/// serves until interrupted.
pub fn run_serve(config: &RunConfig) -> Result<()> {
    let journal = config
        .journal
        .as_ref()
        .ok_or_else(|| Error::Config("serve needs --journal".into()))?;
    let mut session = Session::open(journal, config.seed)?;
    if let Some(selection) = &config.selection {
        let corpus = Corpus::load(config)?;
        for rec in load_selections(selection)? {
            if session.task(&rec.id).is_some() {
                continue;
            }
            let pool = corpus
                .pool(&rec.id)
                .ok_or_else(|| Error::MissingId(rec.id.clone()))?;
            enqueue_human_task(&rec.to_result(), pool, &mut session)?;
        }
    }
    let output = (!config.output.as_os_str().is_empty()).then(|| config.output.clone());
    let state = ServiceState::new(session, output);

    let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io("tokio runtime", e))?;
    runtime.block_on(async {
        let addr = SocketAddr::from(([0, 0, 0, 0], config.port));
        let listener = tokio::net::TcpListener::bind(addr)
            .await
            .map_err(|e| Error::io(addr.to_string(), e))?;
        eprintln!("serving annotation session on http://{addr}");
        serve(listener, state, config.assets.clone(), async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
    })
}
