//! HTTP/JSON gateway under `/api/v1`.

use std::net::SocketAddr;
use std::path::Path;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use lexprobe_core::{Error as EngineError, Feedback, NoiseConfig, OdConfig, Policy, SessionConfig, SessionTrace};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::net::TcpListener;

use crate::kgfile::{self, KgDocument};
use crate::store::{SessionStore, StoreError};
use crate::wire::{self, BeliefJson, EigRow, LexiconEntryJson, PolicyName, StatusName, TraceJson};

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    detail: Value,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            detail: Value::Null,
        }
    }

    fn with_detail(mut self, detail: Value) -> Self {
        self.detail = detail;
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "code": self.code, "message": self.message, "detail": self.detail });
        (self.status, Json(body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let message = e.to_string();
        match e {
            StoreError::UnknownKg(id) => {
                ApiError::new(StatusCode::NOT_FOUND, "unknown_kg", message).with_detail(json!({ "kg": id }))
            }
            StoreError::UnknownSession(id) => ApiError::new(StatusCode::NOT_FOUND, "unknown_session", message)
                .with_detail(json!({ "session_id": id })),
            StoreError::Io(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage_failure", message),
            StoreError::Engine(e) => engine_error(e, message),
        }
    }
}

fn engine_error(e: EngineError, message: String) -> ApiError {
    use EngineError::*;
    let unprocessable = StatusCode::UNPROCESSABLE_ENTITY;
    match e {
        ClickOutsideBundle(p) => {
            ApiError::new(unprocessable, "click_outside_bundle", message).with_detail(json!({ "clicked": p }))
        }
        UnknownProduct(p) => {
            ApiError::new(unprocessable, "unknown_product", message).with_detail(json!({ "clicked": p }))
        }
        NotAwaitingFeedback => ApiError::new(StatusCode::CONFLICT, "session_not_active", message),
        InvalidConfig(_) | BundleSizeOutOfRange { .. } | TooManyCandidates { .. } => {
            ApiError::new(unprocessable, "invalid_config", message)
        }
        _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "engine_failure", message),
    }
}

fn bad_body(r: JsonRejection) -> ApiError {
    ApiError::new(r.status(), "bad_request", r.body_text())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub kg: String,
    pub query: String,
    pub bundle_size: Option<usize>,
    pub epsilon: Option<f64>,
    pub epsilon_noclick: Option<f64>,
    pub threshold: Option<f64>,
    pub max_steps: Option<usize>,
    pub policy: Option<PolicyName>,
    /// Random-policy seed; drawn at random when absent.
    pub seed: Option<u64>,
    pub od_min: Option<f64>,
}

impl CreateSession {
    fn config(&self) -> Result<SessionConfig, ApiError> {
        let d = SessionConfig::default();
        let epsilon = self.epsilon.unwrap_or(d.noise.epsilon);
        let policy = match (self.policy.unwrap_or(PolicyName::Eig), self.seed) {
            (PolicyName::Eig, None) => Policy::Eig,
            (PolicyName::Eig, Some(_)) => {
                return Err(ApiError::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    "invalid_config",
                    "a seed only applies to the random policy",
                ))
            }
            (PolicyName::Random, seed) => Policy::Random {
                seed: seed.unwrap_or_else(|| uuid::Uuid::new_v4().as_u64_pair().0),
            },
        };
        Ok(SessionConfig {
            bundle_size: self.bundle_size.unwrap_or(d.bundle_size),
            noise: NoiseConfig {
                epsilon,
                epsilon_noclick: self.epsilon_noclick.unwrap_or(epsilon),
            },
            convergence_threshold: self.threshold.unwrap_or(d.convergence_threshold),
            max_steps: self.max_steps.unwrap_or(d.max_steps),
            policy,
            od: OdConfig {
                od_min: self.od_min.unwrap_or(d.od.od_min),
            },
            max_candidates: d.max_candidates,
        })
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubmitFeedback {
    /// Required; `null` means the user clicked nothing.
    clicked: Value,
}

#[derive(Debug, Serialize)]
pub struct SessionView {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub session_id: Option<String>,
    pub status: StatusName,
    pub bundle: Option<Vec<String>>,
    pub belief: BeliefJson,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lexicon_entry: Option<LexiconEntryJson>,
}

impl SessionView {
    fn of(trace: &SessionTrace, with_id: bool) -> Self {
        Self {
            session_id: with_id.then(|| trace.session_id().to_string()),
            status: StatusName::from(trace.status()),
            bundle: trace.pending_bundle().map(wire::bundle_json),
            belief: wire::belief_json(trace.belief()),
            lexicon_entry: wire::lexicon_entry_json(trace),
        }
    }
}

type AppState = Arc<SessionStore>;

/// Runs a store call off the async workers; log appends block on fsync.
async fn blocking<T, F>(store: &AppState, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&SessionStore) -> Result<T, StoreError> + Send + 'static,
{
    let store = store.clone();
    tokio::task::spawn_blocking(move || f(&store))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}

async fn create_session(
    State(store): State<AppState>,
    body: Result<Json<CreateSession>, JsonRejection>,
) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let Json(req) = body.map_err(bad_body)?;
    let config = req.config()?;
    let trace = blocking(&store, move |s| s.create(&req.kg, &req.query, config)).await?;
    Ok((StatusCode::CREATED, Json(SessionView::of(&trace, true))))
}

async fn submit_feedback(
    State(store): State<AppState>,
    UrlPath(id): UrlPath<String>,
    body: Result<Json<SubmitFeedback>, JsonRejection>,
) -> Result<Json<SessionView>, ApiError> {
    let Json(req) = body.map_err(bad_body)?;
    let y = match req.clicked {
        Value::Null => Feedback::NoClick,
        Value::String(p) => Feedback::click(p),
        other => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                "bad_request",
                "`clicked` must be a product id or null",
            )
            .with_detail(json!({ "clicked": other })))
        }
    };
    let trace = blocking(&store, move |s| s.feedback(&id, y)).await?;
    Ok(Json(SessionView::of(&trace, false)))
}

async fn get_session(State(store): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<TraceJson>, ApiError> {
    let trace = blocking(&store, move |s| s.get(&id)).await?;
    Ok(Json(TraceJson::from(&trace)))
}

async fn get_eig(State(store): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<Vec<EigRow>>, ApiError> {
    let table = blocking(&store, move |s| s.eig(&id)).await?;
    Ok(Json(wire::eig_rows(&table)))
}

async fn list_kgs(State(store): State<AppState>) -> Json<Vec<String>> {
    Json(store.kgs().keys().cloned().collect())
}

async fn get_kg(State(store): State<AppState>, UrlPath(id): UrlPath<String>) -> Result<Json<KgDocument>, ApiError> {
    let kg = store.kg(&id)?;
    Ok(Json(KgDocument::from(kg.as_ref())))
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

pub fn router(store: Arc<SessionStore>) -> Router {
    Router::new()
        .route("/api/v1/sessions", post(create_session))
        .route("/api/v1/sessions/{id}", get(get_session))
        .route("/api/v1/sessions/{id}/feedback", post(submit_feedback))
        .route("/api/v1/sessions/{id}/eig", get(get_eig))
        .route("/api/v1/kgs", get(list_kgs))
        .route("/api/v1/kgs/{id}", get(get_kg))
        .fallback(not_found)
        .with_state(store)
}

#[derive(Debug, thiserror::Error)]
pub enum ServeError {
    #[error(transparent)]
    Load(#[from] kgfile::LoadError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Loads graphs, recovers sessions and binds. Quarantined logs are reported
/// on stderr; the listening address goes to stdout.
pub async fn serve(bind: &str, kg_dir: &Path, log_dir: &Path) -> Result<(), ServeError> {
    let kgs = kgfile::load_dir(kg_dir)?;
    let store = SessionStore::open(kgs, log_dir)?;
    for q in store.quarantined() {
        let line = q.line.map(|l| format!(" line {l}")).unwrap_or_default();
        eprintln!("quarantined {}{line}: {}", q.path.display(), q.reason);
    }
    let listener = TcpListener::bind(bind).await.map_err(|source| ServeError::Bind {
        addr: bind.to_string(),
        source,
    })?;
    let addr: SocketAddr = listener.local_addr()?;
    println!("listening on http://{addr}");
    use std::io::Write;
    std::io::stdout().flush()?;
    axum::serve(listener, router(Arc::new(store)))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
