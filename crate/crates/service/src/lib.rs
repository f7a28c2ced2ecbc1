//! HTTP API over a loaded screening policy: sessions, policy inspection,
//! metrics and health, all under `/api/v1`.
//!
//! There is no authentication. Do not expose this on an untrusted network.

mod store;

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use screenwise_core::model::{normalize_features, BiRads, Label, Test};
use screenwise_core::policy::{to_json, Diagnosis, HistoryEntry, PartitionedPolicy, Session, SessionStatus};

pub use store::{SessionStore, DEFAULT_TTL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: u16,
    pub code: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<Value>,
}

impl ApiError {
    fn new(status: StatusCode, code: &str, message: impl Into<String>) -> Self {
        Self {
            status: status.as_u16(),
            code: code.into(),
            message: message.into(),
            detail: None,
        }
    }

    fn with_detail(mut self, detail: Value) -> Self {
        self.detail = Some(detail);
        self
    }

    fn no_policy() -> Self {
        Self::new(StatusCode::CONFLICT, "no_policy", "no policy is loaded")
    }

    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "session_not_found", format!("no session `{id}`"))
    }

    fn bad_request(code: &str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

/// What a client sees of a session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub partition: usize,
    pub status: SessionStatus,
    /// Test code while awaiting an outcome, otherwise the final action.
    pub recommendation: String,
    pub diagnosis: DiagnosisView,
    pub cost: f64,
    pub history: Vec<HistoryEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisView {
    pub label: Label,
    pub recommendation: String,
    pub error: f64,
    pub interval: [f64; 2],
    pub samples: u64,
}

impl From<&Diagnosis> for DiagnosisView {
    fn from(d: &Diagnosis) -> Self {
        Self {
            label: d.label,
            recommendation: String::new(),
            error: d.error,
            interval: [d.lower, d.upper],
            samples: d.samples,
        }
    }
}

impl From<&Session> for SessionView {
    fn from(s: &Session) -> Self {
        let recommendation = match s.status {
            SessionStatus::AwaitingOutcome { test } => test.code().to_string(),
            SessionStatus::Final { label } => label.recommendation().to_string(),
        };
        let mut diagnosis = DiagnosisView::from(&s.diagnosis);
        diagnosis.recommendation = s.diagnosis.label.recommendation().to_string();
        Self {
            session_id: s.id.clone(),
            partition: s.partition,
            status: s.status,
            recommendation,
            diagnosis,
            cost: s.cost,
            history: s.history.clone(),
        }
    }
}

#[derive(Debug, Default)]
struct Metrics {
    sessions_created: AtomicU64,
    outcomes_recorded: AtomicU64,
    sessions_finalized: AtomicU64,
    client_errors: AtomicU64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsView {
    pub sessions_created: u64,
    pub outcomes_recorded: u64,
    pub sessions_finalized: u64,
    pub client_errors: u64,
    pub live_sessions: usize,
    pub partitions: usize,
}

pub struct AppState {
    policy: Option<Arc<PartitionedPolicy>>,
    policy_json: Option<Bytes>,
    store: SessionStore,
    metrics: Metrics,
}

impl AppState {
    pub fn new(policy: Option<PartitionedPolicy>, ttl: Duration) -> Self {
        let policy_json = policy.as_ref().map(|p| Bytes::from(to_json(p)));
        Self {
            policy: policy.map(Arc::new),
            policy_json,
            store: SessionStore::new(ttl),
            metrics: Metrics::default(),
        }
    }

    pub fn with_policy(policy: PartitionedPolicy) -> Self {
        Self::new(Some(policy), DEFAULT_TTL)
    }

    pub fn store(&self) -> &SessionStore {
        &self.store
    }

    fn policy(&self) -> Result<&Arc<PartitionedPolicy>, ApiError> {
        self.policy.as_ref().ok_or_else(ApiError::no_policy)
    }

    fn count(&self, counter: &AtomicU64) {
        counter.fetch_add(1, Ordering::Relaxed);
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub features: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostOutcome {
    pub test: String,
    pub birads: Value,
}

fn token(value: &Value) -> Option<String> {
    match value {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Null => Some(String::new()),
        _ => None,
    }
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request("malformed_body", e.to_string()))
}

fn tracked<T>(state: &AppState, result: Result<T, ApiError>) -> Result<T, ApiError> {
    if let Err(e) = &result {
        if (400..500).contains(&e.status) {
            state.count(&state.metrics.client_errors);
        }
    }
    result
}

async fn create_session(State(state): State<Arc<AppState>>, body: Bytes) -> Result<(StatusCode, Json<SessionView>), ApiError> {
    let result = (|| {
        let policy = state.policy()?;
        let req: CreateSession = parse_body(&body)?;
        let mut raw = Vec::with_capacity(req.features.len());
        for (name, value) in &req.features {
            let t = token(value).ok_or_else(|| {
                ApiError::bad_request("schema_violation", format!("feature `{name}` must be a string or number"))
            })?;
            raw.push((name.clone(), t));
        }
        let features = normalize_features(raw.iter().map(|(n, v)| (n.as_str(), v.as_str())), &policy.schema)
            .map_err(|e| ApiError::bad_request("schema_violation", e.to_string()))?;
        let id = uuid::Uuid::new_v4().to_string();
        let session = Session::start(policy, id, features)
            .map_err(|e| ApiError::bad_request("schema_violation", e.to_string()))?;
        let view = SessionView::from(&session);
        state.store.insert(session);
        state.count(&state.metrics.sessions_created);
        if view.status.is_final() {
            state.count(&state.metrics.sessions_finalized);
        }
        Ok((StatusCode::CREATED, Json(view)))
    })();
    tracked(&state, result)
}

trait StatusExt {
    fn is_final(&self) -> bool;
}

impl StatusExt for SessionStatus {
    fn is_final(&self) -> bool {
        matches!(self, SessionStatus::Final { .. })
    }
}

async fn post_outcome(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<SessionView>, ApiError> {
    let result = (|| {
        let policy = state.policy()?;
        let handle = state.store.get(&id).ok_or_else(|| ApiError::not_found(&id))?;
        let req: PostOutcome = parse_body(&body)?;
        let test: Test = req.test.parse().map_err(|e: String| ApiError::bad_request("invalid_test", e))?;
        let score_token = token(&req.birads).ok_or_else(|| ApiError::bad_request("invalid_birads", "birads must be a string or number"))?;
        let score: BiRads = score_token
            .parse()
            .map_err(|e: screenwise_core::model::ParseBiRadsError| ApiError::bad_request("invalid_birads", e.to_string()))?;
        let mut session = handle.lock();
        session.advance(policy, test, score).map_err(|e| match e {
            screenwise_core::error::SessionError::SessionFinal => {
                ApiError::new(StatusCode::CONFLICT, "session_final", e.to_string())
            }
            screenwise_core::error::SessionError::WrongTest { expected, .. } => {
                ApiError::new(StatusCode::CONFLICT, "wrong_test", e.to_string())
                    .with_detail(serde_json::json!({ "expected": expected }))
            }
        })?;
        state.count(&state.metrics.outcomes_recorded);
        if session.is_final() {
            state.count(&state.metrics.sessions_finalized);
        }
        Ok(Json(SessionView::from(&*session)))
    })();
    tracked(&state, result)
}

async fn get_session(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Json<SessionView>, ApiError> {
    let result = state
        .store
        .get(&id)
        .map(|h| Json(SessionView::from(&*h.lock())))
        .ok_or_else(|| ApiError::not_found(&id));
    tracked(&state, result)
}

async fn get_policy(State(state): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let body = state.policy_json.clone().ok_or_else(ApiError::no_policy);
    let body = tracked(&state, body)?;
    Ok(([(header::CONTENT_TYPE, "application/json")], body).into_response())
}

async fn get_metrics(State(state): State<Arc<AppState>>) -> Json<MetricsView> {
    let m = &state.metrics;
    Json(MetricsView {
        sessions_created: m.sessions_created.load(Ordering::Relaxed),
        outcomes_recorded: m.outcomes_recorded.load(Ordering::Relaxed),
        sessions_finalized: m.sessions_finalized.load(Ordering::Relaxed),
        client_errors: m.client_errors.load(Ordering::Relaxed),
        live_sessions: state.store.len(),
        partitions: state.policy.as_ref().map_or(0, |p| p.len()),
    })
}

async fn health(State(state): State<Arc<AppState>>) -> Json<Value> {
    Json(serde_json::json!({
        "status": "ok",
        "policy_loaded": state.policy.is_some(),
    }))
}

async fn fallback() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such route")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/v1/sessions", post(create_session))
        .route("/api/v1/sessions/{id}", get(get_session))
        .route("/api/v1/sessions/{id}/outcomes", post(post_outcome))
        .route("/api/v1/policy", get(get_policy))
        .route("/api/v1/metrics", get(get_metrics))
        .route("/api/v1/health", get(health))
        .fallback(fallback)
        .with_state(state)
}

/// Serves until ctrl-c, purging expired sessions once a minute.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    let sweeper = Arc::clone(&state);
    let purge = tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(60));
        loop {
            tick.tick().await;
            let n = sweeper.store.purge();
            if n > 0 {
                log::debug!("purged {n} expired sessions");
            }
        }
    });
    let result = axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await;
    purge.abort();
    result
}
