//! JSON over HTTP. Handlers hand the blocking work to tokio's blocking pool.

use std::sync::Arc;

use axum::extract::{Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use isoscope_core::render::CameraAngle;
use serde::Deserialize;
use serde_json::json;

use crate::app::App;
use crate::bench::{BenchTask, DEFAULT_BENCH_RUNS};
use crate::ServiceError;

impl ServiceError {
    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::BadRequest(_) | ServiceError::BadConfig(_) => StatusCode::BAD_REQUEST,
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::Unauthorized => StatusCode::UNAUTHORIZED,
            ServiceError::BackendUnavailable(_) => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn code(&self) -> &'static str {
        match self {
            ServiceError::BadConfig(_) => "bad_config",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::NotFound(_) => "not_found",
            ServiceError::Conflict(_) => "conflict",
            ServiceError::Unauthorized => "unauthorized",
            ServiceError::BackendUnavailable(_) => "backend_unavailable",
            _ => "internal",
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = self.status();
        if status.is_server_error() {
            log::error!("{self}");
        }
        (status, Json(json!({ "error": self.code(), "message": self.to_string() }))).into_response()
    }
}

type Reply<T> = Result<T, ServiceError>;

async fn blocking<T, F>(app: Arc<App>, f: F) -> Reply<T>
where
    T: Send + 'static,
    F: FnOnce(&App) -> Reply<T> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&app))
        .await
        .map_err(|e| ServiceError::Io(std::io::Error::other(e.to_string())))?
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct NewSession {
    id: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChatBody {
    message: String,
}

#[derive(Debug, Deserialize)]
struct TraceQuery {
    after: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct FeatureQueryBody {
    dataset: String,
    feature: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepBody {
    dataset: String,
    isovalues: usize,
    #[serde(default)]
    angles: Vec<String>,
}

#[derive(Debug, Deserialize)]
struct BenchBody {
    #[serde(flatten)]
    task: BenchTask,
    n_runs: Option<usize>,
}

async fn health(State(app): State<Arc<App>>) -> Json<serde_json::Value> {
    Json(app.health())
}

async fn datasets(State(app): State<Arc<App>>) -> impl IntoResponse {
    Json(app.datasets())
}

async fn create_session(State(app): State<Arc<App>>, body: Option<Json<NewSession>>) -> Reply<impl IntoResponse> {
    let req = body.map(|b| b.0).unwrap_or_default();
    let id = blocking(app, move |a| a.create_session(req.id.as_deref())).await?;
    Ok((StatusCode::CREATED, Json(json!({ "session_id": id }))))
}

async fn chat(State(app): State<Arc<App>>, Path(id): Path<String>, Json(body): Json<ChatBody>) -> Reply<impl IntoResponse> {
    Ok(Json(blocking(app, move |a| a.chat(&id, &body.message)).await?))
}

async fn trace(
    State(app): State<Arc<App>>,
    Path(id): Path<String>,
    Query(q): Query<TraceQuery>,
) -> Reply<impl IntoResponse> {
    let events = app.trace(&id, q.after)?;
    Ok(Json(json!({ "session_id": id, "events": events })))
}

async fn provenance(State(app): State<Arc<App>>, Path(id): Path<String>) -> Reply<impl IntoResponse> {
    let text = app.provenance_text(&id)?;
    Ok(([(header::CONTENT_TYPE, "application/x-ndjson")], text))
}

async fn image(State(app): State<Arc<App>>, Path(id): Path<String>) -> Reply<impl IntoResponse> {
    let path = app.image_path(&id)?;
    let bytes = std::fs::read(&path)?;
    Ok(([(header::CONTENT_TYPE, "image/png")], bytes))
}

async fn code(State(app): State<Arc<App>>, Path(id): Path<String>) -> Reply<impl IntoResponse> {
    let id: i64 = id
        .parse()
        .map_err(|_| ServiceError::BadRequest(format!("record id {id:?} is not an integer")))?;
    Ok(Json(blocking(app, move |a| a.code(id)).await?))
}

async fn validate_pending(State(app): State<Arc<App>>) -> Reply<impl IntoResponse> {
    Ok(Json(blocking(app, |a| a.validate_pending()).await?))
}

async fn feature_query(State(app): State<Arc<App>>, Json(b): Json<FeatureQueryBody>) -> Reply<impl IntoResponse> {
    Ok(Json(blocking(app, move |a| a.feature_query(&b.dataset, &b.feature)).await?))
}

async fn sweep(State(app): State<Arc<App>>, Json(b): Json<SweepBody>) -> Reply<impl IntoResponse> {
    let angles = parse_angles(&b.angles)?;
    let recs = blocking(app, move |a| a.sweep(&b.dataset, b.isovalues, &angles)).await?;
    Ok(Json(json!({ "records": recs.len(), "screenshots": recs })))
}

async fn knowledge(State(app): State<Arc<App>>, Path(ds): Path<String>) -> Reply<impl IntoResponse> {
    Ok(Json(blocking(app, move |a| a.knowledge_metrics(&ds)).await?))
}

async fn bench(State(app): State<Arc<App>>, Json(b): Json<BenchBody>) -> Reply<impl IntoResponse> {
    let n = b.n_runs.unwrap_or(DEFAULT_BENCH_RUNS);
    Ok(Json(blocking(app, move |a| a.bench(&b.task, n)).await?))
}

/// Camera labels to angles; empty means the six canonical views.
pub fn parse_angles(labels: &[String]) -> Result<Vec<CameraAngle>, ServiceError> {
    if labels.is_empty() {
        return Ok(CameraAngle::canonical());
    }
    labels
        .iter()
        .map(|l| CameraAngle::canonical_by_label(l).ok_or_else(|| ServiceError::BadRequest(format!("unknown angle {l:?}"))))
        .collect()
}

async fn require_token(State(token): State<Arc<String>>, headers: HeaderMap, req: Request, next: Next) -> Response {
    let ok = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .is_some_and(|t| t == token.as_str());
    if ok {
        next.run(req).await
    } else {
        ServiceError::Unauthorized.into_response()
    }
}

/// All routes. With a token, everything except `/health` needs
/// `Authorization: Bearer <token>`.
pub fn router(app: Arc<App>, token: Option<String>) -> Router {
    let mut api = Router::new()
        .route("/datasets", get(datasets))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/chat", post(chat))
        .route("/sessions/{id}/trace", get(trace))
        .route("/sessions/{id}/provenance", get(provenance))
        .route("/images/{image_id}", get(image))
        .route("/code/{record_id}", get(code))
        .route("/admin/validate-pending", post(validate_pending))
        .route("/feature-query", post(feature_query))
        .route("/sweep", post(sweep))
        .route("/metrics/knowledge/{dataset}", get(knowledge))
        .route("/bench", post(bench));
    if let Some(t) = token {
        api = api.layer(middleware::from_fn_with_state(Arc::new(t), require_token));
    }
    Router::new().route("/health", get(health)).merge(api).with_state(app)
}
