//! HTTP routes.
//!
//! ```text
//! POST /modules?name=              register (body: raw component bytes)
//! GET  /modules                    list
//! POST /modules/{id}/init          compile and persist the artifact
//! POST /modules/{id}/invoke?deadline_ms=&invocation_id=
//! GET  /invocations/{id}
//! POST /invocations/{id}/stop
//! GET  /metrics
//! ```

use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use limes_core::{ModuleHash, RegistryError};
use serde::Deserialize;
use uuid::Uuid;

use crate::manager::{RuntimeManager, ServiceError};
use crate::records::ErrorBody;

pub fn router(manager: Arc<RuntimeManager>) -> Router {
    let body_limit = manager.config().max_body_bytes;
    Router::new()
        .route("/modules", post(register).get(list_modules))
        .route("/modules/{id}/init", post(initialize))
        .route("/modules/{id}/invoke", post(invoke))
        .route("/invocations/{id}", get(status))
        .route("/invocations/{id}/stop", post(stop))
        .route("/metrics", get(metrics))
        .layer(DefaultBodyLimit::max(body_limit))
        .with_state(manager)
}

impl ServiceError {
    fn status_code(&self) -> StatusCode {
        match self {
            ServiceError::Registry(e) => match e {
                RegistryError::MalformedModule(_) | RegistryError::InvalidName(_) => StatusCode::BAD_REQUEST,
                RegistryError::UnknownModule(_) => StatusCode::NOT_FOUND,
                RegistryError::CompileFailure(_) => StatusCode::UNPROCESSABLE_ENTITY,
                RegistryError::StorageFailure(_) => StatusCode::INTERNAL_SERVER_ERROR,
            },
            ServiceError::UnknownInvocation(_) | ServiceError::UnknownModuleId(_) => StatusCode::NOT_FOUND,
            ServiceError::DuplicateInvocation(_) => StatusCode::CONFLICT,
            ServiceError::Busy(_) => StatusCode::TOO_MANY_REQUESTS,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    fn code(&self) -> &'static str {
        match self {
            ServiceError::Registry(e) => e.code(),
            ServiceError::UnknownInvocation(_) => "UnknownInvocation",
            ServiceError::UnknownModuleId(_) => "UnknownModule",
            ServiceError::DuplicateInvocation(_) => "DuplicateInvocation",
            ServiceError::Busy(_) => "TooManyInvocations",
            ServiceError::BadRequest(_) => "BadRequest",
            ServiceError::Internal(_) => "Internal",
        }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            code: self.code().to_string(),
            message: self.to_string(),
        };
        (self.status_code(), Json(body)).into_response()
    }
}

/// Ids that do not parse cannot name a registered module.
fn module_id(raw: &str) -> Result<ModuleHash, ServiceError> {
    raw.parse()
        .map_err(|_| ServiceError::UnknownModuleId(raw.to_string()))
}

fn invocation_id(raw: &str) -> Result<Uuid, ServiceError> {
    raw.parse().map_err(|_| ServiceError::UnknownInvocation(raw.to_string()))
}

#[derive(Deserialize)]
struct RegisterQuery {
    name: Option<String>,
}

async fn register(
    State(m): State<Arc<RuntimeManager>>,
    Query(q): Query<RegisterQuery>,
    body: Bytes,
) -> Result<impl IntoResponse, ServiceError> {
    let name = q.name.unwrap_or_else(|| "unnamed".to_string());
    let desc = m.register(body.to_vec(), name).await?;
    Ok((StatusCode::CREATED, Json(desc)))
}

async fn list_modules(State(m): State<Arc<RuntimeManager>>) -> impl IntoResponse {
    Json(m.list_modules())
}

async fn initialize(
    State(m): State<Arc<RuntimeManager>>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ServiceError> {
    Ok(Json(m.initialize(module_id(&id)?).await?))
}

#[derive(Deserialize)]
struct InvokeQuery {
    deadline_ms: Option<u64>,
    invocation_id: Option<Uuid>,
}

async fn invoke(
    State(m): State<Arc<RuntimeManager>>,
    Path(id): Path<String>,
    Query(q): Query<InvokeQuery>,
    body: Bytes,
) -> Result<impl IntoResponse, ServiceError> {
    let record = m
        .invoke(module_id(&id)?, body.to_vec(), q.deadline_ms, q.invocation_id)
        .await?;
    Ok(Json(record))
}

async fn status(
    State(m): State<Arc<RuntimeManager>>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ServiceError> {
    let id = invocation_id(&id)?;
    m.status(&id)
        .map(Json)
        .ok_or_else(|| ServiceError::UnknownInvocation(id.to_string()))
}

async fn stop(
    State(m): State<Arc<RuntimeManager>>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ServiceError> {
    let record = m.stop(&invocation_id(&id)?)?;
    Ok((StatusCode::ACCEPTED, Json(record)))
}

async fn metrics(State(m): State<Arc<RuntimeManager>>) -> impl IntoResponse {
    Json(m.metrics())
}
