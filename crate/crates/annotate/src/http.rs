use std::net::SocketAddr;
use std::sync::{Arc, RwLock};

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};

use crate::error::ServiceError;
use crate::store::{AnnotationStore, Submission};

pub type SharedStore = Arc<RwLock<AnnotationStore>>;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::UnknownAnnotator(_) => StatusCode::UNAUTHORIZED,
            ServiceError::Protocol(_) => StatusCode::BAD_REQUEST,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({ "error": self.to_string() }))).into_response()
    }
}

fn bad_request(e: impl std::fmt::Display) -> ServiceError {
    ServiceError::Protocol(e.to_string())
}

type Reply = Result<Json<Value>, ServiceError>;

#[derive(Deserialize)]
struct NewAnnotator {
    name: String,
}

#[derive(Deserialize)]
struct NextQuery {
    annotator: String,
}

fn write(store: &SharedStore) -> std::sync::RwLockWriteGuard<'_, AnnotationStore> {
    store.write().unwrap_or_else(|e| e.into_inner())
}

fn read(store: &SharedStore) -> std::sync::RwLockReadGuard<'_, AnnotationStore> {
    store.read().unwrap_or_else(|e| e.into_inner())
}

async fn register(State(store): State<SharedStore>, body: Result<Json<NewAnnotator>, JsonRejection>) -> Reply {
    let Json(body) = body.map_err(bad_request)?;
    Ok(Json(serde_json::to_value(write(&store).register(&body.name)?)?))
}

async fn next_task(State(store): State<SharedStore>, query: Result<Query<NextQuery>, QueryRejection>) -> Reply {
    let Query(query) = query.map_err(bad_request)?;
    let task = write(&store).next_task(&query.annotator)?;
    Ok(Json(json!({ "task": task })))
}

async fn submit(State(store): State<SharedStore>, body: Result<Json<Submission>, JsonRejection>) -> Reply {
    let Json(body) = body.map_err(bad_request)?;
    let judgment = write(&store).submit(body)?;
    Ok(Json(json!({ "accepted": true, "judgment": judgment })))
}

async fn progress(State(store): State<SharedStore>) -> Reply {
    Ok(Json(serde_json::to_value(read(&store).progress())?))
}

async fn agreement(State(store): State<SharedStore>) -> Reply {
    Ok(Json(serde_json::to_value(read(&store).agreement()?)?))
}

async fn export(State(store): State<SharedStore>) -> Reply {
    Ok(Json(serde_json::to_value(read(&store).export()?)?))
}

pub fn router(store: SharedStore) -> Router {
    Router::new()
        .route("/annotators", post(register))
        .route("/tasks/next", get(next_task))
        .route("/judgments", post(submit))
        .route("/progress", get(progress))
        .route("/agreement", get(agreement))
        .route("/export", get(export))
        .with_state(store)
}

pub async fn serve(store: AnnotationStore, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(Arc::new(RwLock::new(store)))).await
}
