//! JSON API over one lineage.
//!
//! | route | result |
//! |---|---|
//! | `GET /api/dataset` | current snapshot |
//! | `POST /api/jobs/train` | starts a training job, `202` with its id |
//! | `GET /api/jobs/{id}` | job status and progress |
//! | `GET /api/plans?cycle=n` | candidate plans of a cycle |
//! | `POST /api/plans/{id}/apply` | applies a plan and opens the next cycle |
//! | `GET /api/cycles` | cycle history |
//! | `GET /api/curves/{job}` | reward series of a job |

use std::collections::HashMap;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rebuild_core::planner::Lineage;
use serde::Serialize;
use serde_json::json;

use crate::error::{ErrorKind, ServiceError};
use crate::jobs::{Job, JobStatus};
use crate::ops::{self, DatasetView, TrainRequest};

#[derive(Clone)]
pub struct AppState {
    inner: Arc<Shared>,
}

struct Shared {
    lineage: RwLock<Lineage>,
    /// Held for every lineage write so at most one is in flight.
    writer: Mutex<()>,
    jobs: Mutex<Vec<Job>>,
}

impl AppState {
    pub fn new(lineage: Lineage) -> Self {
        AppState {
            inner: Arc::new(Shared {
                lineage: RwLock::new(lineage),
                writer: Mutex::new(()),
                jobs: Mutex::new(Vec::new()),
            }),
        }
    }

    fn lineage(&self) -> std::sync::RwLockReadGuard<'_, Lineage> {
        self.inner.lineage.read().unwrap_or_else(|e| e.into_inner())
    }

    fn jobs(&self) -> MutexGuard<'_, Vec<Job>> {
        self.inner.jobs.lock().unwrap_or_else(|e| e.into_inner())
    }

    fn with_job<T>(&self, id: u64, f: impl FnOnce(&mut Job) -> T) -> Option<T> {
        let mut jobs = self.jobs();
        jobs.iter_mut().find(|j| j.id == id).map(f)
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/dataset", get(dataset))
        .route("/api/jobs/train", post(start_training))
        .route("/api/jobs/{id}", get(job_status))
        .route("/api/plans", get(list_plans))
        .route("/api/plans/{id}/apply", post(apply_plan))
        .route("/api/cycles", get(cycle_history))
        .route("/api/curves/{job}", get(job_curve))
        .fallback(|| async { ServiceError::not_found("no_route", "no such route") })
        .with_state(state)
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = StatusCode::from_u16(self.kind.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self.body())).into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ServiceError>;

async fn dataset(State(state): State<AppState>) -> Json<DatasetView> {
    Json(DatasetView::of(state.lineage().current()))
}

#[derive(Serialize)]
struct Accepted {
    job: u64,
    status: JobStatus,
}

async fn start_training(State(state): State<AppState>, body: Bytes) -> Result<(StatusCode, Json<Accepted>), ServiceError> {
    let request: TrainRequest = if body.iter().all(u8::is_ascii_whitespace) {
        TrainRequest::default()
    } else {
        serde_json::from_slice(&body).map_err(|e| ServiceError::validation("invalid_body", e.to_string()))?
    };
    request.validate()?;
    let dataset = state.lineage().current().clone();
    if !dataset.has_damage() {
        return Err(ServiceError::new(
            ErrorKind::NoPlan,
            "nothing_to_plan",
            "every item is intact",
        ));
    }
    let id = {
        let mut jobs = state.jobs();
        let id = jobs.len() as u64 + 1;
        jobs.push(Job::new(id, dataset.cycle(), request.config.episodes));
        id
    };

    let worker = state.clone();
    tokio::task::spawn_blocking(move || {
        worker.with_job(id, |j| j.advance(JobStatus::Running));
        let outcome = ops::train(&dataset, &request, &mut |record| {
            worker.with_job(id, |j| j.record(record));
        })
        .and_then(|outcome| {
            let _writer = worker.inner.writer.lock().unwrap_or_else(|e| e.into_inner());
            let mut lineage = worker.inner.lineage.write().unwrap_or_else(|e| e.into_inner());
            ops::record_outcome(&mut lineage, dataset.cycle(), outcome)
        });
        worker.with_job(id, |j| j.finish(outcome));
    });

    Ok((
        StatusCode::ACCEPTED,
        Json(Accepted {
            job: id,
            status: JobStatus::Queued,
        }),
    ))
}

fn parse_job_id(raw: &str) -> Result<u64, ServiceError> {
    raw.parse()
        .map_err(|_| ServiceError::not_found("unknown_job", format!("unknown job `{raw}`")))
}

fn unknown_job(id: u64) -> ServiceError {
    ServiceError::not_found("unknown_job", format!("unknown job `{id}`"))
}

async fn job_status(State(state): State<AppState>, Path(raw): Path<String>) -> ApiResult<crate::jobs::JobView> {
    let id = parse_job_id(&raw)?;
    state.with_job(id, |j| j.view()).map(Json).ok_or_else(|| unknown_job(id))
}

async fn job_curve(State(state): State<AppState>, Path(raw): Path<String>) -> Result<Json<serde_json::Value>, ServiceError> {
    let id = parse_job_id(&raw)?;
    let (status, curve) = state
        .with_job(id, |j| (j.status(), ops::curve(j.history())))
        .ok_or_else(|| unknown_job(id))?;
    Ok(Json(json!({ "job": id, "status": status, "episodes": curve })))
}

async fn list_plans(
    State(state): State<AppState>,
    Query(query): Query<HashMap<String, String>>,
) -> ApiResult<ops::PlanList> {
    let cycle = match query.get("cycle") {
        None => None,
        Some(raw) => Some(raw.parse::<u32>().map_err(|_| {
            ServiceError::validation("invalid_query", format!("cycle must be a positive integer, got `{raw}`"))
        })?),
    };
    Ok(Json(ops::plans(&state.lineage(), cycle)))
}

async fn apply_plan(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<ops::Applied> {
    let inner = state.inner.clone();
    tokio::task::spawn_blocking(move || {
        let _writer = inner.writer.try_lock().map_err(|_| {
            ServiceError::new(ErrorKind::Conflict, "writer_busy", "another write to the lineage is in progress")
        })?;
        let mut lineage = inner.lineage.write().unwrap_or_else(|e| e.into_inner());
        ops::apply(&mut lineage, &id)
    })
    .await
    .map_err(|e| ServiceError::internal(e.to_string()))?
    .map(Json)
}

async fn cycle_history(State(state): State<AppState>) -> Json<Vec<ops::CycleView>> {
    Json(ops::cycles(&state.lineage()))
}

/// Serves `state` on `addr` until the process is stopped.
pub async fn serve(state: AppState, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
