//! HTTP/JSON service over the simulation and optimizer.
//!
//! CPU-bound work runs on the blocking pool; evolution runs as background
//! jobs polled through `GET /jobs/{id}`. Step-wise sessions are kept in
//! memory until deleted.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};

use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use psa_core::api::{
    AggregateRequest, ApiError, EpisodeRequest, EvolveRequest, Health, JobCreated, JobState,
    JobStatus, ReplayRequest, SessionCreated, SessionRequest, StepRequest, ValidateRequest,
    ValidateResponse,
};
use psa_core::experiment::{
    self, AggregateSummary, EnvSession, EnvStep, ExperimentError, ReplayOutcome,
};
use psa_core::tasks::{run_episode, EpisodeResult, TaskError};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

#[derive(Debug)]
pub enum ServiceError {
    BadRequest(String),
    NotFound(String),
    Conflict(String),
    Internal(String),
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let (status, error) = match self {
            Self::BadRequest(m) => (StatusCode::BAD_REQUEST, m),
            Self::NotFound(m) => (StatusCode::NOT_FOUND, m),
            Self::Conflict(m) => (StatusCode::CONFLICT, m),
            Self::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, m),
        };
        (status, Json(ApiError { error })).into_response()
    }
}

impl From<TaskError> for ServiceError {
    fn from(e: TaskError) -> Self {
        match e {
            TaskError::EpisodeDone => Self::Conflict(e.to_string()),
            _ => Self::BadRequest(e.to_string()),
        }
    }
}

impl From<ExperimentError> for ServiceError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Task(t) => t.into(),
            ExperimentError::EmptyAggregate
            | ExperimentError::NoCommonCheckpoints
            | ExperimentError::FrameStride => Self::BadRequest(e.to_string()),
            ExperimentError::Cmaes(_) | ExperimentError::Diverged(_) => {
                Self::Internal(e.to_string())
            }
        }
    }
}

type Reply<T> = Result<Json<T>, ServiceError>;

#[derive(Default)]
struct Shared {
    jobs: Mutex<HashMap<String, JobStatus>>,
    sessions: Mutex<HashMap<String, EnvSession>>,
    parallelism: usize,
}

/// Shared service state; cheap to clone.
#[derive(Clone)]
pub struct AppState(Arc<Shared>);

impl AppState {
    /// `parallelism` is the default evaluation thread count for evolve jobs.
    pub fn new(parallelism: usize) -> Self {
        Self(Arc::new(Shared {
            parallelism: parallelism.max(1),
            ..Shared::default()
        }))
    }
}

impl Default for AppState {
    fn default() -> Self {
        Self::new(std::thread::available_parallelism().map_or(1, |n| n.get()))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/validate", post(validate))
        .route("/evolve", post(evolve))
        .route("/jobs/{id}", get(job))
        .route("/episode", post(episode))
        .route("/replay", post(replay))
        .route("/aggregate", post(aggregate))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", axum::routing::delete(delete_session))
        .route("/sessions/{id}/step", post(step_session))
        .with_state(state)
}

/// Serve on `listener` until the process receives Ctrl-C.
pub async fn serve(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

/// Bind `addr` and serve in a background task, returning the bound address.
pub async fn spawn(
    addr: SocketAddr,
    state: AppState,
) -> std::io::Result<(SocketAddr, JoinHandle<std::io::Result<()>>)> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let handle = tokio::spawn(async move { axum::serve(listener, router(state)).await });
    Ok((local, handle))
}

async fn blocking<T, F>(f: F) -> Result<T, ServiceError>
where
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(format!("worker failed: {e}")))?
}

async fn health() -> Json<Health> {
    Json(Health {
        status: "ok".into(),
        version: env!("CARGO_PKG_VERSION").into(),
    })
}

async fn validate(Json(req): Json<ValidateRequest>) -> Reply<ValidateResponse> {
    let rows = blocking(move || Ok(experiment::validate(req.morphology)?)).await?;
    Ok(Json(ValidateResponse {
        morphology: req.morphology,
        rows,
    }))
}

async fn evolve(
    State(state): State<AppState>,
    Json(req): Json<EvolveRequest>,
) -> Result<(StatusCode, Json<JobCreated>), ServiceError> {
    if req.budget == 0 {
        return Err(ServiceError::BadRequest("budget must be at least 1".into()));
    }
    let config = req.config(state.0.parallelism);
    let id = uuid::Uuid::new_v4().to_string();
    state.0.jobs.lock().expect("jobs lock").insert(
        id.clone(),
        JobStatus {
            job_id: id.clone(),
            state: JobState::Running,
            evaluations: 0,
            budget: config.budget,
            best: None,
            outcome: None,
            error: None,
        },
    );
    tracing::info!(job = %id, ?config, "evolve job started");

    let shared = state.0.clone();
    let job_id = id.clone();
    tokio::task::spawn_blocking(move || {
        let update = |f: &mut dyn FnMut(&mut JobStatus)| {
            if let Some(job) = shared.jobs.lock().expect("jobs lock").get_mut(&job_id) {
                f(job);
            }
        };
        let result = experiment::evolve(&config, |record, _| {
            update(&mut |job| {
                job.evaluations = record.evaluations;
                job.best = Some(record.best);
            })
        });
        match result {
            Ok(outcome) => {
                tracing::info!(job = %job_id, best = outcome.best_fitness, "evolve job done");
                update(&mut |job| {
                    job.state = JobState::Done;
                    job.outcome = Some(outcome.clone());
                });
            }
            Err(e) => {
                tracing::error!(job = %job_id, error = %e, "evolve job failed");
                update(&mut |job| {
                    job.state = JobState::Failed;
                    job.error = Some(e.to_string());
                });
            }
        }
    });
    Ok((StatusCode::ACCEPTED, Json(JobCreated { job_id: id })))
}

async fn job(State(state): State<AppState>, Path(id): Path<String>) -> Reply<JobStatus> {
    state
        .0
        .jobs
        .lock()
        .expect("jobs lock")
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ServiceError::NotFound(format!("no job `{id}`")))
}

async fn episode(Json(req): Json<EpisodeRequest>) -> Reply<EpisodeResult> {
    let result =
        blocking(move || Ok(run_episode(&req.spec.episode(), &req.genome, req.seed)?)).await?;
    Ok(Json(result))
}

async fn replay(Json(req): Json<ReplayRequest>) -> Reply<ReplayOutcome> {
    let out = blocking(move || {
        Ok(experiment::replay(
            &req.spec.episode(),
            &req.genome,
            req.seed,
            req.frame_stride,
        )?)
    })
    .await?;
    Ok(Json(out))
}

async fn aggregate(Json(req): Json<AggregateRequest>) -> Reply<AggregateSummary> {
    Ok(Json(experiment::aggregate(&req.logs)?))
}

async fn create_session(
    State(state): State<AppState>,
    Json(req): Json<SessionRequest>,
) -> Result<(StatusCode, Json<SessionCreated>), ServiceError> {
    let config = req.spec.episode();
    let (session, observation) = EnvSession::reset(config, req.seed)?;
    let id = uuid::Uuid::new_v4().to_string();
    state
        .0
        .sessions
        .lock()
        .expect("sessions lock")
        .insert(id.clone(), session);
    Ok((
        StatusCode::CREATED,
        Json(SessionCreated {
            session_id: id,
            observation,
            action_len: config.action_len(),
        }),
    ))
}

async fn step_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
    Json(req): Json<StepRequest>,
) -> Reply<EnvStep> {
    let mut sessions = state.0.sessions.lock().expect("sessions lock");
    let session = sessions
        .get_mut(&id)
        .ok_or_else(|| ServiceError::NotFound(format!("no session `{id}`")))?;
    Ok(Json(session.step(&req.action)?))
}

async fn delete_session(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<StatusCode, ServiceError> {
    state
        .0
        .sessions
        .lock()
        .expect("sessions lock")
        .remove(&id)
        .map(|_| StatusCode::NO_CONTENT)
        .ok_or_else(|| ServiceError::NotFound(format!("no session `{id}`")))
}
