//! Thin async client for the psa HTTP service.

use std::time::Duration;

use psa_core::api::{
    AggregateRequest, ApiError, EpisodeRequest, EvolveRequest, Health, JobCreated, JobState,
    JobStatus, ReplayRequest, SessionCreated, SessionRequest, StepRequest, ValidateRequest,
    ValidateResponse,
};
use psa_core::cmaes::RunLog;
use psa_core::experiment::{AggregateSummary, EnvStep, ReplayOutcome};
use psa_core::tasks::{EpisodeResult, MorphologyKind};
use reqwest::{Method, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("server returned {status}: {message}")]
    Api { status: StatusCode, message: String },
    #[error("evolve job {0} failed: {1}")]
    JobFailed(String, String),
}

impl ClientError {
    /// Whether the server rejected the request as malformed.
    pub fn is_client_error(&self) -> bool {
        matches!(self, Self::Api { status, .. } if status.is_client_error())
    }
}

#[derive(Debug, Clone)]
pub struct PsaClient {
    base: String,
    http: reqwest::Client,
}

impl PsaClient {
    /// `base` is the service root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_owned(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn call<B: Serialize, T: DeserializeOwned>(
        &self,
        method: Method,
        path: &str,
        body: Option<&B>,
    ) -> Result<T, ClientError> {
        let mut req = self.http.request(method, format!("{}{path}", self.base));
        if let Some(body) = body {
            req = req.json(body);
        }
        let resp = req.send().await?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp.json().await?);
        }
        let text = resp.text().await.unwrap_or_default();
        let message = serde_json::from_str::<ApiError>(&text)
            .map(|e| e.error)
            .unwrap_or(text);
        Err(ClientError::Api { status, message })
    }

    async fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        self.call::<(), T>(Method::GET, path, None).await
    }

    async fn post<B: Serialize, T: DeserializeOwned>(
        &self,
        path: &str,
        body: &B,
    ) -> Result<T, ClientError> {
        self.call(Method::POST, path, Some(body)).await
    }

    pub async fn health(&self) -> Result<Health, ClientError> {
        self.get("/health").await
    }

    pub async fn validate(
        &self,
        morphology: MorphologyKind,
    ) -> Result<ValidateResponse, ClientError> {
        self.post("/validate", &ValidateRequest { morphology })
            .await
    }

    pub async fn start_evolve(&self, req: &EvolveRequest) -> Result<JobCreated, ClientError> {
        self.post("/evolve", req).await
    }

    pub async fn job(&self, id: &str) -> Result<JobStatus, ClientError> {
        self.get(&format!("/jobs/{id}")).await
    }

    /// Poll a job every `interval` until it finishes, reporting each status.
    pub async fn wait_job(
        &self,
        id: &str,
        interval: Duration,
        mut on_status: impl FnMut(&JobStatus),
    ) -> Result<JobStatus, ClientError> {
        loop {
            let status = self.job(id).await?;
            on_status(&status);
            match status.state {
                JobState::Running => tokio::time::sleep(interval).await,
                JobState::Done => return Ok(status),
                JobState::Failed => {
                    return Err(ClientError::JobFailed(
                        id.to_owned(),
                        status.error.unwrap_or_default(),
                    ))
                }
            }
        }
    }

    pub async fn episode(&self, req: &EpisodeRequest) -> Result<EpisodeResult, ClientError> {
        self.post("/episode", req).await
    }

    pub async fn replay(&self, req: &ReplayRequest) -> Result<ReplayOutcome, ClientError> {
        self.post("/replay", req).await
    }

    pub async fn aggregate(&self, logs: Vec<RunLog>) -> Result<AggregateSummary, ClientError> {
        self.post("/aggregate", &AggregateRequest { logs }).await
    }

    pub async fn create_session(
        &self,
        req: &SessionRequest,
    ) -> Result<SessionCreated, ClientError> {
        self.post("/sessions", req).await
    }

    pub async fn step(&self, session: &str, action: Vec<f64>) -> Result<EnvStep, ClientError> {
        self.post(
            &format!("/sessions/{session}/step"),
            &StepRequest { action },
        )
        .await
    }

    pub async fn delete_session(&self, session: &str) -> Result<(), ClientError> {
        let resp = self
            .http
            .delete(format!("{}/sessions/{session}", self.base))
            .send()
            .await?;
        let status = resp.status();
        if status.is_success() {
            Ok(())
        } else {
            Err(ClientError::Api {
                status,
                message: resp.text().await.unwrap_or_default(),
            })
        }
    }
}
