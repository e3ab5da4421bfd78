//! Request and response bodies shared by the HTTP service and its client.

use serde::{Deserialize, Serialize};

use crate::cmaes::RunLog;
use crate::control::Genome;
use crate::experiment::{EvolveConfig, EvolveOutcome, ValidateRow};
use crate::sensing::Observation;
use crate::tasks::{EpisodeConfig, MorphologyKind, Task};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateRequest {
    pub morphology: MorphologyKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateResponse {
    pub morphology: MorphologyKind,
    pub rows: Vec<ValidateRow>,
}

/// Task, body and controller flavour of an episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub task: Task,
    pub morphology: MorphologyKind,
    pub pressure_control: bool,
}

impl TaskSpec {
    pub fn episode(&self) -> EpisodeConfig {
        EpisodeConfig::new(self.task, self.morphology, self.pressure_control)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveRequest {
    #[serde(flatten)]
    pub spec: TaskSpec,
    pub seed: u64,
    pub budget: usize,
    /// Evaluation threads; the server default when absent.
    #[serde(default)]
    pub parallelism: Option<usize>,
}

impl EvolveRequest {
    pub fn config(&self, default_parallelism: usize) -> EvolveConfig {
        EvolveConfig {
            task: self.spec.task,
            morphology: self.spec.morphology,
            pressure_control: self.spec.pressure_control,
            seed: self.seed,
            budget: self.budget,
            parallelism: self.parallelism.unwrap_or(default_parallelism).max(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobCreated {
    pub job_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub job_id: String,
    pub state: JobState,
    pub evaluations: usize,
    pub budget: usize,
    pub best: Option<f64>,
    pub outcome: Option<EvolveOutcome>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRequest {
    #[serde(flatten)]
    pub spec: TaskSpec,
    pub seed: u64,
    pub genome: Genome,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayRequest {
    #[serde(flatten)]
    pub spec: TaskSpec,
    pub seed: u64,
    pub genome: Genome,
    #[serde(default)]
    pub frame_stride: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRequest {
    pub logs: Vec<RunLog>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRequest {
    #[serde(flatten)]
    pub spec: TaskSpec,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionCreated {
    pub session_id: String,
    pub observation: Observation,
    pub action_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRequest {
    pub action: Vec<f64>,
}
