//! Service behavior over real HTTP.

use std::net::SocketAddr;
use std::time::Duration;

use psa_client::{ClientError, PsaClient};
use psa_core::api::{EpisodeRequest, EvolveRequest, SessionRequest, TaskSpec};
use psa_core::control::Genome;
use psa_core::tasks::{MorphologyKind, Task, EPISODE_STEPS};
use psa_server::{spawn, AppState};

async fn start() -> PsaClient {
    let (addr, _) = spawn(SocketAddr::from(([127, 0, 0, 1], 0)), AppState::new(1))
        .await
        .unwrap();
    PsaClient::new(format!("http://{addr}"))
}

fn spec(task: Task, pressure_control: bool) -> TaskSpec {
    TaskSpec {
        task,
        morphology: MorphologyKind::Small,
        pressure_control,
    }
}

fn status_of(e: &ClientError) -> u16 {
    match e {
        ClientError::Api { status, .. } => status.as_u16(),
        other => panic!("unexpected error {other}"),
    }
}

#[tokio::test]
async fn health_and_validate() {
    let c = start().await;
    assert_eq!(c.health().await.unwrap().status, "ok");
    let v = c.validate(MorphologyKind::Medium).await.unwrap();
    assert_eq!(v.morphology, MorphologyKind::Medium);
    assert_eq!(v.rows.len(), EPISODE_STEPS + 1);
    assert_eq!(v.rows[100].p_rel, 1.0);
}

#[tokio::test]
async fn episode_matches_in_process_run() {
    let c = start().await;
    let s = spec(Task::Locomotion, true);
    let genome = Genome::zeros(10, true);
    let remote = c
        .episode(&EpisodeRequest {
            spec: s,
            seed: 3,
            genome: genome.clone(),
        })
        .await
        .unwrap();
    let local = psa_core::tasks::run_episode(&s.episode(), &genome, 3).unwrap();
    assert_eq!(remote.fitness.to_bits(), local.fitness.to_bits());
}

#[tokio::test]
async fn mismatched_genome_is_rejected() {
    let c = start().await;
    let err = c
        .episode(&EpisodeRequest {
            spec: spec(Task::Escape, false),
            seed: 0,
            genome: Genome::zeros(10, true),
        })
        .await
        .unwrap_err();
    assert_eq!(status_of(&err), 400);
    assert!(err.is_client_error());
    assert!(err.to_string().contains("pressure_control"));
}

#[tokio::test]
async fn session_lifecycle() {
    let c = start().await;
    let created = c
        .create_session(&SessionRequest {
            spec: spec(Task::Locomotion, true),
            seed: 1,
        })
        .await
        .unwrap();
    assert_eq!(created.action_len, 12);
    assert_eq!(created.observation.values().len(), 33);
    let id = created.session_id;

    let err = c.step(&id, vec![0.0; 3]).await.unwrap_err();
    assert_eq!(status_of(&err), 400);

    let mut done_at = None;
    for i in 1..=EPISODE_STEPS {
        let step = c.step(&id, vec![0.0; 12]).await.unwrap();
        if step.done {
            done_at = Some(i);
            break;
        }
    }
    assert_eq!(done_at, Some(EPISODE_STEPS));
    let err = c.step(&id, vec![0.0; 12]).await.unwrap_err();
    assert_eq!(status_of(&err), 409);

    c.delete_session(&id).await.unwrap();
    let err = c.step(&id, vec![0.0; 12]).await.unwrap_err();
    assert_eq!(status_of(&err), 404);
}

#[tokio::test]
async fn evolve_job_runs_to_completion() {
    let c = start().await;
    let err = c
        .start_evolve(&EvolveRequest {
            spec: spec(Task::Locomotion, true),
            seed: 1,
            budget: 0,
            parallelism: None,
        })
        .await
        .unwrap_err();
    assert_eq!(status_of(&err), 400);

    let job = c
        .start_evolve(&EvolveRequest {
            spec: spec(Task::Locomotion, true),
            seed: 1,
            budget: 20,
            parallelism: Some(2),
        })
        .await
        .unwrap();
    let status = c
        .wait_job(&job.job_id, Duration::from_millis(20), |_| {})
        .await
        .unwrap();
    let outcome = status.outcome.unwrap();
    assert_eq!(status.evaluations, 20);
    assert_eq!(outcome.log.records.last().unwrap().evaluations, 20);
    assert_eq!(outcome.genome.theta.len(), 408);
    assert_eq!(Some(outcome.best_fitness), status.best);

    let err = c.job("missing").await.unwrap_err();
    assert_eq!(status_of(&err), 404);
}
