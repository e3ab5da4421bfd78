//! End-to-end operations: inflation validation, evolution runs, replay with
//! optional SVG frames, cross-run aggregation and a step-wise environment.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cmaes::{optimize_from, population_size, Cmaes, CmaesError, RunLog, RunRecord};
use crate::control::{genome_size, Genome};
use crate::morphology::{build_psa, PsaMorphology};
use crate::physics2d::{StaticGeometry, Vec2, World};
use crate::sensing::Observation;
use crate::tasks::{
    evaluate, run_episode_with, Episode, EpisodeConfig, EpisodeResult, MorphologyKind, Task,
    TaskError, DT, EPISODE_STEPS, GROUND_FRICTION, SPAWN_CLEARANCE, TERRAIN_EXTENT,
};

/// Unrecorded steps at zero pressure before validation starts, so the ring
/// begins collapsed.
pub const VALIDATE_SETTLE_STEPS: usize = 900;
pub const DEFAULT_FRAME_STRIDE: usize = 6;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Cmaes(#[from] CmaesError),
    #[error("no run logs to aggregate")]
    EmptyAggregate,
    #[error("run logs share no evaluation checkpoints")]
    NoCommonCheckpoints,
    #[error("frame stride must be at least 1")]
    FrameStride,
    #[error("simulation diverged: {0}")]
    Diverged(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidateRow {
    pub t: usize,
    pub rho: f64,
    pub p_rel: f64,
}

pub const VALIDATE_HEADER: &str = "t,rho,p_rel";

/// Inflate a ring on flat ground with zero spring commands and
/// `dp = p_max / 100` per step from `p = 0`. Row `t` is the state after `t`
/// steps.
pub fn validate(kind: MorphologyKind) -> Result<Vec<ValidateRow>, ExperimentError> {
    let mut params = kind.ring_params();
    params.p_min = 0.0;
    params.p_init = 0.0;
    let mut world = World::new(Vec2::new(0.0, -9.81), DT);
    let half = 0.5 * TERRAIN_EXTENT;
    world.add_static(StaticGeometry::polyline(
        &[Vec2::new(-half, 0.0), Vec2::new(half, 0.0)],
        GROUND_FRICTION,
    ));
    let center = Vec2::new(0.0, -params.lowest_offset() + SPAWN_CLEARANCE);
    let mut psa = build_psa(&params, center, &mut world).map_err(TaskError::from)?;
    let p_max = params.p_max;
    let step = |psa: &mut PsaMorphology, world: &mut World| {
        psa.apply_pressure_forces(world);
        psa.apply_shape_damping(world);
        world
            .step()
            .map_err(|e| ExperimentError::Diverged(e.to_string()))
    };
    for _ in 0..VALIDATE_SETTLE_STEPS {
        step(&mut psa, &mut world)?;
    }
    let row = |t: usize, psa: &PsaMorphology, world: &World| ValidateRow {
        t,
        rho: psa.area_ratio(world),
        p_rel: psa.pressure / p_max,
    };
    let mut rows = Vec::with_capacity(EPISODE_STEPS + 1);
    rows.push(row(0, &psa, &world));
    for t in 1..=EPISODE_STEPS {
        psa.update_pressure(p_max / 100.0);
        step(&mut psa, &mut world)?;
        rows.push(row(t, &psa, &world));
    }
    Ok(rows)
}

pub fn validate_csv(rows: &[ValidateRow]) -> String {
    let mut out = String::from(VALIDATE_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.t, r.rho, r.p_rel);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvolveConfig {
    pub task: Task,
    pub morphology: MorphologyKind,
    pub pressure_control: bool,
    pub seed: u64,
    pub budget: usize,
    pub parallelism: usize,
}

impl EvolveConfig {
    pub fn episode(&self) -> EpisodeConfig {
        EpisodeConfig::new(self.task, self.morphology, self.pressure_control)
    }

    pub fn genome_size(&self) -> usize {
        genome_size(self.morphology.n_mass(), self.pressure_control)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolveOutcome {
    pub genome: Genome,
    pub best_fitness: f64,
    pub log: RunLog,
    pub lambda: usize,
}

/// Header metadata for a run log. Notes that the large ablation size is
/// 1344, not the 1334 sometimes quoted.
pub fn run_metadata(config: &EvolveConfig) -> Vec<(String, String)> {
    let size = config.genome_size();
    let mut meta = vec![
        ("task".to_owned(), config.task.to_string()),
        ("morphology".to_owned(), config.morphology.to_string()),
        (
            "pressure_control".to_owned(),
            config.pressure_control.to_string(),
        ),
        ("seed".to_owned(), config.seed.to_string()),
        ("budget".to_owned(), config.budget.to_string()),
        ("genome_size".to_owned(), size.to_string()),
        ("lambda".to_owned(), population_size(size).to_string()),
    ];
    if config.morphology == MorphologyKind::Large && !config.pressure_control {
        meta.push((
            "genome_size_note".to_owned(),
            "published ablation count is 1334; the layout (21 x 64) gives 1344, which is used"
                .to_owned(),
        ));
    }
    meta
}

/// Optimize a controller; every evaluation of the run uses `config.seed`
/// for the environment.
pub fn evolve(
    config: &EvolveConfig,
    progress: impl FnMut(&RunRecord, &[f64]),
) -> Result<EvolveOutcome, ExperimentError> {
    let episode = config.episode();
    let n_mass = config.morphology.n_mass();
    let es = Cmaes::new(config.genome_size(), config.seed)?;
    let lambda = es.lambda();
    let seed = config.seed;
    let pressure = config.pressure_control;
    let fitness = |theta: &[f64]| {
        let genome = Genome {
            n_mass,
            pressure_enabled: pressure,
            theta: theta.to_vec(),
        };
        evaluate(&episode, &genome, seed)
    };
    let result = optimize_from(es, config.budget, config.parallelism, fitness, progress)?;
    let mut log = result.log;
    log.metadata = run_metadata(config);
    Ok(EvolveOutcome {
        genome: Genome {
            n_mass,
            pressure_enabled: pressure,
            theta: result.best,
        },
        best_fitness: result.best_fitness,
        log,
        lambda,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub name: String,
    pub svg: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayOutcome {
    pub result: EpisodeResult,
    pub frames: Vec<Frame>,
}

/// Re-run a genome, recording the trajectory and, when `frame_stride` is
/// set, an SVG frame after every `frame_stride` steps.
pub fn replay(
    config: &EpisodeConfig,
    genome: &Genome,
    seed: u64,
    frame_stride: Option<usize>,
) -> Result<ReplayOutcome, ExperimentError> {
    let mut config = *config;
    config.record_trajectory = true;
    let stride = frame_stride.unwrap_or(usize::MAX);
    if stride == 0 {
        return Err(ExperimentError::FrameStride);
    }
    let mut frames = Vec::new();
    let result = run_episode_with(&config, genome, seed, |episode| {
        let step = episode.step_count();
        if frame_stride.is_some() && (step % stride == 0 || episode.is_done()) {
            frames.push(Frame {
                name: format!("frame_{step:05}.svg"),
                svg: render_svg(episode),
            });
        }
    })?;
    Ok(ReplayOutcome { result, frames })
}

/// Vector drawing of the episode state around the body.
pub fn render_svg(episode: &Episode) -> String {
    let world = &episode.world;
    let psa = &episode.psa;
    let com = psa.center_of_mass(world);
    let r = psa.radius;
    let half_w = (4.0 * r).max(20.0);
    let (x0, x1) = (com.x - half_w, com.x + half_w);
    let (y0, y1) = (-0.25 * half_w, 1.25 * half_w);
    let scale = 10.0;
    let px = |p: Vec2| ((p.x - x0) * scale, (y1 - p.y) * scale);
    let width = (x1 - x0) * scale;
    let height = (y1 - y0) * scale;

    let mut s = String::with_capacity(8192);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for geo in world.statics() {
        for i in geo.candidates(x0, x1) {
            let seg = &geo.segments()[i];
            if seg.max().x < x0 {
                continue;
            }
            let (ax, ay) = px(seg.a);
            let (bx, by) = px(seg.b);
            let _ = writeln!(
                s,
                r#"<line x1="{ax:.2}" y1="{ay:.2}" x2="{bx:.2}" y2="{by:.2}" stroke="black" stroke-width="2"/>"#
            );
        }
    }
    if let Some(cage) = episode.cage() {
        for x in [-cage.exit_x(), cage.exit_x()] {
            let (lx, _) = px(Vec2::new(x, 0.0));
            let _ = writeln!(
                s,
                r#"<line x1="{lx:.2}" y1="0" x2="{lx:.2}" y2="{height:.0}" stroke="gray" stroke-dasharray="6,6"/>"#
            );
        }
    }
    let positions = psa.positions(world);
    for (i, a) in positions.iter().enumerate() {
        let b = positions[(i + 1) % positions.len()];
        let (ax, ay) = px(*a);
        let (bx, by) = px(b);
        let _ = writeln!(
            s,
            r#"<line x1="{ax:.2}" y1="{ay:.2}" x2="{bx:.2}" y2="{by:.2}" stroke="steelblue" stroke-width="2"/>"#
        );
    }
    for &id in &psa.mass_ids {
        let body = world.body(id);
        let h = body.half_side;
        let (cx, cy) = px(body.position + Vec2::new(-h, h));
        let side = 2.0 * h * scale;
        let fill = if body.touching {
            "orange"
        } else {
            "darkslategray"
        };
        let _ = writeln!(
            s,
            r#"<rect x="{cx:.2}" y="{cy:.2}" width="{side:.2}" height="{side:.2}" fill="{fill}"/>"#
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="10" y="24" font-family="monospace" font-size="18">t={:.2} s  p={:.3} Pa  area={:.3} m2</text>"#,
        episode.elapsed(),
        psa.pressure,
        psa.envelope_area(world)
    );
    s.push_str("</svg>\n");
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub evaluations: usize,
    pub median: f64,
    pub std: f64,
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateSummary {
    pub checkpoints: Vec<Checkpoint>,
    /// Final best-so-far of every run, ascending.
    pub final_best: Vec<f64>,
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn median_sorted(v: &[f64]) -> f64 {
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Population standard deviation of ascending values.
fn std_sorted(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let mut dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    dev.sort_by(f64::total_cmp);
    (dev.iter().sum::<f64>() / n).sqrt()
}

/// Median and standard deviation of best-so-far fitness across runs at every
/// evaluation count all runs share. Independent of the input order.
pub fn aggregate(logs: &[RunLog]) -> Result<AggregateSummary, ExperimentError> {
    if logs.is_empty() {
        return Err(ExperimentError::EmptyAggregate);
    }
    let mut common: Vec<usize> = logs[0].records.iter().map(|r| r.evaluations).collect();
    for log in &logs[1..] {
        common.retain(|e| log.records.iter().any(|r| r.evaluations == *e));
    }
    common.sort_unstable();
    common.dedup();
    if common.is_empty() {
        return Err(ExperimentError::NoCommonCheckpoints);
    }
    let checkpoints = common
        .iter()
        .map(|&e| {
            let values: Vec<f64> = logs
                .iter()
                .map(|log| {
                    log.records
                        .iter()
                        .find(|r| r.evaluations == e)
                        .map(|r| r.best)
                        .unwrap_or(f64::NAN)
                })
                .collect();
            let v = sorted(&values);
            Checkpoint {
                evaluations: e,
                median: median_sorted(&v),
                std: std_sorted(&v),
                runs: v.len(),
            }
        })
        .collect();
    let finals: Vec<f64> = logs
        .iter()
        .map(|l| l.records.last().map_or(f64::NAN, |r| r.best))
        .collect();
    Ok(AggregateSummary {
        checkpoints,
        final_best: sorted(&finals),
    })
}

pub const AGGREGATE_HEADER: &str = "evaluations,median_best,std_best,runs";

impl AggregateSummary {
    pub fn summary_csv(&self) -> String {
        let mut out = String::from(AGGREGATE_HEADER);
        out.push('\n');
        for c in &self.checkpoints {
            let _ = writeln!(out, "{},{},{},{}", c.evaluations, c.median, c.std, c.runs);
        }
        out
    }

    /// Final-best distribution, one value per row, ascending.
    pub fn final_csv(&self) -> String {
        let mut out = String::from("final_best\n");
        for v in &self.final_best {
            let _ = writeln!(out, "{v}");
        }
        out
    }

    pub fn final_median(&self) -> f64 {
        median_sorted(&self.final_best)
    }
}

/// Step-wise environment over one episode.
#[derive(Debug, Clone)]
pub struct EnvSession {
    episode: Episode,
    seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvStep {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
}

impl EnvSession {
    pub fn reset(config: EpisodeConfig, seed: u64) -> Result<(Self, Observation), ExperimentError> {
        let mut episode = Episode::new(config, seed)?;
        let o = episode.observe();
        Ok((Self { episode, seed }, o))
    }

    /// `action = [s_0, .., s_n, (dp)]`.
    pub fn step(&mut self, action: &[f64]) -> Result<EnvStep, ExperimentError> {
        let out = self.episode.step_action(action)?;
        Ok(EnvStep {
            observation: self.episode.observe(),
            reward: out.reward,
            done: out.done,
        })
    }

    pub fn config(&self) -> &EpisodeConfig {
        &self.episode.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn steps(&self) -> usize {
        self.episode.step_count()
    }

    pub fn is_done(&self) -> bool {
        self.episode.is_done()
    }

    pub fn result(&self) -> EpisodeResult {
        self.episode.result()
    }

    pub fn episode(&self) -> &Episode {
        &self.episode
    }
}
