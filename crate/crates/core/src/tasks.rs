//! Task environments (hilly terrain, cage), the closed-loop episode and the
//! per-task fitness functions.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::control::{
    actuate_spring, genome_size, spring_outputs, ControlError, ControllerPair, Genome,
};
use crate::gas::{GasModel, P_MIN_FRACTION};
use crate::morphology::{build_psa, MorphologyError, PsaMorphology, RingParams};
use crate::physics2d::{PhysicsError, StaticGeometry, Vec2, World};
use crate::sensing::{observation_len, observe, Observation, SensorConfig, SensorHistory};

pub const DT: f64 = 1.0 / 60.0;
pub const T_FINAL: f64 = 30.0;
pub const EPISODE_STEPS: usize = 1800;
pub const GROUND_FRICTION: f64 = 0.2;
/// Gap between the lowest mass and the ground at spawn (m).
pub const SPAWN_CLEARANCE: f64 = 0.1;
pub const WALL_THICKNESS: f64 = 1.0;
pub const BUMP_DISTANCE: f64 = 10.0;
/// Total terrain length over both directions (m).
pub const TERRAIN_EXTENT: f64 = 2000.0;
/// Fitness assigned to an episode whose state diverged.
pub const FAILED_FITNESS: f64 = -1.0e6;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TaskError {
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Morphology(#[from] MorphologyError),
    #[error("genome is for n_mass={found_n}, pressure_control={found_p}; task needs n_mass={n}, pressure_control={p}")]
    GenomeMismatch {
        n: usize,
        p: bool,
        found_n: usize,
        found_p: bool,
    },
    #[error("action length mismatch: expected {expected}, found {found}")]
    ActionLength { expected: usize, found: usize },
    #[error("episode is already done")]
    EpisodeDone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Locomotion,
    Escape,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Locomotion => "locomotion",
            Task::Escape => "escape",
        })
    }
}

impl FromStr for Task {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "locomotion" => Ok(Task::Locomotion),
            "escape" => Ok(Task::Escape),
            other => Err(format!(
                "unknown task `{other}` (expected locomotion or escape)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MorphologyKind {
    Small,
    Medium,
    Large,
}

impl MorphologyKind {
    pub const ALL: [MorphologyKind; 3] = [Self::Small, Self::Medium, Self::Large];

    pub fn n_mass(self) -> usize {
        match self {
            Self::Small => 10,
            Self::Medium => 15,
            Self::Large => 20,
        }
    }

    pub fn radius(self) -> f64 {
        match self {
            Self::Small => 5.0,
            Self::Medium => 7.5,
            Self::Large => 10.0,
        }
    }

    /// Gas mass (kg) that fills the envelope at `p_max`.
    pub fn gas_mass(self) -> f64 {
        match self {
            Self::Small => 0.05,
            Self::Medium => 0.075,
            Self::Large => 0.1,
        }
    }

    /// Average terrain bump height (m).
    pub fn bump_height(self) -> f64 {
        match self {
            Self::Small => 1.0,
            Self::Medium => 2.0,
            Self::Large => 3.0,
        }
    }

    pub fn gas(self) -> GasModel {
        GasModel::nitrogen(self.gas_mass())
    }

    pub fn p_max(self) -> f64 {
        self.gas().p_max_for(self.radius())
    }

    /// Ring parameters with pressure bounds and initial pressure `p_max`.
    pub fn ring_params(self) -> RingParams {
        let mut params = RingParams::new(self.n_mass(), self.radius());
        params.p_max = self.p_max();
        params.p_min = P_MIN_FRACTION * params.p_max;
        params.p_init = params.p_max;
        params
    }
}

impl fmt::Display for MorphologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Small => "small",
            Self::Medium => "medium",
            Self::Large => "large",
        })
    }
}

impl FromStr for MorphologyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "small" => Ok(Self::Small),
            "medium" => Ok(Self::Medium),
            "large" => Ok(Self::Large),
            other => Err(format!(
                "unknown morphology `{other}` (expected small, medium or large)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerrainSpec {
    pub seed: u64,
    pub avg_bump_height: f64,
    pub avg_bump_distance: f64,
    pub extent: f64,
    /// Length of the flat pad centered at the origin.
    pub pad_length: f64,
}

impl TerrainSpec {
    pub fn for_morphology(kind: MorphologyKind, seed: u64) -> Self {
        Self {
            seed,
            avg_bump_height: kind.bump_height(),
            avg_bump_distance: BUMP_DISTANCE,
            extent: TERRAIN_EXTENT,
            pad_length: 2.0 * kind.radius() + 2.0,
        }
    }
}

/// One triangular bump.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub peak_x: f64,
    pub height: f64,
    pub half_width: f64,
}

/// Bumps on one side of the pad, walking away from it in direction `sign`.
fn bump_side(rng: &mut ChaCha8Rng, spec: &TerrainSpec, sign: f64) -> Vec<Bump> {
    let pad_end = 0.5 * spec.pad_length;
    let reach = 0.5 * spec.extent;
    let mut spacing = Vec::new();
    let mut heights = Vec::new();
    // The first spacing runs from the pad edge to the first peak.
    let mut x = pad_end;
    while x < reach {
        let s = rng.random_range(0.5..1.5) * spec.avg_bump_distance;
        let h = rng.random_range(0.5..1.5) * spec.avg_bump_height;
        spacing.push(s);
        heights.push(h);
        x += s;
    }
    spacing.push(spacing.last().copied().unwrap_or(spec.avg_bump_distance));

    let mut bumps = Vec::with_capacity(heights.len());
    let mut peak = pad_end;
    for k in 0..heights.len() {
        // The first bump uses half its spacing so it starts past the pad.
        let before = if k == 0 { spacing[0] } else { spacing[k] };
        peak += if k == 0 { 0.5 * spacing[0] } else { spacing[k] };
        let after = spacing[k + 1];
        bumps.push(Bump {
            peak_x: sign * peak,
            height: heights[k],
            half_width: 0.25 * before.min(after),
        });
    }
    bumps
}

/// Bumps to the right of the pad, then bumps to the left, each ordered away
/// from the origin.
pub fn terrain_bumps(spec: &TerrainSpec) -> (Vec<Bump>, Vec<Bump>) {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let right = bump_side(&mut rng, spec, 1.0);
    let left = bump_side(&mut rng, spec, -1.0);
    (right, left)
}

/// Polyline vertices of the hilly terrain, ordered by increasing x.
pub fn terrain_points(spec: &TerrainSpec) -> Vec<Vec2> {
    let (right, left) = terrain_bumps(spec);
    let mut pts = Vec::with_capacity(3 * (right.len() + left.len()) + 4);
    let far = |bumps: &[Bump]| bumps.last().map_or(0.0, |b| b.peak_x.abs() + b.half_width);
    let left_end = far(&left).max(0.5 * spec.extent) + spec.avg_bump_distance;
    let right_end = far(&right).max(0.5 * spec.extent) + spec.avg_bump_distance;

    pts.push(Vec2::new(-left_end, 0.0));
    for b in left.iter().rev() {
        push_bump(&mut pts, b);
    }
    for b in &right {
        push_bump(&mut pts, b);
    }
    pts.push(Vec2::new(right_end, 0.0));
    pts
}

fn push_bump(pts: &mut Vec<Vec2>, b: &Bump) {
    let x = b.peak_x;
    pts.push(Vec2::new(x - b.half_width, 0.0));
    pts.push(Vec2::new(x, b.height));
    pts.push(Vec2::new(x + b.half_width, 0.0));
}

pub fn generate_hilly_terrain(spec: &TerrainSpec) -> StaticGeometry {
    StaticGeometry::polyline(&terrain_points(spec), GROUND_FRICTION)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CageSpec {
    pub roof_height: f64,
    pub wall_separation: f64,
    pub aperture_height: f64,
    pub wall_thickness: f64,
}

impl CageSpec {
    pub fn for_radius(r: f64) -> Self {
        let roof_height = 2.0 * r + 1.0;
        Self {
            roof_height,
            wall_separation: 3.0 * r,
            aperture_height: roof_height / 3.0,
            wall_thickness: WALL_THICKNESS,
        }
    }

    /// Inner face of the right wall.
    pub fn wall_x(&self) -> f64 {
        0.5 * self.wall_separation
    }

    /// Mass centers at or beyond this |x| are outside the cage.
    pub fn exit_x(&self) -> f64 {
        self.wall_x() + self.wall_thickness
    }
}

/// Flat ground, two walls that leave an aperture at their base, and a roof.
/// Walls extend outward from `x = +-wall_x`.
pub fn build_cage(spec: &CageSpec) -> StaticGeometry {
    let inner = spec.wall_x();
    let outer = spec.exit_x();
    let (lo, hi) = (spec.aperture_height, spec.roof_height);
    let half = 0.5 * TERRAIN_EXTENT;
    let rect = |x0: f64, x1: f64| {
        StaticGeometry::polygon(
            &[
                Vec2::new(x0, lo),
                Vec2::new(x1, lo),
                Vec2::new(x1, hi),
                Vec2::new(x0, hi),
            ],
            GROUND_FRICTION,
        )
    };
    StaticGeometry::union([
        StaticGeometry::polyline(
            &[Vec2::new(-half, 0.0), Vec2::new(half, 0.0)],
            GROUND_FRICTION,
        ),
        rect(inner, outer),
        rect(-outer, -inner),
        StaticGeometry::polyline(
            &[Vec2::new(outer, hi), Vec2::new(-outer, hi)],
            GROUND_FRICTION,
        ),
    ])
}

pub fn escaped(psa: &PsaMorphology, world: &World, cage: &CageSpec) -> bool {
    let limit = cage.exit_x();
    psa.mass_ids
        .iter()
        .all(|&id| world.body(id).position.x.abs() >= limit)
}

pub fn locomotion_fitness(start: Vec2, end: Vec2) -> f64 {
    (end.x - start.x) / T_FINAL
}

pub fn escape_fitness(start: Vec2, end: Vec2, elapsed: f64) -> f64 {
    if elapsed > 0.0 {
        (end - start).length() / elapsed
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeConfig {
    pub task: Task,
    pub morphology: MorphologyKind,
    pub pressure_control: bool,
    pub steps: usize,
    pub record_trajectory: bool,
}

impl EpisodeConfig {
    pub fn new(task: Task, morphology: MorphologyKind, pressure_control: bool) -> Self {
        Self {
            task,
            morphology,
            pressure_control,
            steps: EPISODE_STEPS,
            record_trajectory: false,
        }
    }

    pub fn genome_size(&self) -> usize {
        genome_size(self.morphology.n_mass(), self.pressure_control)
    }

    /// Spring commands plus the pressure command when enabled.
    pub fn action_len(&self) -> usize {
        spring_outputs(self.morphology.n_mass()) + usize::from(self.pressure_control)
    }

    pub fn observation_len(&self) -> usize {
        observation_len(self.morphology.n_mass())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub step: usize,
    pub com_x: f64,
    pub com_y: f64,
    pub pressure: f64,
    pub area: f64,
}

pub const TRAJECTORY_HEADER: &str = "step,com_x,com_y,pressure,area";

pub fn trajectory_csv(rows: &[TrajectoryRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(TRAJECTORY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.step, r.com_x, r.com_y, r.pressure, r.area
        ));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub fitness: f64,
    pub elapsed: f64,
    pub steps: usize,
    pub solved: bool,
    /// Set when the state diverged and the episode was aborted.
    pub failed: bool,
    pub trajectory: Option<Vec<TrajectoryRow>>,
}

/// What one step produced.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub done: bool,
}

/// A running episode: world, body, sensors and task bookkeeping.
#[derive(Debug, Clone)]
pub struct Episode {
    pub config: EpisodeConfig,
    pub world: World,
    pub psa: PsaMorphology,
    pub sensors: SensorConfig,
    history: SensorHistory,
    gas: GasModel,
    cage: Option<CageSpec>,
    base_lengths: Vec<f64>,
    start_com: Vec2,
    last_measure: f64,
    step: usize,
    done: bool,
    solved: bool,
    failed: bool,
    trajectory: Option<Vec<TrajectoryRow>>,
}

impl Episode {
    /// Build the task world. `seed` selects the terrain; the cage ignores it.
    pub fn new(config: EpisodeConfig, seed: u64) -> Result<Self, TaskError> {
        let kind = config.morphology;
        let params = kind.ring_params();
        let mut world = World::new(Vec2::new(0.0, -9.81), DT);
        let mut spawn_y = -params.lowest_offset() + SPAWN_CLEARANCE;
        let cage = match config.task {
            Task::Locomotion => {
                world.add_static(generate_hilly_terrain(&TerrainSpec::for_morphology(
                    kind, seed,
                )));
                None
            }
            Task::Escape => {
                let cage = CageSpec::for_radius(kind.radius());
                world.add_static(build_cage(&cage));
                // The body is as tall as the cage; center it when the
                // clearance would push it into the roof.
                let top = spawn_y + params.radius + 0.5 * params.mass_side;
                if top > cage.roof_height {
                    spawn_y = 0.5 * cage.roof_height;
                }
                Some(cage)
            }
        };
        let psa = build_psa(&params, Vec2::new(0.0, spawn_y), &mut world)?;
        let base_lengths = psa.base_lengths(&world).collect();
        let start_com = psa.center_of_mass(&world);
        let mut episode = Self {
            config,
            sensors: SensorConfig::new(params.radius, params.p_max),
            history: SensorHistory::new(),
            gas: kind.gas(),
            cage,
            base_lengths,
            start_com,
            last_measure: 0.0,
            step: 0,
            done: false,
            solved: false,
            failed: false,
            trajectory: config.record_trajectory.then(Vec::new),
            world,
            psa,
        };
        if !config.pressure_control {
            episode.psa.pressure = episode.gas_pressure().unwrap_or(0.0);
        }
        episode.record();
        Ok(episode)
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn elapsed(&self) -> f64 {
        self.step as f64 * self.world.dt
    }

    pub fn start_com(&self) -> Vec2 {
        self.start_com
    }

    pub fn cage(&self) -> Option<&CageSpec> {
        self.cage.as_ref()
    }

    /// Push the current sensor frame and return the windowed observation.
    pub fn observe(&mut self) -> Observation {
        observe(&self.psa, &self.world, &self.sensors, &mut self.history)
    }

    fn gas_pressure(&self) -> Option<f64> {
        self.gas
            .pressure_from_area(self.psa.envelope_area(&self.world))
            .ok()
    }

    fn measure(&self) -> f64 {
        let com = self.psa.center_of_mass(&self.world);
        match self.config.task {
            Task::Locomotion => com.x - self.start_com.x,
            Task::Escape => (com - self.start_com).length(),
        }
    }

    fn record(&mut self) {
        if let Some(rows) = self.trajectory.as_mut() {
            let com = self.psa.center_of_mass(&self.world);
            rows.push(TrajectoryRow {
                step: self.step,
                com_x: com.x,
                com_y: com.y,
                pressure: self.psa.pressure,
                area: self.psa.envelope_area(&self.world),
            });
        }
    }

    fn fail(&mut self) -> StepOutcome {
        tracing::warn!(
            step = self.step,
            "episode diverged; assigning failure fitness"
        );
        self.failed = true;
        self.done = true;
        StepOutcome {
            reward: 0.0,
            done: true,
        }
    }

    /// Advance one step with spring commands `springs` (clamped to
    /// `[-1, 1]`, entries beyond the joint count ignored) and, with pressure
    /// control, the pressure increment `delta_p`.
    pub fn advance(
        &mut self,
        springs: &[f64],
        delta_p: Option<f64>,
    ) -> Result<StepOutcome, TaskError> {
        if self.done {
            return Err(TaskError::EpisodeDone);
        }
        if self.config.pressure_control {
            let dp = delta_p.unwrap_or(0.0);
            if !dp.is_finite() {
                return Ok(self.fail());
            }
            self.psa.update_pressure(dp);
        } else {
            match self.gas_pressure() {
                Some(p) => self.psa.pressure = p,
                None => return Ok(self.fail()),
            }
        }
        let rest =
            self.base_lengths.iter().zip(springs).map(|(&l, &s)| {
                actuate_spring(l, if s.is_nan() { 0.0 } else { s.clamp(-1.0, 1.0) })
            });
        self.psa.set_rest_lengths(&mut self.world, rest);
        self.psa.apply_pressure_forces(&mut self.world);
        self.psa.apply_shape_damping(&mut self.world);
        if let Err(PhysicsError::NonFinite { .. }) = self.world.step() {
            return Ok(self.fail());
        }
        self.step += 1;
        self.record();

        let measure = self.measure();
        let reward = (measure - self.last_measure) / self.world.dt;
        self.last_measure = measure;
        if let Some(cage) = &self.cage {
            if escaped(&self.psa, &self.world, cage) {
                self.solved = true;
                self.done = true;
            }
        }
        if self.step >= self.config.steps {
            self.done = true;
        }
        Ok(StepOutcome {
            reward,
            done: self.done,
        })
    }

    /// Step with a flat action `[s_0, .., s_n, (dp)]`.
    pub fn step_action(&mut self, action: &[f64]) -> Result<StepOutcome, TaskError> {
        let expected = self.config.action_len();
        if action.len() != expected {
            return Err(TaskError::ActionLength {
                expected,
                found: action.len(),
            });
        }
        let n_springs = spring_outputs(self.config.morphology.n_mass());
        let dp = self.config.pressure_control.then(|| action[n_springs]);
        self.advance(&action[..n_springs], dp)
    }

    pub fn result(&self) -> EpisodeResult {
        let elapsed = self.elapsed();
        let fitness = if self.failed {
            FAILED_FITNESS
        } else {
            let end = self.psa.center_of_mass(&self.world);
            match self.config.task {
                Task::Locomotion => locomotion_fitness(self.start_com, end),
                Task::Escape => escape_fitness(self.start_com, end, elapsed),
            }
        };
        EpisodeResult {
            fitness,
            elapsed,
            steps: self.step,
            solved: self.solved,
            failed: self.failed,
            trajectory: self.trajectory.clone(),
        }
    }
}

fn check_genome(config: &EpisodeConfig, genome: &Genome) -> Result<(), TaskError> {
    let n = config.morphology.n_mass();
    if genome.n_mass != n || genome.pressure_enabled != config.pressure_control {
        return Err(TaskError::GenomeMismatch {
            n,
            p: config.pressure_control,
            found_n: genome.n_mass,
            found_p: genome.pressure_enabled,
        });
    }
    Ok(())
}

/// Run a closed-loop episode: observe, update pressure, set rest lengths,
/// apply pressure, step; until the step budget or escape.
pub fn run_episode(
    config: &EpisodeConfig,
    genome: &Genome,
    seed: u64,
) -> Result<EpisodeResult, TaskError> {
    run_episode_with(config, genome, seed, |_| {})
}

/// [`run_episode`], calling `after_step` once after every step.
pub fn run_episode_with(
    config: &EpisodeConfig,
    genome: &Genome,
    seed: u64,
    mut after_step: impl FnMut(&Episode),
) -> Result<EpisodeResult, TaskError> {
    check_genome(config, genome)?;
    let controller = ControllerPair::decode(genome)?;
    let mut episode = Episode::new(*config, seed)?;
    let mut springs = vec![0.0; spring_outputs(controller.n_mass)];
    while !episode.is_done() {
        let o = episode.observe();
        controller.springs_control_into(o.values(), &mut springs);
        let dp = controller.pressure_control(o.values());
        episode.advance(&springs, dp)?;
        after_step(&episode);
    }
    Ok(episode.result())
}

/// Fitness of `genome`, mapping every error to [`FAILED_FITNESS`].
pub fn evaluate(config: &EpisodeConfig, genome: &Genome, seed: u64) -> f64 {
    match run_episode(config, genome, seed) {
        Ok(r) => r.fitness,
        Err(e) => {
            tracing::warn!(error = %e, "evaluation failed");
            FAILED_FITNESS
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn morphology_table() {
        assert_eq!(
            (
                MorphologyKind::Small.n_mass(),
                MorphologyKind::Small.radius()
            ),
            (10, 5.0)
        );
        assert_eq!(
            (
                MorphologyKind::Medium.n_mass(),
                MorphologyKind::Medium.radius()
            ),
            (15, 7.5)
        );
        assert_eq!(
            (
                MorphologyKind::Large.n_mass(),
                MorphologyKind::Large.radius()
            ),
            (20, 10.0)
        );
        for k in MorphologyKind::ALL {
            assert_eq!(k.to_string().parse::<MorphologyKind>().unwrap(), k);
        }
        assert!("tiny".parse::<MorphologyKind>().is_err());
        assert_eq!("escape".parse::<Task>().unwrap(), Task::Escape);
    }

    #[test]
    fn cage_dimensions() {
        let c = CageSpec::for_radius(10.0);
        assert_eq!(c.roof_height, 21.0);
        assert_eq!(c.wall_separation, 30.0);
        assert_eq!(c.aperture_height, 7.0);
        let c = CageSpec::for_radius(5.0);
        assert_eq!(c.roof_height, 11.0);
        assert_eq!(c.wall_separation, 15.0);
        assert!((c.aperture_height - 11.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn cage_has_ground_walls_and_roof() {
        let spec = CageSpec::for_radius(5.0);
        let geo = build_cage(&spec);
        assert_eq!(geo.segments().len(), 1 + 4 + 4 + 1);
        let roof = geo
            .segments()
            .iter()
            .filter(|s| s.a.y == 11.0 && s.b.y == 11.0)
            .count();
        assert!(roof >= 1);
        // Nothing static in the aperture band next to the wall.
        let x = spec.wall_x() + 0.5;
        assert!(geo
            .segments()
            .iter()
            .filter(|s| s.min().x <= x && s.max().x >= x)
            .all(|s| s.max().y == 0.0 || s.min().y >= spec.aperture_height));
    }

    #[test]
    fn fitness_arithmetic() {
        assert_eq!(locomotion_fitness(Vec2::ZERO, Vec2::new(90.0, 3.0)), 3.0);
        assert_eq!(locomotion_fitness(Vec2::ZERO, Vec2::ZERO), 0.0);
        assert!((locomotion_fitness(Vec2::ZERO, Vec2::new(-3.0, 0.0)) + 0.1).abs() < 1e-15);
        assert_eq!(escape_fitness(Vec2::ZERO, Vec2::new(15.0, 0.0), 30.0), 0.5);
        assert_eq!(escape_fitness(Vec2::ZERO, Vec2::new(12.0, 16.0), 10.0), 2.0);
        assert_eq!(escape_fitness(Vec2::ZERO, Vec2::ZERO, 30.0), 0.0);
    }

    #[test]
    fn flat_terrain_limit() {
        let mut spec = TerrainSpec::for_morphology(MorphologyKind::Small, 3);
        spec.avg_bump_height = 0.0;
        assert!(terrain_points(&spec).iter().all(|p| p.y == 0.0));
    }

    #[test]
    fn terrain_pad_and_extent() {
        let spec = TerrainSpec::for_morphology(MorphologyKind::Medium, 9);
        let pts = terrain_points(&spec);
        assert!(pts.windows(2).all(|w| w[0].x <= w[1].x));
        assert!(pts.last().unwrap().x - pts[0].x >= 2000.0);
        assert!(pts
            .iter()
            .filter(|p| p.x.abs() < 0.5 * spec.pad_length)
            .all(|p| p.y == 0.0));
        assert_eq!(terrain_points(&spec), pts);
    }

    #[test]
    fn spawn_is_clear_of_geometry() {
        for kind in MorphologyKind::ALL {
            for task in [Task::Locomotion, Task::Escape] {
                let ep = Episode::new(EpisodeConfig::new(task, kind, true), 1).unwrap();
                let lowest = ep
                    .psa
                    .positions(&ep.world)
                    .iter()
                    .map(|p| p.y - 0.5)
                    .fold(f64::INFINITY, f64::min);
                let highest = ep
                    .psa
                    .positions(&ep.world)
                    .iter()
                    .map(|p| p.y + 0.5)
                    .fold(f64::NEG_INFINITY, f64::max);
                assert!(lowest >= -1e-12, "{kind} {task}");
                if let Some(c) = ep.cage() {
                    assert!(highest <= c.roof_height + 1e-12, "{kind} {task}");
                    assert!(!escaped(&ep.psa, &ep.world, c));
                }
            }
        }
    }

    #[test]
    fn escaped_needs_every_mass_outside() {
        let mut ep = Episode::new(
            EpisodeConfig::new(Task::Escape, MorphologyKind::Small, true),
            0,
        )
        .unwrap();
        let cage = *ep.cage().unwrap();
        let ids = ep.psa.mass_ids.clone();
        for &id in &ids {
            ep.world.body_mut(id).position.x = 10.0;
        }
        assert!(escaped(&ep.psa, &ep.world, &cage));
        ep.world.body_mut(ids[3]).position.x = 0.0;
        assert!(!escaped(&ep.psa, &ep.world, &cage));
    }

    #[test]
    fn action_validation() {
        let cfg = EpisodeConfig::new(Task::Locomotion, MorphologyKind::Small, true);
        assert_eq!(cfg.action_len(), 12);
        let mut ep = Episode::new(cfg, 0).unwrap();
        assert_eq!(
            ep.step_action(&[0.0; 11]),
            Err(TaskError::ActionLength {
                expected: 12,
                found: 11
            })
        );
        let mut cfg = cfg;
        cfg.steps = 2;
        let mut ep = Episode::new(cfg, 0).unwrap();
        assert!(!ep.step_action(&[0.0; 12]).unwrap().done);
        assert!(ep.step_action(&[0.0; 12]).unwrap().done);
        assert_eq!(ep.step_action(&[0.0; 12]), Err(TaskError::EpisodeDone));
    }

    #[test]
    fn genome_mismatch_rejected() {
        let cfg = EpisodeConfig::new(Task::Locomotion, MorphologyKind::Small, true);
        let g = Genome::zeros(10, false);
        assert!(matches!(
            run_episode(&cfg, &g, 0),
            Err(TaskError::GenomeMismatch { .. })
        ));
        assert_eq!(evaluate(&cfg, &g, 0), FAILED_FITNESS);
    }

    #[test]
    fn nan_genome_gets_failure_fitness() {
        let mut cfg = EpisodeConfig::new(Task::Locomotion, MorphologyKind::Small, true);
        cfg.steps = 10;
        let mut g = Genome::zeros(10, true);
        g.theta[33] = f64::NAN;
        let r = run_episode(&cfg, &g, 0).unwrap();
        assert!(r.failed);
        assert_eq!(r.fitness, FAILED_FITNESS);
    }
}
