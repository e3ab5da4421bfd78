//! Proprioceptive sensors: per-mass touch, mass positions relative to the
//! center of mass, center-of-mass velocity and internal pressure, normalized
//! into `[0, 1]` and averaged over a sliding window.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::morphology::PsaMorphology;
use crate::physics2d::{Vec2, World};

/// Number of frames averaged into one observation.
pub const HISTORY_LEN: usize = 25;
/// Velocity magnitude mapped to the ends of the normalized range (m/s).
pub const VELOCITY_CAP: f64 = 10.0;

/// Observation length for a ring of `n_mass` masses.
pub const fn observation_len(n_mass: usize) -> usize {
    3 * n_mass + 3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensorConfig {
    pub history_len: usize,
    pub velocity_cap: f64,
    pub position_scale: f64,
    pub p_max: f64,
}

impl SensorConfig {
    pub fn new(radius: f64, p_max: f64) -> Self {
        Self {
            history_len: HISTORY_LEN,
            velocity_cap: VELOCITY_CAP,
            position_scale: 2.0 * radius,
            p_max,
        }
    }
}

/// Unnormalized sensor readings.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSensors {
    pub touch: Vec<bool>,
    /// Mass centers relative to the center of mass (m).
    pub relative: Vec<Vec2>,
    /// Center-of-mass velocity (m/s).
    pub velocity: Vec2,
    pub pressure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation(pub Vec<f64>);

impl Observation {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

pub fn read_raw(psa: &PsaMorphology, world: &World) -> RawSensors {
    let com = psa.center_of_mass(world);
    let mut touch = Vec::with_capacity(psa.n_mass);
    let mut relative = Vec::with_capacity(psa.n_mass);
    for &id in &psa.mass_ids {
        let body = world.body(id);
        touch.push(body.touching);
        relative.push(body.position - com);
    }
    RawSensors {
        touch,
        relative,
        velocity: psa.center_of_mass_velocity(world),
        pressure: psa.pressure,
    }
}

fn unit(x: f64) -> f64 {
    // NaN maps to 0 so a diverging state still yields a valid observation.
    if x.is_nan() {
        0.0
    } else {
        x.clamp(0.0, 1.0)
    }
}

/// One normalized frame in observation layout:
/// `[touch.., relx_0, rely_0, .., v_x, v_y, p]`.
pub fn normalize(raw: &RawSensors, config: &SensorConfig) -> Vec<f64> {
    let n = raw.touch.len();
    let mut out = Vec::with_capacity(observation_len(n));
    out.extend(raw.touch.iter().map(|&t| if t { 1.0 } else { 0.0 }));
    for rel in &raw.relative {
        out.push(unit(rel.x / config.position_scale + 0.5));
        out.push(unit(rel.y / config.position_scale + 0.5));
    }
    let span = 2.0 * config.velocity_cap;
    out.push(unit(raw.velocity.x / span + 0.5));
    out.push(unit(raw.velocity.y / span + 0.5));
    out.push(unit(raw.pressure / config.p_max));
    out
}

/// Sliding window of the most recent normalized frames.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SensorHistory {
    frames: VecDeque<Vec<f64>>,
}

impl SensorHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Push a frame, evict frames beyond `capacity`, and return the
    /// element-wise mean of the stored frames. Summation runs oldest first.
    pub fn push(&mut self, frame: Vec<f64>, capacity: usize) -> Observation {
        self.frames.push_back(frame);
        while self.frames.len() > capacity.max(1) {
            self.frames.pop_front();
        }
        let mut mean = vec![0.0; self.frames[0].len()];
        for frame in &self.frames {
            for (m, v) in mean.iter_mut().zip(frame) {
                *m += v;
            }
        }
        let count = self.frames.len() as f64;
        for m in &mut mean {
            *m /= count;
        }
        Observation(mean)
    }
}

/// Read, normalize and average the current sensor state.
pub fn observe(
    psa: &PsaMorphology,
    world: &World,
    config: &SensorConfig,
    history: &mut SensorHistory,
) -> Observation {
    let frame = normalize(&read_raw(psa, world), config);
    history.push(frame, config.history_len)
}
