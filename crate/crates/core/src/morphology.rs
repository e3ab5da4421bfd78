//! The agent body: a ring of square masses joined into a closed chain of soft
//! joints, inflated by a single scalar internal pressure.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::physics2d::{BodyId, JointId, MassBody, SpringJoint, Vec2, World};

/// Mass side length (m).
pub const MASS_SIDE: f64 = 1.0;
/// Areal mass density (kg/m^2). See the README section on physical scale.
pub const MASS_DENSITY: f64 = 2.0;
/// Joint natural frequency (Hz).
pub const JOINT_FREQUENCY: f64 = 8.0;
/// Joint damping ratio.
pub const JOINT_DAMPING: f64 = 0.3;
pub const MIN_LENGTH_FACTOR: f64 = 0.75;
pub const MAX_LENGTH_FACTOR: f64 = 1.25;
/// Rate (1/s) at which envelope deformation velocity is damped. Rigid
/// translation and rotation of the ring are unaffected.
pub const SHAPE_DAMPING: f64 = 12.0;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MorphologyError {
    #[error("an envelope needs at least 3 masses, got {0}")]
    TooFewMasses(usize),
    #[error("radius must be positive and finite, got {0}")]
    BadRadius(f64),
}

/// Construction parameters for a ring body.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingParams {
    pub n_mass: usize,
    pub radius: f64,
    pub mass_side: f64,
    pub density: f64,
    pub frequency: f64,
    pub damping_ratio: f64,
    pub shape_damping: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub p_init: f64,
}

impl RingParams {
    pub fn new(n_mass: usize, radius: f64) -> Self {
        Self {
            n_mass,
            radius,
            mass_side: MASS_SIDE,
            density: MASS_DENSITY,
            frequency: JOINT_FREQUENCY,
            damping_ratio: JOINT_DAMPING,
            shape_damping: SHAPE_DAMPING,
            p_min: 0.0,
            p_max: 0.0,
            p_init: 0.0,
        }
    }

    /// Chord between neighbouring masses on the construction circle.
    pub fn base_length(&self) -> f64 {
        2.0 * self.radius * (PI / self.n_mass as f64).sin()
    }

    /// Lowest point reached by any mass, relative to the ring center.
    pub fn lowest_offset(&self) -> f64 {
        (0..self.n_mass)
            .map(|i| self.radius * self.angle(i).sin())
            .fold(f64::INFINITY, f64::min)
            - 0.5 * self.mass_side
    }

    fn angle(&self, i: usize) -> f64 {
        2.0 * PI * i as f64 / self.n_mass as f64
    }
}

/// Handle to a ring body living inside a [`World`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsaMorphology {
    pub n_mass: usize,
    pub radius: f64,
    /// Counter-clockwise ring order.
    pub mass_ids: Vec<BodyId>,
    /// Joint `i` connects mass `i` to mass `(i + 1) % n_mass`.
    pub joint_ids: Vec<JointId>,
    pub pressure: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub shape_damping: f64,
    pub spawn_center: Vec2,
}

/// Per-mass pressure forces (N), in ring order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PressureForces(pub Vec<Vec2>);

impl PressureForces {
    pub fn total(&self) -> Vec2 {
        self.0.iter().fold(Vec2::ZERO, |acc, &f| acc + f)
    }
}

/// Place `n_mass` masses on a circle of radius `r` about `center` and join
/// consecutive ones.
pub fn build_psa(
    params: &RingParams,
    center: Vec2,
    world: &mut World,
) -> Result<PsaMorphology, MorphologyError> {
    if params.n_mass < 3 {
        return Err(MorphologyError::TooFewMasses(params.n_mass));
    }
    if !(params.radius > 0.0 && params.radius.is_finite()) {
        return Err(MorphologyError::BadRadius(params.radius));
    }

    let mass_ids: Vec<BodyId> = (0..params.n_mass)
        .map(|i| {
            let theta = params.angle(i);
            let pos = center + Vec2::new(theta.cos(), theta.sin()) * params.radius;
            world.add_body(MassBody::new(pos, params.mass_side, params.density))
        })
        .collect();

    let base = params.base_length();
    let joint_ids = (0..params.n_mass)
        .map(|i| {
            world.add_joint(SpringJoint {
                body_a: mass_ids[i],
                body_b: mass_ids[(i + 1) % params.n_mass],
                base_length: base,
                rest_length: base,
                frequency: params.frequency,
                damping_ratio: params.damping_ratio,
                min_length: MIN_LENGTH_FACTOR * base,
                max_length: MAX_LENGTH_FACTOR * base,
            })
        })
        .collect();

    Ok(PsaMorphology {
        n_mass: params.n_mass,
        radius: params.radius,
        mass_ids,
        joint_ids,
        pressure: params.p_init,
        p_min: params.p_min,
        p_max: params.p_max,
        shape_damping: params.shape_damping,
        spawn_center: center,
    })
}

/// Pressure force for every mass of a closed counter-clockwise ring.
///
/// Edge `i` carries `p * l_i` along its outward normal, split evenly between
/// its two masses. Since `l_i * n_i` is the edge vector rotated clockwise,
/// no normalization is needed and a zero-length edge contributes nothing.
pub fn pressure_forces(points: &[Vec2], pressure: f64) -> PressureForces {
    let n = points.len();
    let mut forces = vec![Vec2::ZERO; n];
    let half_p = 0.5 * pressure;
    for i in 0..n {
        let j = (i + 1) % n;
        let edge = points[j] - points[i];
        let f = Vec2::new(edge.y, -edge.x) * half_p;
        forces[i] += f;
        forces[j] += f;
    }
    PressureForces(forces)
}

/// Damping forces on equal masses opposing their deviation from rigid motion.
/// The forces sum to zero and exert no net torque about the centroid.
pub fn shape_damping_forces(
    points: &[Vec2],
    velocities: &[Vec2],
    mass: f64,
    rate: f64,
) -> Vec<Vec2> {
    let n = points.len() as f64;
    let com = points.iter().fold(Vec2::ZERO, |a, &p| a + p) / n;
    let v_com = velocities.iter().fold(Vec2::ZERO, |a, &v| a + v) / n;
    let mut moment = 0.0;
    let mut inertia = 0.0;
    for (&p, &v) in points.iter().zip(velocities) {
        let r = p - com;
        moment += r.cross(v - v_com);
        inertia += r.length_squared();
    }
    let omega = if inertia > 0.0 { moment / inertia } else { 0.0 };
    points
        .iter()
        .zip(velocities)
        .map(|(&p, &v)| {
            let rigid = v_com + (p - com).perp() * omega;
            (v - rigid) * (-rate * mass)
        })
        .collect()
}

/// Absolute shoelace area of the polygon through `points`.
pub fn polygon_area(points: &[Vec2]) -> f64 {
    let n = points.len();
    let twice: f64 = (0..n).map(|i| points[i].cross(points[(i + 1) % n])).sum();
    0.5 * twice.abs()
}

impl PsaMorphology {
    pub fn positions(&self, world: &World) -> Vec<Vec2> {
        self.mass_ids
            .iter()
            .map(|&id| world.body(id).position)
            .collect()
    }

    /// Compute and apply the pressure forces to the mass centers.
    pub fn apply_pressure_forces(&self, world: &mut World) -> PressureForces {
        let forces = pressure_forces(&self.positions(world), self.pressure);
        for (&id, &f) in self.mass_ids.iter().zip(&forces.0) {
            world.apply_force(id, f);
        }
        forces
    }

    /// Apply `-c m u_i` to every mass, where `u_i` is its velocity minus the
    /// best-fit rigid motion (mean velocity plus rotation about the center of
    /// mass).
    pub fn apply_shape_damping(&self, world: &mut World) {
        if self.shape_damping <= 0.0 {
            return;
        }
        let forces = shape_damping_forces(
            &self.positions(world),
            &self.velocities(world),
            world.body(self.mass_ids[0]).mass,
            self.shape_damping,
        );
        for (&id, f) in self.mass_ids.iter().zip(forces) {
            world.apply_force(id, f);
        }
    }

    pub fn velocities(&self, world: &World) -> Vec<Vec2> {
        self.mass_ids
            .iter()
            .map(|&id| world.body(id).velocity)
            .collect()
    }

    /// Add `delta` to the pressure and clip the result to `[p_min, p_max]`.
    pub fn update_pressure(&mut self, delta: f64) -> f64 {
        self.pressure = (self.pressure + delta).clamp(self.p_min, self.p_max);
        self.pressure
    }

    pub fn envelope_area(&self, world: &World) -> f64 {
        polygon_area(&self.positions(world))
    }

    /// Area relative to the construction circle.
    pub fn area_ratio(&self, world: &World) -> f64 {
        self.envelope_area(world) / (PI * self.radius * self.radius)
    }

    /// All masses are equal, so this is the mean of the centers.
    pub fn center_of_mass(&self, world: &World) -> Vec2 {
        let sum = self
            .mass_ids
            .iter()
            .fold(Vec2::ZERO, |acc, &id| acc + world.body(id).position);
        sum / self.n_mass as f64
    }

    pub fn center_of_mass_velocity(&self, world: &World) -> Vec2 {
        let sum = self
            .mass_ids
            .iter()
            .fold(Vec2::ZERO, |acc, &id| acc + world.body(id).velocity);
        sum / self.n_mass as f64
    }

    /// Set joint `i`'s rest length from `lengths[i]`; extra entries are ignored.
    pub fn set_rest_lengths(&self, world: &mut World, lengths: impl IntoIterator<Item = f64>) {
        for (&id, len) in self.joint_ids.iter().zip(lengths) {
            world.joint_mut(id).set_rest_length(len);
        }
    }

    pub fn base_lengths<'w>(&self, world: &'w World) -> impl Iterator<Item = f64> + 'w {
        let ids = self.joint_ids.clone();
        ids.into_iter().map(move |id| world.joint(id).base_length)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn world() -> World {
        World::new(Vec2::ZERO, 1.0 / 60.0)
    }

    #[test]
    fn square_ring_layout() {
        let mut w = world();
        let psa = build_psa(&RingParams::new(4, 1.0), Vec2::ZERO, &mut w).unwrap();
        let expected = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0)];
        for (p, (x, y)) in psa.positions(&w).iter().zip(expected) {
            assert!((p.x - x).abs() < 1e-15 && (p.y - y).abs() < 1e-15);
        }
        assert!((w.joint(psa.joint_ids[0]).base_length - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(w.joint(psa.joint_ids[3]).body_b, psa.mass_ids[0]);
    }

    #[test]
    fn large_ring_counts_and_chord() {
        let mut w = world();
        let psa = build_psa(&RingParams::new(20, 10.0), Vec2::ZERO, &mut w).unwrap();
        assert_eq!(psa.mass_ids.len(), 20);
        assert_eq!(psa.joint_ids.len(), 20);
        // Chord oracle: distance between the first two placed masses.
        let p = psa.positions(&w);
        let chord = (p[1] - p[0]).length();
        let base = w.joint(psa.joint_ids[0]).base_length;
        assert!((base - chord).abs() < 1e-12);
        assert!((base - 3.1287).abs() < 1e-4);
        let j = w.joint(psa.joint_ids[0]);
        assert!((j.min_length - 0.75 * base).abs() < 1e-15);
        assert!((j.max_length - 1.25 * base).abs() < 1e-15);
    }

    #[test]
    fn unit_square_mass() {
        let mut w = world();
        let mut params = RingParams::new(5, 3.0);
        params.density = 2500.0;
        let psa = build_psa(&params, Vec2::ZERO, &mut w).unwrap();
        assert_eq!(w.body(psa.mass_ids[0]).mass, 2500.0);
        assert_eq!(w.body(psa.mass_ids[0]).half_side, 0.5);
    }

    #[test]
    fn degenerate_ring_rejected() {
        let mut w = world();
        assert_eq!(
            build_psa(&RingParams::new(2, 1.0), Vec2::ZERO, &mut w),
            Err(MorphologyError::TooFewMasses(2))
        );
        assert!(build_psa(&RingParams::new(5, 0.0), Vec2::ZERO, &mut w).is_err());
    }

    #[test]
    fn zero_pressure_gives_zero_forces() {
        let pts = [
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
        ];
        assert!(pressure_forces(&pts, 0.0)
            .0
            .iter()
            .all(|f| *f == Vec2::ZERO));
    }

    #[test]
    fn regular_polygon_forces_are_radial() {
        for n in [3usize, 4, 7, 10, 20] {
            let mut w = world();
            let psa = build_psa(&RingParams::new(n, 2.0), Vec2::new(1.0, -3.0), &mut w).unwrap();
            let p = 7.0;
            let pts = psa.positions(&w);
            let forces = pressure_forces(&pts, p);
            let l = w.joint(psa.joint_ids[0]).base_length;
            // Oracle: sum of the two adjacent unit edge normals, each scaled by p*l/2.
            for (j, f) in forces.0.iter().enumerate() {
                let prev = pts[(j + n - 1) % n];
                let next = pts[(j + 1) % n];
                let n_prev = (pts[j] - prev).try_normalize().unwrap();
                let n_next = (next - pts[j]).try_normalize().unwrap();
                let outward = Vec2::new(n_prev.y, -n_prev.x) + Vec2::new(n_next.y, -n_next.x);
                let expected = outward * (0.5 * p * l);
                assert!((*f - expected).length() < 1e-9);
                let magnitude = p * l * (PI / n as f64).cos();
                assert!((f.length() - magnitude).abs() < 1e-9);
                let radial = (pts[j] - psa.spawn_center).try_normalize().unwrap();
                assert!(f.try_normalize().unwrap().dot(radial) > 1.0 - 1e-12);
            }
        }
    }

    #[test]
    fn degenerate_edge_contributes_nothing() {
        let pts = [
            Vec2::ZERO,
            Vec2::ZERO,
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
        ];
        let f = pressure_forces(&pts, 3.0);
        assert!(f.total().length() < 1e-12);
    }

    #[test]
    fn pressure_update_clamps() {
        let mut w = world();
        let mut params = RingParams::new(5, 1.0);
        params.p_min = 20.0;
        params.p_max = 100.0;
        params.p_init = 100.0;
        let mut psa = build_psa(&params, Vec2::ZERO, &mut w).unwrap();
        assert_eq!(psa.update_pressure(10.0), 100.0);
        psa.pressure = 50.0;
        assert_eq!(psa.update_pressure(0.0), 50.0);
        psa.pressure = 30.0;
        assert_eq!(psa.update_pressure(-20.0), 20.0);
    }

    #[test]
    fn shape_damping_ignores_rigid_motion() {
        let mut w = world();
        let psa = build_psa(&RingParams::new(8, 2.0), Vec2::new(3.0, 1.0), &mut w).unwrap();
        let pts = psa.positions(&w);
        let omega = 0.7;
        let v: Vec<Vec2> = pts
            .iter()
            .map(|&p| Vec2::new(1.5, -2.0) + (p - psa.spawn_center).perp() * omega)
            .collect();
        for f in shape_damping_forces(&pts, &v, 2.0, 12.0) {
            assert!(f.length() < 1e-12);
        }
    }

    #[test]
    fn shape_damping_opposes_expansion() {
        let mut w = world();
        let psa = build_psa(&RingParams::new(6, 1.0), Vec2::ZERO, &mut w).unwrap();
        let pts = psa.positions(&w);
        // Uniform radial expansion at unit rate: purely a deformation.
        let f = shape_damping_forces(&pts, &pts, 2.0, 12.0);
        let mut total = Vec2::ZERO;
        let mut torque = 0.0;
        for (p, f) in pts.iter().zip(&f) {
            assert!((*f + *p * 24.0).length() < 1e-12);
            total += *f;
            torque += p.cross(*f);
        }
        assert!(total.length() < 1e-12 && torque.abs() < 1e-12);
    }

    #[test]
    fn areas() {
        let diamond = [
            Vec2::new(1.0, 0.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(-1.0, 0.0),
            Vec2::new(0.0, -1.0),
        ];
        assert_eq!(polygon_area(&diamond), 2.0);

        let mut w = world();
        let psa = build_psa(&RingParams::new(20, 10.0), Vec2::ZERO, &mut w).unwrap();
        let closed_form = 0.5 * 20.0 * 100.0 * (2.0 * PI / 20.0).sin();
        let area = psa.envelope_area(&w);
        assert!((area - closed_form).abs() / closed_form < 1e-9);
        assert!((area - 309.017).abs() < 1e-3);
        assert!((psa.area_ratio(&w) - 0.9836).abs() < 1e-4);
    }

    #[test]
    fn center_of_mass_is_mean() {
        let mut w = world();
        let psa = build_psa(&RingParams::new(12, 3.0), Vec2::ZERO, &mut w).unwrap();
        assert!(psa.center_of_mass(&w).length() < 1e-12);

        let mut w = world();
        let psa = build_psa(&RingParams::new(12, 3.0), Vec2::new(5.0, 3.0), &mut w).unwrap();
        assert!((psa.center_of_mass(&w) - Vec2::new(5.0, 3.0)).length() < 1e-12);

        let mut w = world();
        let psa = build_psa(&RingParams::new(3, 1.0), Vec2::ZERO, &mut w).unwrap();
        for (id, p) in psa
            .mass_ids
            .iter()
            .zip([(0.0, 0.0), (3.0, 0.0), (0.0, 3.0)])
        {
            w.body_mut(*id).position = Vec2::new(p.0, p.1);
        }
        assert!((psa.center_of_mass(&w) - Vec2::new(1.0, 1.0)).length() < 1e-15);
    }
}
