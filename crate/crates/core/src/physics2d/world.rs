use serde::{Deserialize, Serialize};

use super::geometry::{box_segment, StaticGeometry};
use super::{PhysicsError, Vec2};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BodyId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct JointId(pub usize);

/// Dynamic square with permanently fixed (zero) rotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MassBody {
    pub position: Vec2,
    pub velocity: Vec2,
    pub half_side: f64,
    pub mass: f64,
    inv_mass: f64,
    /// Force accumulated for the next step; cleared by [`World::step`].
    pub force: Vec2,
    /// Whether the body had at least one contact during the last step.
    pub touching: bool,
}

impl MassBody {
    pub fn new(position: Vec2, side: f64, density: f64) -> Self {
        let mass = side * side * density;
        Self {
            position,
            velocity: Vec2::ZERO,
            half_side: 0.5 * side,
            mass,
            inv_mass: 1.0 / mass,
            force: Vec2::ZERO,
            touching: false,
        }
    }

    pub fn inv_mass(&self) -> f64 {
        self.inv_mass
    }
}

/// Soft distance joint parameterized by natural frequency and damping ratio,
/// with hard minimum and maximum lengths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpringJoint {
    pub body_a: BodyId,
    pub body_b: BodyId,
    pub base_length: f64,
    pub rest_length: f64,
    pub frequency: f64,
    pub damping_ratio: f64,
    pub min_length: f64,
    pub max_length: f64,
}

impl SpringJoint {
    /// Stiffness and damping coefficients for the given body masses:
    /// `k = m_eff (2 pi f)^2`, `c = 2 m_eff d (2 pi f)`.
    pub fn coefficients(&self, mass_a: f64, mass_b: f64) -> (f64, f64) {
        let m_eff = mass_a * mass_b / (mass_a + mass_b);
        let omega = 2.0 * std::f64::consts::PI * self.frequency;
        (
            m_eff * omega * omega,
            2.0 * m_eff * self.damping_ratio * omega,
        )
    }

    /// Sets the rest length, clamped to the hard limits.
    pub fn set_rest_length(&mut self, length: f64) {
        self.rest_length = length.clamp(self.min_length, self.max_length);
    }
}

/// Spring-damper force acting on `a` (the force on `b` is its negation).
/// Returns `None` when the bodies coincide.
pub fn spring_force(joint: &SpringJoint, a: &MassBody, b: &MassBody) -> Option<Vec2> {
    let delta = b.position - a.position;
    let length = delta.length();
    if length <= 0.0 {
        return None;
    }
    let u = delta / length;
    let (k, c) = joint.coefficients(a.mass, b.mass);
    let stretch_rate = (b.velocity - a.velocity).dot(u);
    Some(u * (k * (length - joint.rest_length) + c * stretch_rate))
}

#[derive(Debug, Clone, Copy)]
struct Contact {
    body: usize,
    geometry: usize,
    segment: usize,
    normal: Vec2,
    distance: f64,
    friction: f64,
    normal_impulse: f64,
    tangent_impulse: f64,
}

#[derive(Debug, Clone, Copy, Default)]
struct LimitState {
    axis: Vec2,
    length: f64,
    eff_mass: f64,
    upper_impulse: f64,
    lower_impulse: f64,
}

/// Deterministic fixed-timestep world.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct World {
    pub gravity: Vec2,
    pub dt: f64,
    pub velocity_iterations: usize,
    pub position_iterations: usize,
    /// Allowed resting penetration.
    pub contact_slop: f64,
    /// Contacts are created this far ahead of touching (plus travel this step).
    pub speculative_distance: f64,
    /// Largest positional correction applied per contact per iteration.
    pub max_correction: f64,
    /// Joint limit violation (m) accepted at the end of a step.
    pub limit_tolerance: f64,
    /// Cap on the extra limit passes spent reaching `limit_tolerance`.
    pub max_limit_passes: usize,
    pub step_counter: u64,
    /// Steps on which a joint's bodies coincided and its force was dropped.
    pub degenerate_joint_events: u64,
    bodies: Vec<MassBody>,
    joints: Vec<SpringJoint>,
    statics: Vec<StaticGeometry>,
    #[serde(skip)]
    contacts: Vec<Contact>,
    #[serde(skip)]
    limits: Vec<LimitState>,
}

impl Default for World {
    fn default() -> Self {
        Self::new(Vec2::new(0.0, -9.81), 1.0 / 60.0)
    }
}

impl PartialEq for World {
    fn eq(&self, other: &Self) -> bool {
        self.gravity == other.gravity
            && self.dt == other.dt
            && self.velocity_iterations == other.velocity_iterations
            && self.position_iterations == other.position_iterations
            && self.contact_slop == other.contact_slop
            && self.speculative_distance == other.speculative_distance
            && self.max_correction == other.max_correction
            && self.limit_tolerance == other.limit_tolerance
            && self.max_limit_passes == other.max_limit_passes
            && self.step_counter == other.step_counter
            && self.degenerate_joint_events == other.degenerate_joint_events
            && self.bodies == other.bodies
            && self.joints == other.joints
            && self.statics == other.statics
    }
}

impl World {
    pub fn new(gravity: Vec2, dt: f64) -> Self {
        Self {
            gravity,
            dt,
            velocity_iterations: 8,
            position_iterations: 3,
            contact_slop: 0.005,
            speculative_distance: 0.02,
            max_correction: 0.2,
            limit_tolerance: 1e-4,
            max_limit_passes: 64,
            step_counter: 0,
            degenerate_joint_events: 0,
            bodies: Vec::new(),
            joints: Vec::new(),
            statics: Vec::new(),
            contacts: Vec::new(),
            limits: Vec::new(),
        }
    }

    pub fn add_body(&mut self, body: MassBody) -> BodyId {
        self.bodies.push(body);
        BodyId(self.bodies.len() - 1)
    }

    pub fn add_joint(&mut self, joint: SpringJoint) -> JointId {
        debug_assert!(joint.body_a.0 < self.bodies.len() && joint.body_b.0 < self.bodies.len());
        self.joints.push(joint);
        JointId(self.joints.len() - 1)
    }

    pub fn add_static(&mut self, geometry: StaticGeometry) -> usize {
        self.statics.push(geometry);
        self.statics.len() - 1
    }

    pub fn bodies(&self) -> &[MassBody] {
        &self.bodies
    }

    pub fn body(&self, id: BodyId) -> &MassBody {
        &self.bodies[id.0]
    }

    pub fn body_mut(&mut self, id: BodyId) -> &mut MassBody {
        &mut self.bodies[id.0]
    }

    pub fn joints(&self) -> &[SpringJoint] {
        &self.joints
    }

    pub fn joint(&self, id: JointId) -> &SpringJoint {
        &self.joints[id.0]
    }

    pub fn joint_mut(&mut self, id: JointId) -> &mut SpringJoint {
        &mut self.joints[id.0]
    }

    pub fn statics(&self) -> &[StaticGeometry] {
        &self.statics
    }

    pub fn joint_length(&self, id: JointId) -> f64 {
        let j = &self.joints[id.0];
        (self.bodies[j.body_b.0].position - self.bodies[j.body_a.0].position).length()
    }

    pub fn apply_force(&mut self, id: BodyId, force: Vec2) {
        self.bodies[id.0].force += force;
    }

    /// Advance one `dt`: spring forces, velocity integration, contact and
    /// limit velocity solve, position integration, position correction.
    pub fn step(&mut self) -> Result<(), PhysicsError> {
        self.accumulate_spring_forces();

        let dt = self.dt;
        let gravity = self.gravity;
        for b in &mut self.bodies {
            b.velocity += (b.force * b.inv_mass + gravity) * dt;
        }

        self.find_contacts();
        self.prepare_limits();
        for _ in 0..self.velocity_iterations {
            self.solve_limit_velocities();
            self.solve_contact_velocities();
        }

        for b in &mut self.bodies {
            b.position += b.velocity * dt;
        }

        for _ in 0..self.position_iterations {
            self.solve_limit_positions();
            self.solve_contact_positions();
        }
        // A long chain of stretched joints needs more passes than the
        // contacts do; contacts stay in the loop so limits cannot push
        // masses into geometry.
        for _ in 0..self.max_limit_passes {
            let worst = self.solve_limit_positions();
            self.solve_contact_positions();
            if worst <= self.limit_tolerance {
                break;
            }
        }

        self.update_touching();
        for b in &mut self.bodies {
            b.force = Vec2::ZERO;
        }
        self.step_counter += 1;

        match self
            .bodies
            .iter()
            .position(|b| !b.position.is_finite() || !b.velocity.is_finite())
        {
            Some(body) => Err(PhysicsError::NonFinite {
                step: self.step_counter,
                body,
            }),
            None => Ok(()),
        }
    }

    fn accumulate_spring_forces(&mut self) {
        for j in &self.joints {
            let (ia, ib) = (j.body_a.0, j.body_b.0);
            match spring_force(j, &self.bodies[ia], &self.bodies[ib]) {
                Some(f) => {
                    self.bodies[ia].force += f;
                    self.bodies[ib].force -= f;
                }
                None => {
                    self.degenerate_joint_events += 1;
                    tracing::debug!(
                        step = self.step_counter,
                        "coincident joint bodies; spring force dropped"
                    );
                }
            }
        }
    }

    fn find_contacts(&mut self) {
        self.contacts.clear();
        for (bi, body) in self.bodies.iter().enumerate() {
            let reach = self.speculative_distance + body.velocity.length() * self.dt;
            let h = body.half_side + reach;
            let (x0, x1) = (body.position.x - h, body.position.x + h);
            let (y0, y1) = (body.position.y - h, body.position.y + h);
            for (gi, geo) in self.statics.iter().enumerate() {
                for si in geo.candidates(x0, x1) {
                    let seg = &geo.segments()[si];
                    if seg.max().x < x0 || seg.min().y > y1 || seg.max().y < y0 {
                        continue;
                    }
                    let sep = box_segment(body.position, body.half_side, seg);
                    if sep.distance < reach {
                        self.contacts.push(Contact {
                            body: bi,
                            geometry: gi,
                            segment: si,
                            normal: sep.normal,
                            distance: sep.distance,
                            friction: geo.friction,
                            normal_impulse: 0.0,
                            tangent_impulse: 0.0,
                        });
                    }
                }
            }
        }
    }

    fn solve_contact_velocities(&mut self) {
        let inv_dt = 1.0 / self.dt;
        for c in &mut self.contacts {
            let body = &mut self.bodies[c.body];
            let m = body.mass;

            // Non-penetration; a separated contact may close its gap this step.
            let vn = body.velocity.dot(c.normal);
            let min_vn = -c.distance.max(0.0) * inv_dt;
            let total = (c.normal_impulse + m * (min_vn - vn)).max(0.0);
            let applied = total - c.normal_impulse;
            c.normal_impulse = total;
            body.velocity += c.normal * (applied / m);

            let tangent = c.normal.perp();
            let vt = body.velocity.dot(tangent);
            let bound = c.friction * c.normal_impulse;
            let total = (c.tangent_impulse - m * vt).clamp(-bound, bound);
            let applied = total - c.tangent_impulse;
            c.tangent_impulse = total;
            body.velocity += tangent * (applied / m);
        }
    }

    fn solve_contact_positions(&mut self) {
        let slop = self.contact_slop;
        for c in &mut self.contacts {
            let body = &mut self.bodies[c.body];
            let seg = &self.statics[c.geometry].segments()[c.segment];
            let sep = box_segment(body.position, body.half_side, seg);
            c.distance = sep.distance;
            if sep.distance < -slop {
                let push = (-sep.distance - 0.5 * slop).min(self.max_correction);
                body.position += sep.normal * push;
                c.distance += push;
            }
        }
    }

    fn update_touching(&mut self) {
        for b in &mut self.bodies {
            b.touching = false;
        }
        for c in &self.contacts {
            if c.distance <= self.contact_slop {
                self.bodies[c.body].touching = true;
            }
        }
    }

    fn prepare_limits(&mut self) {
        self.limits.clear();
        for j in &self.joints {
            let a = &self.bodies[j.body_a.0];
            let b = &self.bodies[j.body_b.0];
            let delta = b.position - a.position;
            let length = delta.length();
            let axis = if length > 0.0 {
                delta / length
            } else {
                Vec2::X
            };
            self.limits.push(LimitState {
                axis,
                length,
                eff_mass: 1.0 / (a.inv_mass + b.inv_mass),
                upper_impulse: 0.0,
                lower_impulse: 0.0,
            });
        }
    }

    fn solve_limit_velocities(&mut self) {
        let inv_dt = 1.0 / self.dt;
        for (j, lim) in self.joints.iter().zip(self.limits.iter_mut()) {
            let (ia, ib) = (j.body_a.0, j.body_b.0);
            let (inv_a, inv_b) = (self.bodies[ia].inv_mass, self.bodies[ib].inv_mass);
            let u = lim.axis;

            // Upper: stretch rate may not exceed what closes the remaining slack.
            let rate = (self.bodies[ib].velocity - self.bodies[ia].velocity).dot(u);
            let max_rate = (j.max_length - lim.length).max(0.0) * inv_dt;
            let total = (lim.upper_impulse + lim.eff_mass * (rate - max_rate)).max(0.0);
            let applied = total - lim.upper_impulse;
            lim.upper_impulse = total;
            self.bodies[ia].velocity += u * (applied * inv_a);
            self.bodies[ib].velocity -= u * (applied * inv_b);

            // Lower: mirror image.
            let rate = (self.bodies[ib].velocity - self.bodies[ia].velocity).dot(u);
            let min_rate = -(lim.length - j.min_length).max(0.0) * inv_dt;
            let total = (lim.lower_impulse + lim.eff_mass * (min_rate - rate)).max(0.0);
            let applied = total - lim.lower_impulse;
            lim.lower_impulse = total;
            self.bodies[ia].velocity -= u * (applied * inv_a);
            self.bodies[ib].velocity += u * (applied * inv_b);
        }
    }

    /// One positional pass over the joint limits; returns the largest
    /// violation found before correction.
    fn solve_limit_positions(&mut self) -> f64 {
        let mut worst: f64 = 0.0;
        for j in &self.joints {
            let (ia, ib) = (j.body_a.0, j.body_b.0);
            let delta = self.bodies[ib].position - self.bodies[ia].position;
            let length = delta.length();
            if length <= 0.0 {
                continue;
            }
            let error = if length > j.max_length {
                length - j.max_length
            } else if length < j.min_length {
                length - j.min_length
            } else {
                continue;
            };
            worst = worst.max(error.abs());
            let (inv_a, inv_b) = (self.bodies[ia].inv_mass, self.bodies[ib].inv_mass);
            let corr = delta * (error / (length * (inv_a + inv_b)));
            self.bodies[ia].position += corr * inv_a;
            self.bodies[ib].position -= corr * inv_b;
        }
        worst
    }

    /// Serialize the full world state. Round-trips exactly.
    pub fn snapshot(&self) -> String {
        serde_json::to_string(self).expect("world state is always serializable")
    }

    pub fn from_snapshot(text: &str) -> Result<Self, PhysicsError> {
        serde_json::from_str(text).map_err(|e| PhysicsError::Snapshot(e.to_string()))
    }
}
