//! Fixed-timestep 2D physics for translational square masses joined by soft
//! distance joints, colliding with static segment geometry.
//!
//! Per step: accumulated external forces and spring forces are integrated
//! into velocities (semi-implicit Euler), contacts and joint limits are solved
//! with sequential impulses, positions are integrated, then joint limits and
//! penetration are corrected positionally. Bodies never rotate and never
//! collide with each other.

mod geometry;
mod vec2;
mod world;

pub use geometry::{box_segment, Segment, Separation, StaticGeometry};
pub use vec2::Vec2;
pub use world::{spring_force, BodyId, JointId, MassBody, SpringJoint, World};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum PhysicsError {
    #[error("non-finite state in body {body} at step {step}")]
    NonFinite { step: u64, body: usize },
    #[error("invalid world snapshot: {0}")]
    Snapshot(String),
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(distance: f64) -> (World, JointId) {
        let mut world = World::new(Vec2::ZERO, 1.0 / 60.0);
        let a = world.add_body(MassBody::new(Vec2::ZERO, 1.0, 2500.0));
        let b = world.add_body(MassBody::new(Vec2::new(distance, 0.0), 1.0, 2500.0));
        let j = world.add_joint(SpringJoint {
            body_a: a,
            body_b: b,
            base_length: 1.0,
            rest_length: 1.0,
            frequency: 8.0,
            damping_ratio: 0.3,
            min_length: 0.75,
            max_length: 1.25,
        });
        (world, j)
    }

    #[test]
    fn equilibrium_has_no_spring_force() {
        let (world, j) = pair(1.0);
        let joint = world.joint(j);
        let f = spring_force(joint, &world.bodies()[0], &world.bodies()[1]).unwrap();
        assert_eq!(f, Vec2::ZERO);
    }

    #[test]
    fn stiffness_from_frequency() {
        let (world, j) = pair(1.0);
        let (k, c) = world.joint(j).coefficients(2500.0, 2500.0);
        let omega = 16.0 * std::f64::consts::PI;
        assert!((k - 1250.0 * omega * omega).abs() < 1e-6);
        assert!((k - 3.158e6).abs() / 3.158e6 < 1e-3);
        assert!((c - 3.770e4).abs() / 3.770e4 < 1e-3);
    }

    #[test]
    fn stretched_spring_attracts() {
        let (world, j) = pair(1.01);
        let f = spring_force(world.joint(j), &world.bodies()[0], &world.bodies()[1]).unwrap();
        assert!(f.x > 0.0 && f.y == 0.0);
        assert!((f.x - 3.158e4).abs() / 3.158e4 < 1e-3);
    }

    #[test]
    fn coincident_bodies_give_no_force() {
        let (mut world, j) = pair(0.0);
        assert!(spring_force(world.joint(j), &world.bodies()[0], &world.bodies()[1]).is_none());
        world.step().unwrap();
        assert_eq!(world.degenerate_joint_events, 1);
    }

    #[test]
    fn unforced_world_is_static() {
        let (mut world, _) = pair(1.0);
        let before = world.clone();
        for _ in 0..10 {
            world.step().unwrap();
        }
        assert_eq!(world.bodies(), before.bodies());
        assert_eq!(world.step_counter, 10);
    }

    #[test]
    fn free_body_does_not_touch() {
        let mut world = World::default();
        let id = world.add_body(MassBody::new(Vec2::new(0.0, 100.0), 1.0, 1.0));
        world.add_static(StaticGeometry::polyline(
            &[Vec2::new(-50.0, 0.0), Vec2::new(50.0, 0.0)],
            0.2,
        ));
        world.step().unwrap();
        assert!(!world.body(id).touching);
    }

    #[test]
    fn nan_force_aborts() {
        let mut world = World::default();
        let id = world.add_body(MassBody::new(Vec2::ZERO, 1.0, 1.0));
        world.apply_force(id, Vec2::new(f64::NAN, 0.0));
        assert_eq!(
            world.step(),
            Err(PhysicsError::NonFinite { step: 1, body: 0 })
        );
    }
}
