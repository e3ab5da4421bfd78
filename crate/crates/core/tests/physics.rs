//! Closed-form oracles for the physics engine.

use psa_core::control::Genome;
use psa_core::physics2d::{MassBody, SpringJoint, StaticGeometry, Vec2, World};
use psa_core::tasks::{run_episode_with, EpisodeConfig, MorphologyKind, Task};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const DT: f64 = 1.0 / 60.0;

/// Oscillation frequency of an undamped two-mass spring released from a
/// stretch, estimated from upward zero crossings of the length error.
fn two_mass_frequency(frequency: f64, seconds: f64) -> f64 {
    let mut world = World::new(Vec2::ZERO, DT);
    let a = world.add_body(MassBody::new(Vec2::ZERO, 1.0, 2.0));
    let b = world.add_body(MassBody::new(Vec2::new(1.05, 0.0), 1.0, 2.0));
    let j = world.add_joint(SpringJoint {
        body_a: a,
        body_b: b,
        base_length: 1.0,
        rest_length: 1.0,
        frequency,
        damping_ratio: 0.0,
        min_length: 0.5,
        max_length: 1.5,
    });
    let steps = (seconds / DT) as usize;
    let mut crossings = Vec::new();
    let mut prev = world.joint_length(j) - 1.0;
    for step in 1..=steps {
        world.step().unwrap();
        let e = world.joint_length(j) - 1.0;
        if prev < 0.0 && e >= 0.0 {
            let frac = -prev / (e - prev);
            crossings.push((step as f64 - 1.0 + frac) * DT);
        }
        prev = e;
    }
    let periods = crossings.len() - 1;
    periods as f64 / (crossings[periods] - crossings[0])
}

#[test]
fn two_mass_oscillator_frequency() {
    let f = two_mass_frequency(8.0, 10.0);
    assert!((f - 8.0).abs() <= 0.05 * 8.0, "measured {f} Hz");
}

#[test]
fn soft_spring_frequency_converges() {
    // Far below the step rate the integrator is nearly exact.
    let f = two_mass_frequency(1.0, 20.0);
    assert!((f - 1.0).abs() < 0.01, "measured {f} Hz");
}

/// Mean deceleration of a box sliding on flat ground with friction `mu`.
fn slide_deceleration(mu: f64, v0: f64, seconds: f64) -> f64 {
    let mut world = World::new(Vec2::new(0.0, -9.81), DT);
    world.add_static(StaticGeometry::polyline(
        &[Vec2::new(-100.0, 0.0), Vec2::new(100.0, 0.0)],
        mu,
    ));
    let id = world.add_body(MassBody::new(Vec2::new(0.0, 0.5), 1.0, 2.0));
    // Settle onto the ground before launching.
    for _ in 0..30 {
        world.step().unwrap();
    }
    world.body_mut(id).velocity = Vec2::new(v0, 0.0);
    let steps = (seconds / DT) as usize;
    for _ in 0..steps {
        world.step().unwrap();
    }
    let v1 = world.body(id).velocity.x;
    assert!(v1 > 0.0, "box stopped before the measurement window ended");
    (v0 - v1) / (steps as f64 * DT)
}

#[test]
fn coulomb_slide_deceleration() {
    for mu in [0.2, 0.5, 1.0] {
        let a = slide_deceleration(mu, 8.0, 0.5);
        let expected = mu * 9.81;
        assert!(
            (a - expected).abs() <= 0.1 * expected,
            "mu={mu}: {a} vs {expected}"
        );
    }
}

#[test]
fn sliding_box_stops_and_stays() {
    let mut world = World::new(Vec2::new(0.0, -9.81), DT);
    world.add_static(StaticGeometry::polyline(
        &[Vec2::new(-100.0, 0.0), Vec2::new(100.0, 0.0)],
        0.5,
    ));
    let id = world.add_body(MassBody::new(Vec2::new(0.0, 0.5), 1.0, 2.0));
    world.body_mut(id).velocity = Vec2::new(3.0, 0.0);
    for _ in 0..120 {
        world.step().unwrap();
    }
    // v0^2 / (2 mu g) ~ 0.92 m.
    let x = world.body(id).position.x;
    assert!((x - 0.917).abs() < 0.1, "stopped at {x}");
    assert!(world.body(id).velocity.length() < 1e-9);
}

#[test]
fn free_fall_matches_discrete_sum() {
    let g = -9.81;
    let (y0, vx, vy0) = (100.0, 1.5, 4.0);
    let mut world = World::new(Vec2::new(0.0, g), DT);
    let id = world.add_body(MassBody::new(Vec2::new(0.0, y0), 1.0, 2.0));
    world.body_mut(id).velocity = Vec2::new(vx, vy0);
    for n in 1..=240u32 {
        world.step().unwrap();
        let n = f64::from(n);
        let y = y0 + n * vy0 * DT + g * DT * DT * n * (n + 1.0) / 2.0;
        let body = world.body(id);
        assert!((body.position.y - y).abs() <= 1e-9, "step {n}");
        assert!((body.position.x - n * vx * DT).abs() <= 1e-9, "step {n}");
        assert!(
            (body.velocity.y - (vy0 + n * g * DT)).abs() <= 1e-9,
            "step {n}"
        );
    }
}

fn assert_limits(world: &World, tol: f64, context: &str) {
    for j in world.joints() {
        let l =
            (world.bodies()[j.body_b.0].position - world.bodies()[j.body_a.0].position).length();
        assert!(
            l >= j.min_length - tol && l <= j.max_length + tol,
            "{context}: length {l} outside [{}, {}]",
            j.min_length,
            j.max_length
        );
    }
}

#[test]
fn joint_limits_hold_under_violent_pull() {
    let mut world = World::new(Vec2::ZERO, DT);
    let a = world.add_body(MassBody::new(Vec2::ZERO, 1.0, 2.0));
    let b = world.add_body(MassBody::new(Vec2::new(1.0, 0.0), 1.0, 2.0));
    world.add_joint(SpringJoint {
        body_a: a,
        body_b: b,
        base_length: 1.0,
        rest_length: 1.0,
        frequency: 8.0,
        damping_ratio: 0.3,
        min_length: 0.75,
        max_length: 1.25,
    });
    for step in 0..300 {
        let f = if (step / 30) % 2 == 0 {
            5_000.0
        } else {
            -5_000.0
        };
        world.apply_force(a, Vec2::new(-f, 0.0));
        world.apply_force(b, Vec2::new(f, 0.0));
        world.step().unwrap();
        assert_limits(&world, 1e-3, &format!("step {step}"));
    }
}

#[test]
fn joint_limits_hold_in_random_episodes() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (task, kind, pressure) in [
        (Task::Locomotion, MorphologyKind::Small, true),
        (Task::Escape, MorphologyKind::Small, true),
        (Task::Locomotion, MorphologyKind::Large, false),
    ] {
        let config = EpisodeConfig::new(task, kind, pressure);
        let theta = (0..config.genome_size())
            .map(|_| rng.random_range(-3.0..3.0))
            .collect();
        let genome = Genome::new(kind.n_mass(), pressure, theta).unwrap();
        run_episode_with(&config, &genome, 5, |episode| {
            assert_limits(&episode.world, 1e-3, &format!("{task} {kind}"));
        })
        .unwrap();
    }
}
