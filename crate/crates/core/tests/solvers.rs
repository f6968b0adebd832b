use bivo::bounded::align_bounded;
use bivo::dataset::synthetic::{
    intrinsics_for_width, render_synthetic_pair, ScenePreset, SyntheticScene, Wave,
};
use bivo::dataset::FramePair;
use bivo::geometry::MotionTwist;
use bivo::residual::{NormalTerms, ObjectiveTerms};
use bivo::solver::SolverSettings;
use bivo::weighted::{align_weighted, gauss_newton_step};
use nalgebra::{Matrix6, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_spd(rng: &mut ChaCha8Rng) -> Matrix6<f64> {
    let a = Matrix6::from_fn(|_, _| rng.random_range(-1.0..1.0));
    a * a.transpose() + Matrix6::identity() * rng.random_range(1e-3..1.0)
}

fn random_terms(rng: &mut ChaCha8Rng) -> NormalTerms<f64> {
    let mut side = || ObjectiveTerms {
        a: rng.random_range(0.0..1.0),
        b: Vector6::from_fn(|_, _| rng.random_range(-1.0..1.0)),
        h: random_spd(rng),
    };
    NormalTerms {
        intensity: side(),
        depth: side(),
    }
}

#[test]
fn gauss_newton_step_solves_the_normal_equations() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..1000 {
        let t = random_terms(&mut rng);
        let lambda = rng.random_range(0.0..10.0);
        let step = gauss_newton_step(&t, lambda).unwrap();
        let residual = (t.intensity.h + t.depth.h * lambda) * step + (t.intensity.b + t.depth.b * lambda);
        assert!(residual.norm() < 1e-8, "residual {:e}", residual.norm());
    }
}

#[test]
fn step_is_invariant_to_common_weight_scaling() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let t = random_terms(&mut rng);
        let c = rng.random_range(0.1..10.0);
        let mut scaled = t;
        for side in [&mut scaled.intensity, &mut scaled.depth] {
            side.a *= c;
            side.b *= c;
            side.h *= c;
        }
        let lambda = rng.random_range(0.0..5.0);
        let a = gauss_newton_step(&t, lambda).unwrap();
        let b = gauss_newton_step(&scaled, lambda).unwrap();
        assert!((a - b).norm() < 1e-10 * (1.0 + a.norm()));
    }
}

fn pair(preset: ScenePreset, seed: u64, xi: &MotionTwist<f64>) -> FramePair<f64> {
    let scene = SyntheticScene::preset(preset, &mut ChaCha8Rng::seed_from_u64(seed));
    render_synthetic_pair(&scene, xi, &intrinsics_for_width(160, 120), 160, 120)
        .unwrap()
        .0
}

fn error(a: &MotionTwist<f64>, b: &MotionTwist<f64>) -> (f64, f64) {
    ((a.nu - b.nu).norm(), (a.psi - b.psi).norm())
}

#[test]
fn self_alignment_with_every_method() {
    let p = pair(ScenePreset::Rich, 1, &MotionTwist::zero());
    let settings = SolverSettings::default();
    let n = p.first.depth.valid_count() as f64;
    let results = [
        align_weighted(&p, &MotionTwist::zero(), 0.0, &settings).unwrap(),
        align_weighted(&p, &MotionTwist::zero(), 2.5, &settings).unwrap(),
        align_bounded(&p, &MotionTwist::zero(), 1e-3 * n, &settings).unwrap(),
    ];
    for r in results {
        assert!(r.xi.norm() < 1e-6);
        assert!(r.final_f_i < 1e-10);
        assert!(r.converged);
    }
}

#[test]
fn weighted_recovers_small_motion() {
    let xi = MotionTwist::new(
        Vector3::new(0.01, 0.0, 0.0),
        Vector3::new(0.0, 0.5f64.to_radians(), 0.0),
    );
    let p = pair(ScenePreset::Rich, 2, &xi);
    let r = align_weighted(&p, &MotionTwist::zero(), 1.0, &SolverSettings::default()).unwrap();
    let (et, er) = error(&r.xi, &xi);
    assert!(et < 1e-3 && er < 1e-3, "errors {et:e} m, {er:e} rad");
    assert!(r.converged);
}

#[test]
fn huge_bound_tracks_intensity_only() {
    let xi = MotionTwist::new(
        Vector3::new(0.008, -0.004, 0.006),
        Vector3::new(0.003, 0.0, -0.002),
    );
    let p = pair(ScenePreset::Rich, 4, &xi);
    let settings = SolverSettings::default();
    let n = p.first.depth.valid_count() as f64;
    let single = align_weighted(&p, &MotionTwist::zero(), 0.0, &settings).unwrap();
    let bounded = align_bounded(&p, &MotionTwist::zero(), 1e12 * n, &settings).unwrap();
    assert!((single.xi.to_vector() - bounded.xi.to_vector()).norm() < 1e-6);
    assert_eq!(bounded.relaxations, 0);
}

/// Constant intensity over a depth step, so only structure constrains motion.
fn textureless_step_scene() -> SyntheticScene {
    let mut scene = SyntheticScene::preset(ScenePreset::Textureless, &mut ChaCha8Rng::seed_from_u64(6));
    scene.texture.clear();
    scene.relief.push(Wave {
        amplitude: 0.02,
        kx: 0.0,
        ky: 9.0,
        phase: 0.3,
    });
    scene
}

#[test]
fn bounded_beats_intensity_only_without_texture() {
    let xi = MotionTwist::new(Vector3::new(0.01, 0.005, -0.01), Vector3::new(0.0, 0.004, 0.002));
    let p = render_synthetic_pair(
        &textureless_step_scene(),
        &xi,
        &intrinsics_for_width(160, 120),
        160,
        120,
    )
    .unwrap()
    .0;
    let settings = SolverSettings::default();
    let n = p.first.depth.valid_count() as f64;
    let single = align_weighted(&p, &MotionTwist::zero(), 0.0, &settings).unwrap();
    let bounded = align_bounded(&p, &MotionTwist::zero(), 1e-3 * n, &settings).unwrap();
    let e_single = (single.xi.to_vector() - xi.to_vector()).norm();
    let e_bounded = (bounded.xi.to_vector() - xi.to_vector()).norm();
    assert!(
        e_bounded < e_single,
        "bounded {e_bounded:e} vs single {e_single:e}"
    );
    assert!(e_bounded < 1e-3);
}

#[test]
fn iteration_cap_is_reported() {
    let xi = MotionTwist::new(Vector3::new(0.015, 0.0, 0.0), Vector3::zeros());
    let p = pair(ScenePreset::Rich, 5, &xi);
    let settings = SolverSettings {
        max_iterations: 1,
        ..SolverSettings::default()
    };
    let r = align_weighted(&p, &MotionTwist::zero(), 1.0, &settings).unwrap();
    assert!(!r.converged);
    assert_eq!(r.iterations, vec![1, 1, 1]);
}

#[test]
fn invalid_arguments_are_rejected() {
    let p = pair(ScenePreset::Rich, 1, &MotionTwist::zero());
    let s = SolverSettings::default();
    assert!(align_weighted(&p, &MotionTwist::zero(), -1.0, &s).is_err());
    assert!(align_bounded(&p, &MotionTwist::zero(), 0.0, &s).is_err());
    let bad = SolverSettings {
        pyramid_levels: 0,
        ..s
    };
    assert!(align_weighted(&p, &MotionTwist::zero(), 1.0, &bad).is_err());
}
