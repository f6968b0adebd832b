use bivo::dataset::synthetic::{
    generate_sequence, intrinsics_for_width, render_frame, render_synthetic_pair, ScenePreset, SequenceSpec,
    SyntheticCamera, SyntheticScene, Wave,
};
use bivo::dataset::Frame;
use bivo::geometry::{exp_twist, oplus, warp, MotionTwist, PixelCoord};
use bivo::imaging::Surface;
use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn photo_consistency_within_bilinear_bound() {
    let texture = vec![
        Wave {
            amplitude: 0.2,
            kx: 9.0,
            ky: 4.0,
            phase: 0.2,
        },
        Wave {
            amplitude: 0.15,
            kx: -3.0,
            ky: 11.0,
            phase: 1.0,
        },
    ];
    let scene = SyntheticScene {
        base_depth: 2.0,
        tilt: (0.0, 0.0),
        relief: vec![],
        ridges: vec![],
        texture: texture.clone(),
    };
    let k = intrinsics_for_width(160, 120);
    let xi = MotionTwist::from_translation(Vector3::new(0.02, -0.01, -0.05));
    let (pair, _) = render_synthetic_pair::<f64>(&scene, &xi, &k, 160, 120).unwrap();
    // The second image is an affine image of the texture, so
    // |f − bilinear(f)| ≤ (max|f_uu| + max|f_vv|)/8 with pixel-scale frequencies.
    let z2 = 2.0 + xi.nu.z;
    let bound: f64 = texture
        .iter()
        .map(|w| w.amplitude * ((w.kx * z2 / k.fx).powi(2) + (w.ky * z2 / k.fy).powi(2)) / 8.0)
        .sum();
    let mut checked = 0;
    for row in 0..120 {
        for col in 0..160 {
            let x = PixelCoord::new(col as f64, row as f64);
            let y = warp(&xi, &x, pair.first.depth.get(col, row).unwrap(), &k).unwrap();
            if let Some(i2) = pair.second.intensity.sample(&y) {
                let diff = (i2 - pair.first.intensity.get(col, row)).abs();
                assert!(diff <= bound * (1.0 + 1e-9) + 1e-12, "{diff:e} > {bound:e}");
                checked += 1;
            }
        }
    }
    assert!(checked > 10_000);
}

#[test]
fn composed_motions_agree_with_oplus() {
    let scene = SyntheticScene::preset(ScenePreset::Rich, &mut ChaCha8Rng::seed_from_u64(12));
    let k = intrinsics_for_width(80, 60);
    let xi_a = MotionTwist::new(Vector3::new(0.02, -0.01, 0.015), Vector3::new(0.01, 0.02, -0.005));
    let xi_b = MotionTwist::new(Vector3::new(-0.01, 0.02, 0.01), Vector3::new(-0.015, 0.005, 0.01));
    let camera = |pose| SyntheticCamera {
        world_to_camera: pose,
        intrinsics: k,
        width: 80,
        height: 60,
    };
    let chained = exp_twist(&xi_b).compose(&exp_twist(&xi_a));
    let direct = exp_twist(&oplus(&xi_a, &xi_b));
    let f1: Frame<f64> = render_frame(&scene, &camera(chained), 0.0).unwrap();
    let f2: Frame<f64> = render_frame(&scene, &camera(direct), 0.0).unwrap();
    for row in 0..60 {
        for col in 0..80 {
            match (f1.depth.get(col, row), f2.depth.get(col, row)) {
                (Some(a), Some(b)) => assert!((a - b).abs() < 1e-6),
                (None, None) => {}
                _ => panic!("validity differs at ({col}, {row})"),
            }
        }
    }
}

#[test]
fn sequences_are_seeded() {
    let spec: SequenceSpec =
        "rich:frames=3,width=40,height=30,intensity_noise=0.01,depth_noise=0.0015,seed=4"
            .parse()
            .unwrap();
    let a = generate_sequence(&spec).unwrap();
    let b = generate_sequence(&spec).unwrap();
    for (fa, fb) in a.frames.iter().zip(&b.frames) {
        assert_eq!(fa.intensity, fb.intensity);
        assert_eq!(fa.depth, fb.depth);
    }
    let other = generate_sequence(&SequenceSpec { seed: 5, ..spec }).unwrap();
    assert_ne!(a.frames[1].intensity, other.frames[1].intensity);
    assert_eq!(a.ground_truth.len(), 3);
    assert_eq!(a.ground_truth[0].1, bivo::RigidTransform::identity());
}

#[test]
fn presets_differ_as_described() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let textureless = SyntheticScene::preset(ScenePreset::Textureless, &mut rng);
    let flat = SyntheticScene::preset(ScenePreset::FlatDepth, &mut rng);
    assert!(textureless.texture.is_empty() && !textureless.relief.is_empty());
    assert!(flat.relief.is_empty() && flat.ridges.is_empty() && !flat.texture.is_empty());
}
