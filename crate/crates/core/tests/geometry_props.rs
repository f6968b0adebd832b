use bivo::geometry::{exp_twist, oplus, warp, CameraIntrinsics, MotionTwist, PixelCoord};
use nalgebra::{Matrix3, Vector3};
use proptest::prelude::*;

fn vec3(bound: f64) -> impl Strategy<Value = Vector3<f64>> {
    (-bound..bound, -bound..bound, -bound..bound).prop_map(|(x, y, z)| Vector3::new(x, y, z))
}

fn twist(t: f64, r: f64) -> impl Strategy<Value = MotionTwist<f64>> {
    (vec3(t), vec3(r)).prop_map(|(nu, psi)| MotionTwist::new(nu, psi))
}

/// Twist with ‖ψ‖ < π − 0.1.
fn large_twist() -> impl Strategy<Value = MotionTwist<f64>> {
    (vec3(2.0), vec3(1.0), 0.0..(std::f64::consts::PI - 0.1)).prop_map(|(nu, dir, angle)| {
        let psi = if dir.norm() > 1e-3 {
            dir.normalize() * angle
        } else {
            Vector3::zeros()
        };
        MotionTwist::new(nu, psi)
    })
}

fn k() -> CameraIntrinsics<f64> {
    CameraIntrinsics::new(525.0, 525.0, 319.5, 239.5).unwrap()
}

proptest! {
    #[test]
    fn log_inverts_exp(xi in large_twist()) {
        let back = exp_twist(&xi).log();
        prop_assert!((back.to_vector() - xi.to_vector()).norm() < 1e-9);
    }

    #[test]
    fn rotations_are_orthonormal(xi in large_twist()) {
        let r = exp_twist(&xi).rotation;
        prop_assert!((r.transpose() * r - Matrix3::identity()).abs().max() < 1e-12);
        prop_assert!((r.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oplus_is_associative(a in twist(0.06, 0.06), b in twist(0.06, 0.06), c in twist(0.06, 0.06)) {
        let left = oplus(&oplus(&a, &b), &c);
        let right = oplus(&a, &oplus(&b, &c));
        prop_assert!((left.to_vector() - right.to_vector()).norm() < 1e-9);
    }

    #[test]
    fn oplus_composes_on_the_left(a in twist(0.1, 0.1), b in twist(0.1, 0.1)) {
        let direct = exp_twist(&b).compose(&exp_twist(&a));
        let via = exp_twist(&oplus(&a, &b));
        prop_assert!((direct.rotation - via.rotation).abs().max() < 1e-12);
        prop_assert!((direct.translation - via.translation).norm() < 1e-12);
    }

    #[test]
    fn identity_warp_keeps_pixels(u in 0.0..639.0, v in 0.0..479.0, depth in 0.05..20.0) {
        let x = PixelCoord::new(u, v);
        let y = warp(&MotionTwist::zero(), &x, depth, &k()).unwrap();
        prop_assert!((y.u - u).abs() < 1e-9 && (y.v - v).abs() < 1e-9);
    }
}

#[test]
fn hand_warp_example() {
    let k = CameraIntrinsics::<f64>::new(500.0, 500.0, 320.0, 240.0).unwrap();
    let xi = MotionTwist::from_translation(Vector3::new(0.0, 0.0, 1.0));
    let y = warp(&xi, &PixelCoord::new(820.0, 240.0), 1.0, &k).unwrap();
    assert!((y.u - 570.0).abs() < 1e-12 && (y.v - 240.0).abs() < 1e-12);
}
