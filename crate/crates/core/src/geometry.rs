//! Rigid motion, the twist increment operator and pinhole warping.
//!
//! Twists are ordered `[nu; psi]`: three translation components followed by
//! three axis-angle rotation components. A twist maps points from the first
//! camera frame into the second camera frame, and increments compose on the
//! left: `xi ⊕ delta = log(exp(delta) · exp(xi))`.

use std::ops::Mul;

use nalgebra::{Matrix3, Vector2, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::scalar::{lit, Real};

/// Below this rotation angle the exponential map switches to its Taylor series.
pub const SMALL_ANGLE: f64 = 1e-8;

/// Smallest depth a transformed point may have and still project.
pub const Z_MIN: f64 = 1e-6;

/// Six-degree-of-freedom motion in twist coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MotionTwist<T: Real> {
    /// Translation part (meters).
    pub nu: Vector3<T>,
    /// Rotation part, axis times angle (radians).
    pub psi: Vector3<T>,
}

impl<T: Real> MotionTwist<T> {
    pub fn new(nu: Vector3<T>, psi: Vector3<T>) -> Self {
        Self { nu, psi }
    }

    pub fn zero() -> Self {
        Self::new(Vector3::zeros(), Vector3::zeros())
    }

    pub fn from_translation(nu: Vector3<T>) -> Self {
        Self::new(nu, Vector3::zeros())
    }

    pub fn from_rotation(psi: Vector3<T>) -> Self {
        Self::new(Vector3::zeros(), psi)
    }

    pub fn from_vector(v: &Vector6<T>) -> Self {
        Self::new(Vector3::new(v[0], v[1], v[2]), Vector3::new(v[3], v[4], v[5]))
    }

    pub fn to_vector(&self) -> Vector6<T> {
        Vector6::new(
            self.nu[0],
            self.nu[1],
            self.nu[2],
            self.psi[0],
            self.psi[1],
            self.psi[2],
        )
    }

    pub fn is_finite(&self) -> bool {
        self.nu.iter().chain(self.psi.iter()).all(|x| x.is_finite())
    }

    pub fn norm(&self) -> T {
        self.to_vector().norm()
    }

    pub fn exp(&self) -> RigidTransform<T> {
        exp_twist(self)
    }

    /// Casts the twist to another precision.
    pub fn cast<U: Real>(&self) -> MotionTwist<U> {
        MotionTwist::new(
            self.nu.map(|x| lit(crate::scalar::to_f64(x))),
            self.psi.map(|x| lit(crate::scalar::to_f64(x))),
        )
    }
}

impl<T: Real> Default for MotionTwist<T> {
    fn default() -> Self {
        Self::zero()
    }
}

/// Element of SE(3) stored as a rotation matrix and translation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RigidTransform<T: Real> {
    pub rotation: Matrix3<T>,
    pub translation: Vector3<T>,
}

impl<T: Real> RigidTransform<T> {
    /// Builds a transform, checking that `rotation` is a proper rotation.
    pub fn new(rotation: Matrix3<T>, translation: Vector3<T>) -> Result<Self> {
        let tol = lit::<T>(1e-9).max(T::tolerance_floor() * lit(10.0));
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if ortho > tol || (rotation.determinant() - T::one()).abs() > tol {
            return Err(Error::InvalidInput(
                "rotation matrix is not orthonormal with determinant +1".into(),
            ));
        }
        if !translation.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidInput("non-finite translation".into()));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(translation: Vector3<T>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn apply(&self, p: &Vector3<T>) -> Vector3<T> {
        self.rotation * p + self.translation
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self · other`: applies `other` first.
    pub fn compose(&self, other: &Self) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    /// Matrix logarithm back to twist coordinates.
    pub fn log(&self) -> MotionTwist<T> {
        let (psi, theta) = log_rotation(&self.rotation);
        let omega = hat(&psi);
        let half: T = lit(0.5);
        // Inverse of the SO(3) left Jacobian.
        let coeff = if theta < lit(1e-4) {
            let t2 = theta * theta;
            lit::<T>(1.0 / 12.0) + t2 / lit(720.0) + t2 * t2 / lit(30240.0)
        } else {
            let (s, c) = (theta.sin(), theta.cos());
            (T::one() - theta * s / (lit::<T>(2.0) * (T::one() - c))) / (theta * theta)
        };
        let v_inv = Matrix3::identity() - omega * half + omega * omega * coeff;
        MotionTwist::new(v_inv * self.translation, psi)
    }

    /// Casts the transform to another precision.
    pub fn cast<U: Real>(&self) -> RigidTransform<U> {
        RigidTransform {
            rotation: self.rotation.map(|x| lit(crate::scalar::to_f64(x))),
            translation: self.translation.map(|x| lit(crate::scalar::to_f64(x))),
        }
    }
}

impl<T: Real> Mul for RigidTransform<T> {
    type Output = RigidTransform<T>;

    fn mul(self, rhs: Self) -> Self::Output {
        self.compose(&rhs)
    }
}

/// Skew-symmetric cross-product matrix.
pub fn hat<T: Real>(v: &Vector3<T>) -> Matrix3<T> {
    Matrix3::new(
        T::zero(),
        -v[2],
        v[1],
        v[2],
        T::zero(),
        -v[0],
        -v[1],
        v[0],
        T::zero(),
    )
}

fn vee<T: Real>(m: &Matrix3<T>) -> Vector3<T> {
    Vector3::new(m[(2, 1)], m[(0, 2)], m[(1, 0)])
}

/// Returns `(A, B, C)` with `A = sin θ/θ`, `B = (1 − cos θ)/θ²`, `C = (θ − sin θ)/θ³`.
fn so3_coefficients<T: Real>(theta: T) -> (T, T, T) {
    let t2 = theta * theta;
    if theta < lit(SMALL_ANGLE) {
        return (
            T::one() - t2 / lit(6.0),
            lit::<T>(0.5) - t2 / lit(24.0),
            lit::<T>(1.0 / 6.0) - t2 / lit(120.0),
        );
    }
    let a = theta.sin() / theta;
    let half_sin = (theta * lit(0.5)).sin();
    let b = lit::<T>(2.0) * half_sin * half_sin / t2;
    // θ − sin θ cancels badly for small θ.
    let c = if theta < lit(1e-2) {
        lit::<T>(1.0 / 6.0) - t2 / lit(120.0) + t2 * t2 / lit(5040.0) - t2 * t2 * t2 / lit(362880.0)
    } else {
        (theta - theta.sin()) / (t2 * theta)
    };
    (a, b, c)
}

fn log_rotation<T: Real>(r: &Matrix3<T>) -> (Vector3<T>, T) {
    let two: T = lit(2.0);
    let cos_theta = ((r.trace() - T::one()) / two).clamp(-T::one(), T::one());
    let skew = vee(&(r - r.transpose()));
    let theta = (skew.norm() / two).atan2(cos_theta);
    if theta < lit(1e-4) {
        // θ/(2 sin θ) ≈ ½(1 + θ²/6)
        let psi = skew * (lit::<T>(0.5) * (T::one() + theta * theta / lit(6.0)));
        return (psi, theta);
    }
    if theta > lit(3.0) {
        // Near π the antisymmetric part vanishes; recover the axis from the
        // symmetric part instead.
        let sym = (r + r.transpose()) * lit::<T>(0.5) - Matrix3::identity() * cos_theta;
        let outer = sym / (T::one() - cos_theta);
        let mut k = 0;
        for i in 1..3 {
            if outer[(i, i)] > outer[(k, k)] {
                k = i;
            }
        }
        let mut axis: Vector3<T> = outer.column(k).into_owned() / outer[(k, k)].max(T::zero()).sqrt();
        axis /= axis.norm();
        if axis.dot(&skew) < T::zero() {
            axis = -axis;
        }
        return (axis * theta, theta);
    }
    (skew * (theta / (two * theta.sin())), theta)
}

/// SE(3) exponential: Rodrigues rotation plus left-Jacobian-coupled translation.
pub fn exp_twist<T: Real>(xi: &MotionTwist<T>) -> RigidTransform<T> {
    let theta = xi.psi.norm();
    let (a, b, c) = so3_coefficients(theta);
    let omega = hat(&xi.psi);
    let omega2 = omega * omega;
    let rotation = Matrix3::identity() + omega * a + omega2 * b;
    let v = Matrix3::identity() + omega * b + omega2 * c;
    RigidTransform {
        rotation,
        translation: v * xi.nu,
    }
}

/// `xi ⊕ delta = log(exp(delta) · exp(xi))`.
pub fn oplus<T: Real>(xi: &MotionTwist<T>, delta: &MotionTwist<T>) -> MotionTwist<T> {
    exp_twist(delta).compose(&exp_twist(xi)).log()
}

/// Continuous image coordinates in pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PixelCoord<T: Real> {
    pub u: T,
    pub v: T,
}

impl<T: Real> PixelCoord<T> {
    pub fn new(u: T, v: T) -> Self {
        Self { u, v }
    }

    pub fn is_finite(&self) -> bool {
        self.u.is_finite() && self.v.is_finite()
    }
}

/// Pinhole intrinsics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraIntrinsics<T: Real> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
}

impl<T: Real> CameraIntrinsics<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T) -> Result<Self> {
        if !(fx > T::zero() && fy > T::zero()) || !cx.is_finite() || !cy.is_finite() {
            return Err(Error::InvalidInput(
                "focal lengths must be positive and the principal point finite".into(),
            ));
        }
        Ok(Self { fx, fy, cx, cy })
    }

    /// Intrinsics of the same camera at `factor` times the resolution.
    pub fn scaled(&self, factor: T) -> Self {
        Self {
            fx: self.fx * factor,
            fy: self.fy * factor,
            cx: self.cx * factor,
            cy: self.cy * factor,
        }
    }

    /// Projects a camera-frame point; `None` when it lies at or behind `Z_MIN`.
    pub fn project(&self, p: &Vector3<T>) -> Option<PixelCoord<T>> {
        if p[2] <= lit(Z_MIN) {
            return None;
        }
        Some(PixelCoord::new(
            self.fx * p[0] / p[2] + self.cx,
            self.fy * p[1] / p[2] + self.cy,
        ))
    }

    /// Jacobian of [`Self::project`] with respect to the point.
    pub fn projection_jacobian(&self, p: &Vector3<T>) -> nalgebra::Matrix2x3<T> {
        let inv_z = T::one() / p[2];
        let inv_z2 = inv_z * inv_z;
        nalgebra::Matrix2x3::new(
            self.fx * inv_z,
            T::zero(),
            -self.fx * p[0] * inv_z2,
            T::zero(),
            self.fy * inv_z,
            -self.fy * p[1] * inv_z2,
        )
    }

    /// Unit-depth ray direction through pixel `x`.
    pub fn ray(&self, x: &PixelCoord<T>) -> Vector3<T> {
        Vector3::new((x.u - self.cx) / self.fx, (x.v - self.cy) / self.fy, T::one())
    }

    pub fn cast<U: Real>(&self) -> CameraIntrinsics<U> {
        use crate::scalar::to_f64;
        CameraIntrinsics {
            fx: lit(to_f64(self.fx)),
            fy: lit(to_f64(self.fy)),
            cx: lit(to_f64(self.cx)),
            cy: lit(to_f64(self.cy)),
        }
    }
}

/// Lifts pixel `x` at `depth` meters to a camera-frame point. `None` for
/// non-positive or non-finite depth.
pub fn backproject<T: Real>(x: &PixelCoord<T>, depth: T, k: &CameraIntrinsics<T>) -> Option<Vector3<T>> {
    if !(depth > T::zero()) || !depth.is_finite() {
        return None;
    }
    Some(k.ray(x) * depth)
}

pub fn transform_point<T: Real>(xi: &MotionTwist<T>, p: &Vector3<T>) -> Vector3<T> {
    exp_twist(xi).apply(p)
}

/// The `[·]_z` selector.
#[inline]
pub fn z_component<T: Real>(p: &Vector3<T>) -> T {
    p[2]
}

/// Maps pixel `x` of the first image into the second image under `xi`.
pub fn warp<T: Real>(
    xi: &MotionTwist<T>,
    x: &PixelCoord<T>,
    depth: T,
    k: &CameraIntrinsics<T>,
) -> Option<PixelCoord<T>> {
    warp_with(&exp_twist(xi), x, depth, k).map(|(y, _)| y)
}

/// Like [`warp`] with a precomputed transform; also returns the transformed point.
pub fn warp_with<T: Real>(
    transform: &RigidTransform<T>,
    x: &PixelCoord<T>,
    depth: T,
    k: &CameraIntrinsics<T>,
) -> Option<(PixelCoord<T>, Vector3<T>)> {
    let p = backproject(x, depth, k)?;
    let q = transform.apply(&p);
    k.project(&q).map(|y| (y, q))
}

/// Derivative of the transformed point `q` under a left increment `exp(Δ)·T`
/// at `Δ = 0`: `[I | −[q]×]`.
pub fn point_increment_jacobian<T: Real>(q: &Vector3<T>) -> nalgebra::Matrix3x6<T> {
    let mut j = nalgebra::Matrix3x6::zeros();
    j.fixed_view_mut::<3, 3>(0, 0).copy_from(&Matrix3::identity());
    j.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-hat(q)));
    j
}

/// Convenience conversion used by images and samplers.
pub fn pixel_vector<T: Real>(x: &PixelCoord<T>) -> Vector2<T> {
    Vector2::new(x.u, x.v)
}
