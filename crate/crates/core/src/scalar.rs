//! Scalar abstraction shared by all numeric code in the crate.

use nalgebra::RealField;
use num_traits::ToPrimitive;

/// Floating point scalar the odometry core is generic over: `f32` or `f64`.
pub trait Real: RealField + Copy + ToPrimitive + Send + Sync {
    /// Tolerance floor that makes sense for this precision.
    fn tolerance_floor() -> Self;
}

impl Real for f32 {
    fn tolerance_floor() -> Self {
        1e-5
    }
}

impl Real for f64 {
    fn tolerance_floor() -> Self {
        1e-12
    }
}

/// Converts an `f64` literal into `T`.
#[inline(always)]
pub fn lit<T: Real>(x: f64) -> T {
    nalgebra::convert(x)
}

/// Converts `T` back to `f64`.
#[inline(always)]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
