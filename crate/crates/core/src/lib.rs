//! Dense RGB-D visual odometry from jointly minimized intensity and depth
//! residuals.
//!
//! Two scalarizations of the intensity/depth objective pair are provided:
//!
//! * [`weighted`]: Gauss-Newton on `F_I + λ F_D`, with `λ` fixed, from the
//!   median ratio of intensity and depth, or from image complexity.
//! * [`bounded`]: minimize `F_I` subject to `F_D ≤ ε_D`, each step solved as a
//!   second-order cone program by the embedded interior-point solver in
//!   [`cone`].
//!
//! The numeric core is generic over [`Real`] (`f32` or `f64`). The aliases at
//! the crate root fix the scalar to `f64`, which is what the dataset tooling,
//! evaluation and CLI use.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod complexity;
pub mod cone;
pub mod dataset;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod imaging;
pub mod pipeline;
pub mod residual;
pub mod scalar;
pub mod solver;

pub use error::{Error, Result};
pub use scalar::Real;
pub use solver::{bounded, weighted};

pub type MotionTwist = geometry::MotionTwist<f64>;
pub type RigidTransform = geometry::RigidTransform<f64>;
pub type CameraIntrinsics = geometry::CameraIntrinsics<f64>;
pub type PixelCoord = geometry::PixelCoord<f64>;
pub type IntensityImage = imaging::IntensityImage<f64>;
pub type DepthImage = imaging::DepthImage<f64>;
pub type Frame = dataset::Frame<f64>;
pub type FramePair = dataset::FramePair<f64>;
pub type ResidualSystem = residual::ResidualSystem<f64>;
pub type NormalTerms = residual::NormalTerms<f64>;
pub type ComplexityReport = complexity::ComplexityReport<f64>;
pub type TuningConfig = complexity::TuningConfig<f64>;
pub type SolverSettings = solver::SolverSettings<f64>;
pub type AlignmentResult = solver::AlignmentResult<f64>;

/// Single-precision aliases.
pub mod f32 {
    pub type MotionTwist = crate::geometry::MotionTwist<f32>;
    pub type RigidTransform = crate::geometry::RigidTransform<f32>;
    pub type CameraIntrinsics = crate::geometry::CameraIntrinsics<f32>;
    pub type FramePair = crate::dataset::FramePair<f32>;
    pub type SolverSettings = crate::solver::SolverSettings<f32>;
    pub type AlignmentResult = crate::solver::AlignmentResult<f32>;
}
