use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;
use crate::imaging::{DepthImage, IntensityImage};
use crate::scalar::Real;

/// One registered intensity + depth capture.
#[derive(Clone, Debug)]
pub struct Frame<T: Real> {
    pub intensity: IntensityImage<T>,
    pub depth: DepthImage<T>,
    /// Seconds.
    pub timestamp: f64,
}

impl<T: Real> Frame<T> {
    pub fn new(intensity: IntensityImage<T>, depth: DepthImage<T>, timestamp: f64) -> Result<Self> {
        if intensity.width() != depth.width() || intensity.height() != depth.height() {
            return Err(Error::InvalidInput(format!(
                "intensity is {}x{} but depth is {}x{}",
                intensity.width(),
                intensity.height(),
                depth.width(),
                depth.height()
            )));
        }
        Ok(Self {
            intensity,
            depth,
            timestamp,
        })
    }

    pub fn width(&self) -> usize {
        self.intensity.width()
    }

    pub fn height(&self) -> usize {
        self.intensity.height()
    }
}

/// Two consecutive frames sharing resolution and intrinsics.
#[derive(Clone, Debug)]
pub struct FramePair<T: Real> {
    pub first: Frame<T>,
    pub second: Frame<T>,
    pub intrinsics: CameraIntrinsics<T>,
}

impl<T: Real> FramePair<T> {
    pub fn new(first: Frame<T>, second: Frame<T>, intrinsics: CameraIntrinsics<T>) -> Result<Self> {
        if first.width() != second.width() || first.height() != second.height() {
            return Err(Error::InvalidInput("frames differ in resolution".into()));
        }
        if !(second.timestamp > first.timestamp) {
            return Err(Error::InvalidInput(format!(
                "second timestamp {} does not follow first {}",
                second.timestamp, first.timestamp
            )));
        }
        Ok(Self {
            first,
            second,
            intrinsics,
        })
    }
}
