//! Frame containers, TUM RGB-D ingestion and the synthetic scene renderer.

mod frame;
pub mod synthetic;
pub mod tum;

pub use frame::{Frame, FramePair};
