//! Dynamic RGB-D SLAM with a static background map and per-object surfel maps.
//!
//! Each frame is segmented geometrically, intersected with 2D detections,
//! tracked against every visible map, checked for unknown motion through ICP
//! residuals, re-tracked with dynamic pixels masked out and finally fused.

pub mod dataset;
pub mod debug;
pub mod error;
pub mod eval;
pub mod frame;
pub mod geometry;
pub mod image;
pub mod instance;
pub mod mapping;
pub mod motion;
pub mod pipeline;
pub mod render;
pub mod segmentation;
pub mod synthetic;
pub mod tracking;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use frame::{DepthRange, Frame, Rgb};
pub use geometry::{se3_exp, se3_log, Intrinsics, Pose, Twist, Vec3};
pub use image::{Image, Mask};
