//! Trajectory and reconstruction metrics, and per-stage timing reports.

pub mod ate;
pub mod cloud;
pub mod kdtree;
pub mod timing;

pub use ate::{ate, ate_rmse, rigid_alignment, AteReport};
pub use cloud::{cloud_compare, CloudCompareReport, DEFAULT_INLIER_THRESHOLD};
pub use kdtree::KdTree;
pub use timing::{timing_report, Stage, Timings, TimingReport};
