//! Sequence ingestion and result export.

pub mod detections;
pub mod ply;
pub mod trajectory;
pub mod tum;

pub use detections::{
    load_detections, BBox, CategoryTable, Detection, DetectionParser,
};
pub use ply::{export_ply, read_ply_points, write_points_ply};
pub use trajectory::{export_trajectory, read_trajectory, TrajectoryRecord};
pub use tum::{associate, load_tum_sequence, SequenceEntry, SequenceIndex};
