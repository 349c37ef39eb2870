//! Static and object surfel maps, map/object matching and frame fusion.

mod fusion;
mod map;
mod matching;

pub use fusion::{
    deactivate_stale, fuse_frame, fuse_into_map, shrink_map, FuseStats, FusionInput,
    FusionParams, FusionReport,
};
pub use map::{
    registry_manifest, surfel_radius, MapId, MapKind, PoseSample, Surfel, SurfelMap,
    STATIC_MAP_ID,
};
pub use matching::{match_maps_to_objects, overlap_table, project_map_mask, MapMask, MatchResult};
