use crate::image::Mask;
use crate::instance::ObjectSegmentsMask;
use crate::render::RenderedView;

use super::map::{MapId, SurfelMap};

/// Pixels covered by a map rendered at its tracked pose.
#[derive(Clone, Debug, PartialEq)]
pub struct MapMask {
    pub map_id: MapId,
    pub bits: Mask,
}

impl MapMask {
    pub fn from_view(map_id: MapId, view: &RenderedView) -> Self {
        Self {
            map_id,
            bits: view.valid.clone(),
        }
    }
}

/// Projection support of `map` seen from `pose` (camera → map).
pub fn project_map_mask(
    map: &SurfelMap,
    pose: &crate::geometry::Pose,
    k: &crate::geometry::Intrinsics,
) -> MapMask {
    MapMask::from_view(map.id, &crate::render::render_map(map, pose, k))
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MatchResult {
    /// `(map_id, instance_id)` pairs in acceptance order.
    pub matches: Vec<(MapId, u32)>,
    pub unmatched_objects: Vec<u32>,
    pub unmatched_maps: Vec<MapId>,
}

impl MatchResult {
    pub fn instance_for(&self, map_id: MapId) -> Option<u32> {
        self.matches.iter().find(|m| m.0 == map_id).map(|m| m.1)
    }
}

/// `|mask ∩ instance| / |instance|` for every (map, instance) pair.
pub fn overlap_table(map_masks: &[MapMask], objects: &ObjectSegmentsMask) -> Vec<Vec<f64>> {
    let max_id = objects.instances.iter().map(|i| i.instance_id).max().unwrap_or(0) as usize;
    let mut sizes = vec![0usize; max_id + 1];
    for &l in objects.instance_labels.data() {
        if (l as usize) <= max_id {
            sizes[l as usize] += 1;
        }
    }
    map_masks
        .iter()
        .map(|mm| {
            let mut inter = vec![0usize; max_id + 1];
            for (&b, &l) in mm.bits.data().iter().zip(objects.instance_labels.data()) {
                if b && l != 0 && (l as usize) <= max_id {
                    inter[l as usize] += 1;
                }
            }
            objects
                .instances
                .iter()
                .map(|inst| {
                    let n = sizes[inst.instance_id as usize];
                    if n == 0 {
                        0.0
                    } else {
                        inter[inst.instance_id as usize] as f64 / n as f64
                    }
                })
                .collect()
        })
        .collect()
}

/// Greedy one-to-one matching by descending overlap; ties go to the lower map
/// id, then the lower instance id. Pairs below `match_threshold` (or with no
/// overlap at all) are never matched.
pub fn match_maps_to_objects(
    map_masks: &[MapMask],
    objects: &ObjectSegmentsMask,
    match_threshold: f64,
) -> MatchResult {
    let table = overlap_table(map_masks, objects);
    let mut pairs: Vec<(f64, MapId, u32, usize, usize)> = Vec::new();
    for (mi, row) in table.iter().enumerate() {
        for (ii, &o) in row.iter().enumerate() {
            if o > 0.0 && o >= match_threshold {
                pairs.push((o, map_masks[mi].map_id, objects.instances[ii].instance_id, mi, ii));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut map_used = vec![false; map_masks.len()];
    let mut inst_used = vec![false; objects.instances.len()];
    let mut matches = Vec::new();
    for (_, map_id, inst_id, mi, ii) in pairs {
        if !map_used[mi] && !inst_used[ii] {
            map_used[mi] = true;
            inst_used[ii] = true;
            matches.push((map_id, inst_id));
        }
    }
    MatchResult {
        matches,
        unmatched_objects: objects
            .instances
            .iter()
            .zip(&inst_used)
            .filter(|(_, &u)| !u)
            .map(|(i, _)| i.instance_id)
            .collect(),
        unmatched_maps: map_masks
            .iter()
            .zip(&map_used)
            .filter(|(_, &u)| !u)
            .map(|(m, _)| m.map_id)
            .collect(),
    }
}
