use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::frame::Frame;
use crate::geometry::{Intrinsics, Pose};
use crate::image::{Image, Mask};
use crate::instance::ObjectSegmentsMask;
use crate::render::{centre_index_map, NO_SURFEL};
use crate::tracking::InvalidMask;

use super::map::{surfel_radius, MapId, MapKind, Surfel, SurfelMap, STATIC_MAP_ID};
use super::matching::MatchResult;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionParams {
    /// Max distance between a measurement and the surfel it updates (meters).
    pub assoc_dist: f64,
    /// Max normal angle between a measurement and the surfel it updates (radians).
    pub assoc_angle: f64,
    pub w_new: f64,
    pub cull_weight: f64,
    /// Maps younger than this many frames are never culled.
    pub stability_frames: u32,
    pub shrink_step: f64,
    /// Smallest rigid instance (VGA pixels) that founds a new object map.
    pub min_object_pixels: usize,
    pub inactive_timeout: u32,
}

impl Default for FusionParams {
    fn default() -> Self {
        Self {
            assoc_dist: 0.05,
            assoc_angle: 20f64.to_radians(),
            w_new: 1.0,
            cull_weight: 0.5,
            stability_frames: 10,
            shrink_step: 1.0,
            min_object_pixels: 1000,
            inactive_timeout: 20,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FuseStats {
    pub updated: usize,
    pub created: usize,
    /// Measurements whose best surfel was already updated by another pixel.
    pub absorbed: usize,
    pub contributed: Mask,
}

#[derive(Clone, Copy)]
enum Decision {
    Skip,
    New,
    Update(u32),
}

/// Fuses the pixels of `frame` selected by `include` into `map`, with `pose`
/// mapping current-camera coordinates into map coordinates.
pub fn fuse_into_map(
    map: &mut SurfelMap,
    frame: &Frame,
    k: &Intrinsics,
    pose: &Pose,
    include: &Mask,
    frame_idx: u32,
    params: &FusionParams,
) -> FuseStats {
    let (w, h) = frame.valid_mask.dims();
    let index = centre_index_map(map.surfels(), pose, k, |s| s.active);
    let cos_a = params.assoc_angle.cos();
    let dist2 = params.assoc_dist * params.assoc_dist;
    let surfels = map.surfels();
    let decisions = Image::from_fn_par(w, h, |u, v| {
        if !include[(u, v)] || !frame.valid_mask[(u, v)] {
            return Decision::Skip;
        }
        let p = pose.transform_point(&frame.vertex_map[(u, v)]);
        let n = pose.transform_vector(&frame.normal_map[(u, v)]);
        let mut best: Option<(f64, u32)> = None;
        for qv in v.saturating_sub(1)..=(v + 1).min(h - 1) {
            for qu in u.saturating_sub(1)..=(u + 1).min(w - 1) {
                let i = index[(qu, qv)];
                if i == NO_SURFEL {
                    continue;
                }
                let s = &surfels[i as usize];
                let d2 = (s.position - p).norm_squared();
                if d2 <= dist2 && s.normal.dot(&n) >= cos_a && best.is_none_or(|b| (d2, i) < b) {
                    best = Some((d2, i));
                }
            }
        }
        match best {
            Some((_, i)) => Decision::Update(i),
            None => Decision::New,
        }
    });

    let mut used = vec![false; map.len()];
    let mut stats = FuseStats {
        updated: 0,
        created: 0,
        absorbed: 0,
        contributed: Mask::empty(w, h),
    };
    let surfels = map.surfels_mut();
    for v in 0..h {
        for u in 0..w {
            let decision = decisions[(u, v)];
            if matches!(decision, Decision::Skip) {
                continue;
            }
            let p = pose.transform_point(&frame.vertex_map[(u, v)]);
            let n_cam = frame.normal_map[(u, v)];
            let n = pose.transform_vector(&n_cam);
            let color = frame.rgb[(u, v)];
            let radius = surfel_radius(frame.depth[(u, v)], n_cam.z, k);
            match decision {
                Decision::Update(i) if used[i as usize] => stats.absorbed += 1,
                Decision::Update(i) => {
                    used[i as usize] = true;
                    let s = &mut surfels[i as usize];
                    let (wo, wn) = (s.weight, params.w_new);
                    let total = wo + wn;
                    s.position = (s.position * wo + p * wn) / total;
                    let blended = s.normal * wo + n * wn;
                    if blended.norm() > 1e-9 {
                        s.normal = blended.normalize();
                    }
                    for c in 0..3 {
                        s.color[c] = ((s.color[c] as f64 * wo + color[c] as f64 * wn) / total)
                            .round()
                            .clamp(0.0, 255.0) as u8;
                    }
                    s.weight = total;
                    s.radius = s.radius.min(radius);
                    s.last_updated = frame_idx;
                    s.active = true;
                    stats.updated += 1;
                    stats.contributed[(u, v)] = true;
                }
                Decision::New => {
                    surfels.push(Surfel {
                        position: p,
                        normal: n.normalize(),
                        color,
                        radius,
                        weight: params.w_new,
                        created_at: frame_idx,
                        last_updated: frame_idx,
                        active: true,
                    });
                    stats.created += 1;
                    stats.contributed[(u, v)] = true;
                }
                Decision::Skip => unreachable!(),
            }
        }
    }
    stats
}

/// Lowers the weight of surfels seen through in the instance-free region and
/// culls those that drop below `cull_weight` once the map is old enough.
///
/// A surfel is "seen through" when it projects onto a valid pixel with no
/// instance whose measured depth is not in front of it.
pub fn shrink_map(
    map: &mut SurfelMap,
    frame: &Frame,
    k: &Intrinsics,
    pose: &Pose,
    instance_labels: &Image<u32>,
    frame_idx: u32,
    params: &FusionParams,
) -> usize {
    let world_to_cam = pose.inverse();
    let mut shrunk = 0;
    for s in map.surfels_mut() {
        let p = world_to_cam.transform_point(&s.position);
        let Some((u, v)) = k.pixel_of(&p) else { continue };
        if frame.valid_mask[(u, v)]
            && instance_labels[(u, v)] == 0
            && frame.depth[(u, v)] >= p.z - params.assoc_dist
        {
            s.weight = (s.weight - params.shrink_step).max(0.0);
            shrunk += 1;
        }
    }
    if frame_idx.saturating_sub(map.created_at) >= params.stability_frames {
        map.surfels_mut().retain(|s| s.weight >= params.cull_weight);
    }
    shrunk
}

pub fn deactivate_stale(map: &mut SurfelMap, frame_idx: u32, timeout: u32) {
    for s in map.surfels_mut() {
        if frame_idx.saturating_sub(s.last_updated) > timeout {
            s.active = false;
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct FusionReport {
    pub stats: BTreeMap<MapId, FuseStats>,
    pub shrunk: BTreeMap<MapId, usize>,
    pub created_maps: Vec<MapId>,
}

/// Everything `fuse_frame` needs about the current frame.
pub struct FusionInput<'a> {
    pub frame: &'a Frame,
    pub k: &'a Intrinsics,
    pub frame_idx: u32,
    /// All detected instances, rigid and non-rigid.
    pub objects: &'a ObjectSegmentsMask,
    pub invalid: &'a InvalidMask,
    pub matches: &'a MatchResult,
    /// Tracked camera → map pose of every visible map.
    pub poses: &'a BTreeMap<MapId, Pose>,
}

enum Job {
    Fuse(Mask),
    Shrink,
}

/// One fusion step over all maps:
///
/// * static map ← valid pixels outside the invalid mask and outside every rigid instance;
/// * matched object map ← its instance's pixels;
/// * visible but unmatched object map ← shrunk;
/// * unmatched rigid instance with enough pixels ← new object map.
pub fn fuse_frame(
    maps: &mut Vec<SurfelMap>,
    input: &FusionInput<'_>,
    params: &FusionParams,
) -> FusionReport {
    let frame = input.frame;
    let labels = &input.objects.instance_labels;
    let rigid_ids: Vec<u32> = input
        .objects
        .instances
        .iter()
        .filter(|i| i.rigid)
        .map(|i| i.instance_id)
        .collect();
    let rigid_support = labels.map(|l| *l != 0 && rigid_ids.contains(l));

    let mut jobs: BTreeMap<MapId, Job> = BTreeMap::new();
    for m in maps.iter() {
        if !input.poses.contains_key(&m.id) {
            if m.is_static() {
                log::warn!("frame {}: no pose for the static map, fusion skipped", input.frame_idx);
            }
            continue;
        }
        if m.is_static() {
            let include = Image::from_fn(frame.width(), frame.height(), |u, v| {
                !input.invalid.bits[(u, v)] && !rigid_support[(u, v)]
            });
            jobs.insert(m.id, Job::Fuse(include));
        } else if let Some(inst) = input.matches.instance_for(m.id) {
            jobs.insert(m.id, Job::Fuse(labels.map(|&l| l == inst)));
        } else {
            jobs.insert(m.id, Job::Shrink);
        }
    }
    for &(map_id, _) in &input.matches.matches {
        if !input.poses.contains_key(&map_id) {
            log::warn!("frame {}: matched map {map_id} has no pose, fusion skipped", input.frame_idx);
        }
    }

    let results: Vec<(MapId, Result<FuseStats, usize>)> = maps
        .par_iter_mut()
        .filter_map(|m| {
            let job = jobs.get(&m.id)?;
            let pose = input.poses[&m.id];
            Some((
                m.id,
                match job {
                    Job::Fuse(include) => Ok(fuse_into_map(
                        m,
                        frame,
                        input.k,
                        &pose,
                        include,
                        input.frame_idx,
                        params,
                    )),
                    Job::Shrink => Err(shrink_map(
                        m,
                        frame,
                        input.k,
                        &pose,
                        labels,
                        input.frame_idx,
                        params,
                    )),
                },
            ))
        })
        .collect();

    let mut report = FusionReport::default();
    for (id, r) in results {
        match r {
            Ok(s) => {
                report.stats.insert(id, s);
            }
            Err(n) => {
                report.shrunk.insert(id, n);
            }
        }
    }

    let min_pixels =
        (params.min_object_pixels as f64 * input.k.area_ratio_to_vga()).round() as usize;
    if let Some(camera) = input.poses.get(&STATIC_MAP_ID) {
        for &inst_id in &input.matches.unmatched_objects {
            let Some(inst) = input.objects.instance(inst_id) else { continue };
            if !inst.rigid || inst.pixel_count < min_pixels.max(1) {
                continue;
            }
            let id = maps.iter().map(|m| m.id).max().unwrap_or(STATIC_MAP_ID) + 1;
            let mut m = SurfelMap::new_object(id, inst.class_name.clone(), input.frame_idx);
            debug_assert_eq!(m.kind, MapKind::Object);
            m.record_pose(input.frame_idx, frame.timestamp, *camera);
            let include = labels.map(|&l| l == inst_id);
            let s = fuse_into_map(&mut m, frame, input.k, camera, &include, input.frame_idx, params);
            log::info!(
                "frame {}: new {} map {id} with {} surfels",
                input.frame_idx,
                inst.class_name,
                s.created
            );
            report.stats.insert(id, s);
            report.created_maps.push(id);
            maps.push(m);
        }
    }

    for m in maps.iter_mut() {
        deactivate_stale(m, input.frame_idx, params.inactive_timeout);
    }
    report
}
