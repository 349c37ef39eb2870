//! Camera tracking against rendered map views: coarse-to-fine Gauss-Newton
//! on a joint point-to-plane + photometric cost.

pub mod cost;
pub mod pyramid;

use std::collections::BTreeMap;

use nalgebra::{Matrix6, Vector6};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::frame::Frame;
use crate::geometry::{se3_exp, Intrinsics, Pose, Twist, Vec3};
use crate::image::{Image, Mask};
use crate::mapping::{MapId, SurfelMap, STATIC_MAP_ID};
use crate::render::render_map;

use cost::{associate, normal_equations, AssociationParams};
use pyramid::{mask_pyramid, Level, Pyramid};

pub const NO_RESIDUAL: f64 = -1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingParams {
    /// Gauss-Newton iterations per level, coarse to fine; its length is the
    /// number of pyramid levels.
    pub iterations: Vec<usize>,
    pub lambda_rgb: f64,
    pub dist_thresh: f64,
    pub angle_thresh: f64,
    /// Minimum correspondences at the finest level, in VGA pixels.
    pub min_inliers: usize,
    /// Minimum rendered pixels for a map to count as visible, in VGA pixels.
    pub min_visible_pixels: usize,
    /// Object maps need only this many inliers and visible pixels when it is
    /// below the two limits above, in VGA pixels.
    pub object_min_pixels: usize,
    pub convergence_eps: f64,
    pub max_halvings: usize,
}

impl Default for TrackingParams {
    fn default() -> Self {
        Self {
            iterations: vec![10, 5, 4],
            lambda_rgb: 0.1,
            dist_thresh: 0.10,
            angle_thresh: 30f64.to_radians(),
            min_inliers: 2000,
            min_visible_pixels: 3000,
            object_min_pixels: 1000,
            convergence_eps: 1e-6,
            max_halvings: 4,
        }
    }
}

impl TrackingParams {
    pub fn levels(&self) -> usize {
        self.iterations.len()
    }

    fn scaled(count: usize, k: &Intrinsics) -> usize {
        ((count as f64 * k.area_ratio_to_vga()).round() as usize).max(6)
    }

    pub fn min_inliers_for(&self, k: &Intrinsics) -> usize {
        Self::scaled(self.min_inliers, k)
    }

    pub fn min_visible_for(&self, k: &Intrinsics) -> usize {
        Self::scaled(self.min_visible_pixels, k)
    }

    /// Limits for tracking against an object map.
    pub fn for_object_maps(&self) -> Self {
        Self {
            min_inliers: self.min_inliers.min(self.object_min_pixels),
            min_visible_pixels: self.min_visible_pixels.min(self.object_min_pixels),
            ..self.clone()
        }
    }

    fn association(&self) -> AssociationParams {
        AssociationParams {
            dist_thresh: self.dist_thresh,
            angle_thresh: self.angle_thresh,
        }
    }
}

/// Pixels excluded from tracking and static-map fusion.
#[derive(Clone, Debug, PartialEq)]
pub struct InvalidMask {
    pub bits: Mask,
}

impl InvalidMask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            bits: Mask::empty(width, height),
        }
    }

    pub fn from_union(masks: &[&Mask]) -> Self {
        let first = masks.first().expect("at least one mask");
        let mut bits = (*first).clone();
        for m in &masks[1..] {
            bits = bits.union(m);
        }
        Self { bits }
    }
}

/// A map rendered at a known camera pose, in that camera's coordinates.
#[derive(Clone, Debug)]
pub struct ReferenceFrame {
    pub map_id: MapId,
    /// Camera → map pose the view was rendered from.
    pub pose: Pose,
    pub k: Intrinsics,
    pub vertices: Image<Vec3>,
    pub normals: Image<Vec3>,
    pub intensity: Image<f64>,
    pub valid: Mask,
}

impl ReferenceFrame {
    /// Uses a live frame as the reference (frame-to-frame tracking).
    pub fn from_frame(frame: &Frame, k: &Intrinsics, pose: Pose) -> Self {
        Self {
            map_id: STATIC_MAP_ID,
            pose,
            k: *k,
            vertices: frame.vertex_map.clone(),
            normals: frame.normal_map.clone(),
            intensity: frame.intensity.clone(),
            valid: frame.valid_mask.clone(),
        }
    }

    pub fn level(&self) -> Level {
        Level {
            k: self.k,
            vertices: self.vertices.clone(),
            normals: self.normals.clone(),
            intensity: self.intensity.clone(),
            valid: self.valid.clone(),
        }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.count()
    }
}

pub fn render_reference(map: &SurfelMap, pose: &Pose, k: &Intrinsics) -> ReferenceFrame {
    let view = render_map(map, pose, k);
    ReferenceFrame {
        map_id: map.id,
        pose: *pose,
        k: *k,
        intensity: view.intensity(),
        vertices: view.vertices,
        normals: view.normals,
        valid: view.valid,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub level: usize,
    pub cost_before: f64,
    pub cost_after: f64,
}

#[derive(Clone, Debug)]
pub struct TrackingResult {
    /// Camera → map pose of the current frame.
    pub pose: Pose,
    /// Squared point-to-plane residual per pixel with a reference surface
    /// under it; [`NO_RESIDUAL`] elsewhere.
    pub residual_map: Image<f64>,
    pub inlier_count: usize,
    pub converged: bool,
    pub iterations_used: usize,
    pub steps: Vec<StepRecord>,
}

fn solve(h: &Matrix6<f64>, g: &Vector6<f64>) -> Option<Vector6<f64>> {
    if let Some(ch) = h.cholesky() {
        return Some(-ch.solve(g));
    }
    let svd = h.svd(true, true);
    let x = svd.solve(&(-g), 1e-12 * svd.singular_values.max()).ok()?;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Squared point-to-plane residual at every current pixel that lands on a
/// valid reference pixel, regardless of the outlier thresholds.
pub fn residual_map(
    reference: &Level,
    current: &Level,
    t_rel: &Pose,
    mask: Option<&Mask>,
) -> Image<f64> {
    let (w, h) = current.valid.dims();
    Image::from_fn_par(w, h, |u, v| {
        if !current.valid[(u, v)] || mask.is_some_and(|m| m[(u, v)]) {
            return NO_RESIDUAL;
        }
        let p = t_rel.transform_point(&current.vertices[(u, v)]);
        match reference.k.pixel_of(&p) {
            Some(px) if reference.valid[px] => {
                let r = (reference.vertices[px] - p).dot(&reference.normals[px]);
                r * r
            }
            _ => NO_RESIDUAL,
        }
    })
}

/// Tracking on prebuilt pyramids; `init` is the camera → map guess.
pub fn track_pyramids(
    reference: &Pyramid,
    reference_pose: &Pose,
    current: &Pyramid,
    init: &Pose,
    mask: Option<&Mask>,
    params: &TrackingParams,
) -> TrackingResult {
    let n_levels = params.levels().min(reference.levels.len()).min(current.levels.len());
    let masks = mask.map(|m| mask_pyramid(m, n_levels));
    let assoc = params.association();
    let k0 = reference.levels[0].k;
    let min0 = params.min_inliers_for(&k0);
    let inv_ref = reference_pose.inverse();
    let mut t = inv_ref.compose(init);
    let mut steps = Vec::new();

    for level in (0..n_levels).rev() {
        let iters = params.iterations[params.levels() - 1 - level];
        let (rl, cl) = (&reference.levels[level], &current.levels[level]);
        let lmask = masks.as_ref().map(|m| &m[level]);
        let min_level = (min0 >> (2 * level)).max(6);
        for _ in 0..iters {
            let corr = associate(rl, cl, &t, lmask, &assoc);
            if corr.len() < min_level {
                break;
            }
            let ne = normal_equations(&corr, rl, &t, params.lambda_rgb);
            let Some(delta) = solve(&ne.h, &ne.g) else { break };
            let mut scale = 1.0;
            let mut accepted = None;
            for _ in 0..=params.max_halvings {
                let xi = Twist::from_vector(&(delta * scale));
                let cand = se3_exp(&xi).compose(&t).renormalized();
                let c = cost::cost(&corr, rl, &cand, params.lambda_rgb);
                if c <= ne.cost {
                    accepted = Some((cand, c, xi.norm()));
                    break;
                }
                scale *= 0.5;
            }
            let Some((cand, c, step)) = accepted else { break };
            steps.push(StepRecord {
                level,
                cost_before: ne.cost,
                cost_after: c,
            });
            t = cand;
            if step < params.convergence_eps {
                break;
            }
        }
    }

    let (r0, c0) = (&reference.levels[0], &current.levels[0]);
    let mask0 = masks.as_ref().map(|m| &m[0]);
    let inliers = associate(r0, c0, &t, mask0, &assoc).len();
    let finite = t.translation.iter().chain(t.rotation.iter()).all(|x| x.is_finite());
    let converged = inliers >= min0 && finite;
    if !converged {
        t = inv_ref.compose(init);
    }
    TrackingResult {
        pose: if converged { reference_pose.compose(&t) } else { *init },
        residual_map: residual_map(r0, c0, &t, mask0),
        inlier_count: inliers,
        converged,
        iterations_used: steps.len(),
        steps,
    }
}

/// Estimates the camera → map pose of `current` against `reference`.
pub fn track(
    reference: &ReferenceFrame,
    current: &Frame,
    init: &Pose,
    mask: Option<&InvalidMask>,
    params: &TrackingParams,
) -> TrackingResult {
    let n = params.levels();
    let rp = Pyramid::new(reference.level(), n);
    let cp = Pyramid::from_frame(current, &reference.k, n);
    track_pyramids(&rp, &reference.pose, &cp, init, mask.map(|m| &m.bits), params)
}

#[derive(Clone, Debug)]
pub struct MapTracking {
    pub map_id: MapId,
    pub visible_pixels: usize,
    pub reference: ReferenceFrame,
    /// `None` when the map is not visible; its pose is then carried forward.
    pub result: Option<TrackingResult>,
}

impl MapTracking {
    pub fn visible(&self) -> bool {
        self.result.is_some()
    }
}

/// Stage one: every map with a previous pose is rendered there and, when
/// visible, tracked without any mask. Maps are processed in parallel.
pub fn track_all_maps(
    maps: &[SurfelMap],
    previous_poses: &BTreeMap<MapId, Pose>,
    current: &Frame,
    k: &Intrinsics,
    params: &TrackingParams,
) -> BTreeMap<MapId, MapTracking> {
    let cp = Pyramid::from_frame(current, k, params.levels());
    let object_params = params.for_object_maps();
    maps.par_iter()
        .filter_map(|m| {
            let prev = previous_poses.get(&m.id)?;
            let params = if m.is_static() { params } else { &object_params };
            let min_visible = params.min_visible_for(k);
            let reference = render_reference(m, prev, k);
            let visible_pixels = reference.valid_count();
            let result = (visible_pixels >= min_visible).then(|| {
                let rp = Pyramid::new(reference.level(), params.levels());
                track_pyramids(&rp, prev, &cp, prev, None, params)
            });
            Some((
                m.id,
                MapTracking {
                    map_id: m.id,
                    visible_pixels,
                    reference,
                    result,
                },
            ))
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect()
}

/// Stage two: re-runs static tracking from the stage-one pose with the
/// invalid mask excluded; falls back to the stage-one pose on failure.
pub fn refine_static_pose(
    static_reference: &ReferenceFrame,
    current: &Frame,
    stage1: &TrackingResult,
    invalid: &InvalidMask,
    params: &TrackingParams,
) -> TrackingResult {
    let refined = track(static_reference, current, &stage1.pose, Some(invalid), params);
    if refined.converged {
        refined
    } else {
        TrackingResult {
            pose: stage1.pose,
            converged: false,
            ..refined
        }
    }
}
