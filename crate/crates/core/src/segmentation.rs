//! Geometric segmentation of a depth frame: discontinuity edges, then
//! connected components over the remaining surface pixels.

use serde::{Deserialize, Serialize};

use crate::frame::Frame;
use crate::geometry::Vec3;
use crate::image::{Image, Mask};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationParams {
    /// Point-to-plane distance above which two neighbours are separated (meters).
    pub theta_dist: f64,
    /// Normal angle above which two neighbours are separated (radians).
    pub theta_angle: f64,
    /// Components smaller than this are left unlabelled, in VGA pixels;
    /// [`segment_frame`] scales it to the frame resolution.
    pub min_segment_area: usize,
}

impl Default for SegmentationParams {
    fn default() -> Self {
        Self {
            theta_dist: 0.01,
            theta_angle: 20f64.to_radians(),
            min_segment_area: 300,
        }
    }
}

/// `true` marks a geometric edge (or an invalid pixel).
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeMask {
    pub bits: Mask,
}

const NEIGHBOURS_8: [(i64, i64); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// Marks pixel `p` as an edge if some valid 8-neighbour `q` has
/// `|(v_q − v_p)·n_p| > theta_dist` or `n_p·n_q < cos(theta_angle)`.
/// Invalid pixels are edges.
pub fn compute_edge_mask_from_maps(
    vertices: &Image<Vec3>,
    normals: &Image<Vec3>,
    valid: &Mask,
    theta_dist: f64,
    theta_angle: f64,
) -> EdgeMask {
    let (w, h) = valid.dims();
    let cos_t = theta_angle.cos();
    let bits = Image::from_fn_par(w, h, |u, v| {
        if !valid[(u, v)] {
            return true;
        }
        let vp = vertices[(u, v)];
        let np = normals[(u, v)];
        NEIGHBOURS_8.iter().any(|&(du, dv)| {
            let (qu, qv) = (u as i64 + du, v as i64 + dv);
            if !valid.contains(qu, qv) {
                return false;
            }
            let q = (qu as usize, qv as usize);
            if !valid[q] {
                return false;
            }
            (vertices[q] - vp).dot(&np).abs() > theta_dist || np.dot(&normals[q]) < cos_t
        })
    });
    EdgeMask { bits }
}

pub fn compute_edge_mask(frame: &Frame, theta_dist: f64, theta_angle: f64) -> EdgeMask {
    compute_edge_mask_from_maps(
        &frame.vertex_map,
        &frame.normal_map,
        &frame.valid_mask,
        theta_dist,
        theta_angle,
    )
}

/// Per-pixel segment labels; 0 is unsegmented (edge, invalid or too small).
#[derive(Clone, Debug, PartialEq)]
pub struct SegmentsMask {
    pub labels: Image<u32>,
    pub segment_count: usize,
    /// `areas[l - 1]` is the pixel count of label `l`.
    pub areas: Vec<usize>,
}

impl SegmentsMask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            labels: Image::filled(width, height, 0),
            segment_count: 0,
            areas: Vec::new(),
        }
    }

    pub fn area(&self, label: u32) -> usize {
        if label == 0 {
            0
        } else {
            self.areas[label as usize - 1]
        }
    }

    pub fn width(&self) -> usize {
        self.labels.width()
    }

    pub fn height(&self) -> usize {
        self.labels.height()
    }
}

fn find(parent: &mut [u32], mut x: u32) -> u32 {
    while parent[x as usize] != x {
        let p = parent[x as usize];
        parent[x as usize] = parent[p as usize];
        x = p;
    }
    x
}

/// 4-connected components of the non-edge pixels.
///
/// Components below `min_segment_area` get label 0; the rest are numbered from
/// 1 by decreasing area (ties by first pixel in raster order).
pub fn connected_components(edges: &EdgeMask, min_segment_area: usize) -> SegmentsMask {
    let bits = &edges.bits;
    let (w, h) = bits.dims();
    const NONE: u32 = u32::MAX;
    let mut provisional = vec![NONE; w * h];
    let mut parent: Vec<u32> = Vec::new();
    for v in 0..h {
        for u in 0..w {
            let i = v * w + u;
            if bits.data()[i] {
                continue;
            }
            let left = if u > 0 { provisional[i - 1] } else { NONE };
            let up = if v > 0 { provisional[i - w] } else { NONE };
            provisional[i] = match (left != NONE, up != NONE) {
                (false, false) => {
                    parent.push(parent.len() as u32);
                    parent.len() as u32 - 1
                }
                (true, false) => left,
                (false, true) => up,
                (true, true) => {
                    let (a, b) = (find(&mut parent, left), find(&mut parent, up));
                    if a != b {
                        let (lo, hi) = (a.min(b), a.max(b));
                        parent[hi as usize] = lo;
                    }
                    left
                }
            };
        }
    }
    // Resolve roots, then measure each component and where it starts.
    let mut root_area = vec![0usize; parent.len()];
    let mut root_first = vec![usize::MAX; parent.len()];
    for (i, p) in provisional.iter_mut().enumerate() {
        if *p != NONE {
            let r = find(&mut parent, *p);
            *p = r;
            root_area[r as usize] += 1;
            root_first[r as usize] = root_first[r as usize].min(i);
        }
    }
    let mut kept: Vec<u32> = (0..parent.len() as u32)
        .filter(|&r| root_area[r as usize] > 0 && root_area[r as usize] >= min_segment_area.max(1))
        .collect();
    kept.sort_by(|&a, &b| {
        root_area[b as usize]
            .cmp(&root_area[a as usize])
            .then(root_first[a as usize].cmp(&root_first[b as usize]))
    });
    let mut label_of_root = vec![0u32; parent.len()];
    for (k, &r) in kept.iter().enumerate() {
        label_of_root[r as usize] = k as u32 + 1;
    }
    let labels = provisional
        .iter()
        .map(|&p| if p == NONE { 0 } else { label_of_root[p as usize] })
        .collect();
    SegmentsMask {
        labels: Image::from_vec(w, h, labels),
        segment_count: kept.len(),
        areas: kept.iter().map(|&r| root_area[r as usize]).collect(),
    }
}

/// Edge mask plus labelling for one frame.
pub fn segment_frame(frame: &Frame, params: &SegmentationParams) -> (EdgeMask, SegmentsMask) {
    let edges = compute_edge_mask(frame, params.theta_dist, params.theta_angle);
    let ratio = (frame.width() * frame.height()) as f64 / (640.0 * 480.0);
    let min_area = ((params.min_segment_area as f64 * ratio).round() as usize).max(1);
    let segments = connected_components(&edges, min_area);
    (edges, segments)
}
