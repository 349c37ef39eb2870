//! Unknown-object motion segmentation from stage-one ICP residuals.

use serde::{Deserialize, Serialize};

use crate::image::{Image, Mask};
use crate::segmentation::SegmentsMask;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionParams {
    /// Below this dynamic centroid (squared meters) the scene counts as static.
    pub min_dynamic_centroid: f64,
    /// Fraction of a segment that must be dynamic for the whole segment to be.
    pub overlap_threshold: f64,
    pub max_samples: usize,
}

impl Default for MotionParams {
    fn default() -> Self {
        Self {
            min_dynamic_centroid: 2.5e-3,
            overlap_threshold: 0.3,
            max_samples: 20_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KMeans2 {
    pub static_centroid: f64,
    pub dynamic_centroid: f64,
    /// `true` for members of the dynamic (larger-centroid) cluster.
    pub labels: Vec<bool>,
    /// Within-cluster sum of squared deviations.
    pub sse: f64,
    /// Fewer than two distinct values: no split exists.
    pub degenerate: bool,
}

/// Optimal two-cluster split of scalar samples.
///
/// In one dimension an optimal 2-means partition is a threshold between two
/// consecutive sorted values, so every such threshold is scanned with running
/// sums. Ties keep the lowest threshold.
pub fn kmeans2(values: &[f64]) -> KMeans2 {
    let n = values.len();
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    if n < 2 || sorted[0] == sorted[n - 1] {
        let (mean, sse) = welford(&sorted);
        return KMeans2 {
            static_centroid: mean,
            dynamic_centroid: mean,
            labels: vec![false; n],
            sse,
            degenerate: true,
        };
    }

    // prefix[i] = (mean, M2) of sorted[..i]; suffix[i] of sorted[i..]
    let running = |it: &mut dyn Iterator<Item = f64>| {
        let mut out = vec![(0.0, 0.0)];
        let (mut mean, mut m2, mut cnt) = (0.0, 0.0, 0.0);
        for x in it {
            cnt += 1.0;
            let d = x - mean;
            mean += d / cnt;
            m2 += d * (x - mean);
            out.push((mean, m2));
        }
        out
    };
    let prefix = running(&mut sorted.iter().copied());
    let mut suffix = running(&mut sorted.iter().rev().copied());
    suffix.reverse();

    let mut best: Option<(f64, usize)> = None;
    for i in 1..n {
        if sorted[i - 1] == sorted[i] {
            continue;
        }
        let sse = prefix[i].1 + suffix[i].1;
        if best.is_none_or(|(b, _)| sse < b) {
            best = Some((sse, i));
        }
    }
    let (sse, split) = best.expect("at least two distinct values");
    let threshold = sorted[split - 1];
    KMeans2 {
        static_centroid: prefix[split].0,
        dynamic_centroid: suffix[split].0,
        labels: values.iter().map(|&x| x > threshold).collect(),
        sse,
        degenerate: false,
    }
}

fn welford(xs: &[f64]) -> (f64, f64) {
    let (mut mean, mut m2) = (0.0, 0.0);
    for (i, &x) in xs.iter().enumerate() {
        let d = x - mean;
        mean += d / (i + 1) as f64;
        m2 += d * (x - mean);
    }
    (mean, m2)
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinaryMotionMask {
    pub bits: Mask,
    pub static_centroid: f64,
    pub dynamic_centroid: f64,
    /// Whether a dynamic cluster was accepted at all.
    pub dynamic: bool,
}

/// Clusters the residuals of `valid` pixels (negative residuals are ignored)
/// and marks the pixels nearer the dynamic centroid.
pub fn binary_motion_mask(
    residual_map: &Image<f64>,
    valid: &Mask,
    params: &MotionParams,
) -> BinaryMotionMask {
    let (w, h) = residual_map.dims();
    let all: Vec<f64> = residual_map
        .data()
        .iter()
        .zip(valid.data())
        .filter(|(&r, &ok)| ok && r >= 0.0)
        .map(|(&r, _)| r)
        .collect();
    let sample: Vec<f64> = if all.len() > params.max_samples {
        (0..params.max_samples)
            .map(|i| all[i * all.len() / params.max_samples])
            .collect()
    } else {
        all
    };
    let km = kmeans2(&sample);
    let empty = BinaryMotionMask {
        bits: Mask::empty(w, h),
        static_centroid: km.static_centroid,
        dynamic_centroid: km.dynamic_centroid,
        dynamic: false,
    };
    if km.degenerate || km.dynamic_centroid < params.min_dynamic_centroid {
        return empty;
    }
    let mid = 0.5 * (km.static_centroid + km.dynamic_centroid);
    let bits = Image::from_fn(w, h, |u, v| {
        valid[(u, v)] && residual_map[(u, v)] >= 0.0 && residual_map[(u, v)] > mid
    });
    BinaryMotionMask {
        bits,
        dynamic: true,
        ..empty
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MotionSegmentsMask {
    pub bits: Mask,
    /// Segment labels marked dynamic, ascending.
    pub labels: Vec<u32>,
}

/// Completes the binary mask to whole geometric segments: a segment is dynamic
/// iff at least `overlap_threshold` of its pixels are. Label 0 is never marked.
pub fn motion_segments(
    binary: &Mask,
    segments: &SegmentsMask,
    overlap_threshold: f64,
) -> MotionSegmentsMask {
    let mut hits = vec![0usize; segments.segment_count + 1];
    for (&b, &l) in binary.data().iter().zip(segments.labels.data()) {
        if b {
            hits[l as usize] += 1;
        }
    }
    let marked: Vec<bool> = (0..=segments.segment_count)
        .map(|l| {
            l != 0
                && hits[l] > 0
                && hits[l] as f64 / segments.areas[l - 1] as f64 >= overlap_threshold
        })
        .collect();
    MotionSegmentsMask {
        bits: segments.labels.map(|&l| marked[l as usize]),
        labels: (1..=segments.segment_count as u32)
            .filter(|&l| marked[l as usize])
            .collect(),
    }
}
