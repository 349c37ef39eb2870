//! Detect-while-segment: detection boxes claim whole geometric segments.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{BBox, Detection};
use crate::image::{Image, Mask};
use crate::segmentation::SegmentsMask;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OverlapMetric {
    /// `|segment ∩ box| / |segment ∪ box|`
    Iou,
    /// `|segment ∩ box| / |segment|`
    IntersectionOverSegment,
}

impl OverlapMetric {
    pub fn score(self, intersection: usize, segment_area: usize, box_area: usize) -> f64 {
        let i = intersection as f64;
        match self {
            OverlapMetric::Iou => i / (segment_area + box_area - intersection) as f64,
            OverlapMetric::IntersectionOverSegment => i / segment_area as f64,
        }
    }
}

impl FromStr for OverlapMetric {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "iou" => Ok(OverlapMetric::Iou),
            "intersection_over_segment" | "ios" => Ok(OverlapMetric::IntersectionOverSegment),
            other => Err(format!(
                "unknown overlap metric `{other}` (expected iou or intersection_over_segment)"
            )),
        }
    }
}

impl fmt::Display for OverlapMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OverlapMetric::Iou => "iou",
            OverlapMetric::IntersectionOverSegment => "intersection_over_segment",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceParams {
    pub overlap_threshold: f64,
    pub metric: OverlapMetric,
    pub allow_empty_instances: bool,
}

impl Default for InstanceParams {
    fn default() -> Self {
        Self {
            overlap_threshold: 0.5,
            metric: OverlapMetric::IntersectionOverSegment,
            allow_empty_instances: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub instance_id: u32,
    pub class_id: i64,
    pub class_name: String,
    pub rigid: bool,
    pub score: f64,
    pub bbox: BBox,
    pub pixel_count: usize,
}

/// Per-pixel instance ids (0 = background) and the instance table.
#[derive(Clone, Debug, PartialEq)]
pub struct ObjectSegmentsMask {
    pub instance_labels: Image<u32>,
    pub instances: Vec<Instance>,
}

impl ObjectSegmentsMask {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            instance_labels: Image::filled(width, height, 0),
            instances: Vec::new(),
        }
    }

    pub fn instance(&self, id: u32) -> Option<&Instance> {
        self.instances.iter().find(|i| i.instance_id == id)
    }

    /// Union of all instance pixels.
    pub fn support(&self) -> Mask {
        self.instance_labels.map(|&l| l != 0)
    }

    pub fn instance_mask(&self, id: u32) -> Mask {
        self.instance_labels.map(|&l| l == id)
    }

    /// Keeps the instances for which `keep` holds; other pixels become background.
    pub fn filter(&self, keep: impl Fn(&Instance) -> bool) -> ObjectSegmentsMask {
        let instances: Vec<Instance> = self.instances.iter().filter(|i| keep(i)).cloned().collect();
        let max_id = self.instances.iter().map(|i| i.instance_id).max().unwrap_or(0) as usize;
        let mut kept = vec![false; max_id + 1];
        for i in &instances {
            kept[i.instance_id as usize] = true;
        }
        ObjectSegmentsMask {
            instance_labels: self
                .instance_labels
                .map(|&l| if kept[l as usize] { l } else { 0 }),
            instances,
        }
    }
}

/// Processing order: ascending box area, then higher score, then input order.
pub fn detection_order(detections: &[Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..detections.len()).collect();
    order.sort_by(|&a, &b| {
        let (da, db) = (&detections[a], &detections[b]);
        da.bbox
            .area()
            .cmp(&db.bbox.area())
            .then(db.score.total_cmp(&da.score))
            .then(a.cmp(&b))
    });
    order
}

/// Assigns whole segments to detection boxes.
///
/// A segment goes to the first box (in [`detection_order`]) that overlaps it
/// with a score of at least `overlap_threshold`. Instance ids follow that order,
/// counting only instances that keep at least one pixel unless
/// `allow_empty_instances` is set.
pub fn assign_detections(
    segments: &SegmentsMask,
    detections: &[Detection],
    params: &InstanceParams,
) -> ObjectSegmentsMask {
    let (w, h) = segments.labels.dims();
    let n_seg = segments.segment_count;
    let mut owner = vec![0u32; n_seg + 1];
    let mut instances = Vec::new();
    let mut counts = vec![0usize; n_seg + 1];
    for k in detection_order(detections) {
        let det = &detections[k];
        let b = det.bbox;
        counts.iter_mut().for_each(|c| *c = 0);
        for v in b.y..(b.y + b.h).min(h) {
            let row = segments.labels.row(v);
            for &l in &row[b.x.min(w)..(b.x + b.w).min(w)] {
                counts[l as usize] += 1;
            }
        }
        let id = instances.len() as u32 + 1;
        let mut pixel_count = 0;
        for s in 1..=n_seg {
            if owner[s] != 0 || counts[s] == 0 {
                continue;
            }
            let score = params.metric.score(counts[s], segments.areas[s - 1], b.area());
            if score >= params.overlap_threshold {
                owner[s] = id;
                pixel_count += segments.areas[s - 1];
            }
        }
        if pixel_count > 0 || params.allow_empty_instances {
            instances.push(Instance {
                instance_id: id,
                class_id: det.class_id,
                class_name: det.class_name.clone(),
                rigid: det.rigid,
                score: det.score,
                bbox: b,
                pixel_count,
            });
        }
    }
    ObjectSegmentsMask {
        instance_labels: segments.labels.map(|&l| owner[l as usize]),
        instances,
    }
}

/// Splits into (rigid, non-rigid) masks by each instance's rigid flag.
pub fn split_rigid_nonrigid(mask: &ObjectSegmentsMask) -> (ObjectSegmentsMask, ObjectSegmentsMask) {
    (mask.filter(|i| i.rigid), mask.filter(|i| !i.rigid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::segmentation::{connected_components, EdgeMask};
    use proptest::prelude::*;

    fn det(name: &str, score: f64, x: usize, y: usize, w: usize, h: usize) -> Detection {
        Detection {
            class_id: 0,
            class_name: name.into(),
            score,
            bbox: BBox { x, y, w, h },
            rigid: name != "person",
        }
    }

    /// One 10×10 segment at (5..15, 5..15) on a 30×30 image.
    fn square_segment() -> SegmentsMask {
        let labels = Image::from_fn(30, 30, |u, v| {
            ((5..15).contains(&u) && (5..15).contains(&v)) as u32
        });
        SegmentsMask { labels, segment_count: 1, areas: vec![100] }
    }

    #[test]
    fn segment_inside_box_is_assigned() {
        let s = square_segment();
        let m = assign_detections(&s, &[det("car", 0.9, 0, 0, 20, 20)], &InstanceParams::default());
        assert_eq!(m.instances.len(), 1);
        assert_eq!(m.instances[0].pixel_count, 100);
        assert_eq!(m.instance_labels[(10, 10)], 1);
    }

    #[test]
    fn smaller_box_wins() {
        let s = square_segment();
        let dets = [det("chair", 0.9, 0, 0, 30, 30), det("cup", 0.9, 4, 4, 12, 12)];
        let m = assign_detections(&s, &dets, &InstanceParams::default());
        assert_eq!(m.instances.len(), 1);
        assert_eq!(m.instances[0].class_name, "cup");
    }

    #[test]
    fn below_threshold_stays_background() {
        let s = square_segment();
        // box covers 3 of the 10 columns → 0.3 of the segment
        let m = assign_detections(&s, &[det("car", 0.9, 0, 0, 8, 30)], &InstanceParams::default());
        assert!(m.instances.is_empty());
        assert!(m.instance_labels.data().iter().all(|&l| l == 0));
        let empty = InstanceParams { allow_empty_instances: true, ..Default::default() };
        let m = assign_detections(&s, &[det("car", 0.9, 0, 0, 8, 30)], &empty);
        assert_eq!(m.instances.len(), 1);
        assert_eq!(m.instances[0].pixel_count, 0);
    }

    #[test]
    fn threshold_one_accepts_full_containment_only() {
        let s = square_segment();
        let at = |t: f64, w: usize| {
            let p = InstanceParams { overlap_threshold: t, ..Default::default() };
            assign_detections(&s, &[det("car", 0.9, 0, 0, w, 30)], &p).instances.len()
        };
        assert_eq!(at(1.0, 20), 1);
        assert_eq!(at(1.0, 14), 0);
        assert_eq!(at(1.0 + 1e-9, 20), 0);
    }

    #[test]
    fn literal_iou_rejects_small_segment_in_large_box() {
        let s = square_segment();
        let p = InstanceParams { metric: OverlapMetric::Iou, ..Default::default() };
        assert!(assign_detections(&s, &[det("car", 0.9, 0, 0, 30, 30)], &p).instances.is_empty());
        assert_eq!(assign_detections(&s, &[det("car", 0.9, 5, 5, 10, 10)], &p).instances.len(), 1);
    }

    #[test]
    fn split_partitions_support() {
        let bits = Image::from_fn(40, 20, |u, _| u == 20);
        let s = connected_components(&EdgeMask { bits }, 10);
        let dets = [det("car", 0.9, 0, 0, 20, 20), det("person", 0.8, 21, 0, 19, 20)];
        let m = assign_detections(&s, &dets, &InstanceParams::default());
        let (r, n) = split_rigid_nonrigid(&m);
        assert_eq!(r.instances.len(), 1);
        assert_eq!(r.instances[0].class_name, "car");
        assert_eq!(n.instances[0].class_name, "person");
        assert_eq!(r.support().intersection_count(&n.support()), 0);
        assert_eq!(r.support().union(&n.support()), m.support());
        assert_eq!(r.support().count() + n.support().count(), m.support().count());
    }

    #[test]
    fn metric_names_round_trip() {
        for m in [OverlapMetric::Iou, OverlapMetric::IntersectionOverSegment] {
            assert_eq!(m.to_string().parse::<OverlapMetric>().unwrap(), m);
        }
        assert!("dice".parse::<OverlapMetric>().is_err());
    }

    proptest! {
        #[test]
        fn instances_are_disjoint_and_inside_segments(
            seed in any::<u64>(), n_boxes in 0usize..6,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let bits = Image::from_fn(32, 32, |_, _| rng.random_bool(0.35));
            let s = connected_components(&EdgeMask { bits }, 1);
            let dets: Vec<Detection> = (0..n_boxes).map(|_| {
                let x = rng.random_range(0..31);
                let y = rng.random_range(0..31);
                det("car", rng.random_range(0.5..1.0), x, y,
                    rng.random_range(1..=32 - x), rng.random_range(1..=32 - y))
            }).collect();
            let m = assign_detections(&s, &dets, &InstanceParams::default());
            let again = assign_detections(&s, &dets, &InstanceParams::default());
            prop_assert_eq!(&m, &again);
            for (i, &l) in m.instance_labels.data().iter().enumerate() {
                if l != 0 {
                    prop_assert!(s.labels.data()[i] != 0);
                }
            }
            for inst in &m.instances {
                let n = m.instance_labels.data().iter().filter(|&&l| l == inst.instance_id).count();
                prop_assert_eq!(n, inst.pixel_count);
            }
        }
    }
}
