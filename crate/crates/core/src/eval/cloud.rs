use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec3};

use super::ate::rigid_alignment;
use super::kdtree::KdTree;

pub const DEFAULT_INLIER_THRESHOLD: f64 = 0.01;
pub const ICP_ITERATIONS: usize = 30;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CloudCompareReport {
    /// Fraction of reconstructed points within `threshold` of the ground truth.
    pub accuracy: f64,
    /// Fraction of ground-truth points within `threshold` of the reconstruction.
    pub completeness: f64,
    pub threshold: f64,
    /// Transform applied to the reconstruction before measuring.
    pub alignment: Pose,
}

impl CloudCompareReport {
    pub fn to_key_values(&self) -> String {
        format!(
            "accuracy={:.6}\ncompleteness={:.6}\nthreshold={:.6}\n",
            self.accuracy, self.completeness, self.threshold
        )
    }
}

fn inlier_fraction(queries: &[Vec3], tree: &KdTree, threshold: f64) -> f64 {
    let t2 = threshold * threshold;
    let inliers: usize = queries
        .par_iter()
        .map(|q| tree.nearest(q).is_some_and(|(_, d)| d <= t2) as usize)
        .sum();
    inliers as f64 / queries.len() as f64
}

/// Point-to-point ICP of `source` onto the points of `target_tree`.
pub fn icp_point_to_point(
    source: &[Vec3],
    target: &[Vec3],
    target_tree: &KdTree,
    iterations: usize,
) -> Pose {
    let mut pose = Pose::identity();
    for _ in 0..iterations {
        let moved: Vec<Vec3> = source.par_iter().map(|p| pose.transform_point(p)).collect();
        let matched: Vec<Vec3> = moved
            .par_iter()
            .map(|p| target[target_tree.nearest(p).expect("nonempty").0])
            .collect();
        let step = rigid_alignment(&moved, &matched);
        pose = step.compose(&pose).renormalized();
        if step.translation.norm() < 1e-9 && step.rotation_angle() < 1e-9 {
            break;
        }
    }
    pose
}

pub fn cloud_compare(
    reconstructed: &[Vec3],
    ground_truth: &[Vec3],
    inlier_threshold: f64,
    align: bool,
) -> Result<CloudCompareReport> {
    if reconstructed.is_empty() || ground_truth.is_empty() {
        return Err(Error::InsufficientData("cloud comparison needs two nonempty clouds".into()));
    }
    let gt_tree = KdTree::new(ground_truth);
    let alignment = if align {
        icp_point_to_point(reconstructed, ground_truth, &gt_tree, ICP_ITERATIONS)
    } else {
        Pose::identity()
    };
    let recon: Vec<Vec3> = reconstructed.iter().map(|p| alignment.transform_point(p)).collect();
    let recon_tree = KdTree::new(&recon);
    Ok(CloudCompareReport {
        accuracy: inlier_fraction(&recon, &gt_tree, inlier_threshold),
        completeness: inlier_fraction(ground_truth, &recon_tree, inlier_threshold),
        threshold: inlier_threshold,
        alignment,
    })
}
