use nalgebra::Matrix3;

use crate::dataset::tum::associate;
use crate::dataset::TrajectoryRecord;
use crate::error::{Error, Result};
use crate::geometry::{Mat3, Pose, Vec3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AteReport {
    pub rmse: f64,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
    pub aligned: bool,
    pub pairs_used: usize,
}

impl AteReport {
    /// `key=value` lines.
    pub fn to_key_values(&self) -> String {
        format!(
            "rmse={:.6}\nmean={:.6}\nmedian={:.6}\nmax={:.6}\naligned={}\npairs_used={}\n",
            self.rmse, self.mean, self.median, self.max, self.aligned, self.pairs_used
        )
    }
}

/// Rotation and translation minimizing `Σ |R a_i + t − b_i|²` (no scale).
pub fn rigid_alignment(a: &[Vec3], b: &[Vec3]) -> Pose {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let ca = a.iter().sum::<Vec3>() / n;
    let cb = b.iter().sum::<Vec3>() / n;
    let mut cov = Matrix3::zeros();
    for (p, q) in a.iter().zip(b) {
        cov += (q - cb) * (p - ca).transpose();
    }
    let svd = cov.svd(true, true);
    let (u, vt) = (svd.u.expect("u"), svd.v_t.expect("v_t"));
    let d = (u * vt).determinant().signum();
    let r: Mat3 = u * Matrix3::from_diagonal(&Vec3::new(1.0, 1.0, if d == 0.0 { 1.0 } else { d })) * vt;
    Pose::new(r, cb - r * ca).renormalized()
}

/// Absolute trajectory error of `estimated` against `ground_truth`.
///
/// Timestamps are associated greedily within `max_assoc_gap`; with `align`
/// the estimate is first rigidly aligned to the ground truth.
pub fn ate(
    estimated: &[TrajectoryRecord],
    ground_truth: &[TrajectoryRecord],
    max_assoc_gap: f64,
    align: bool,
) -> Result<AteReport> {
    let te: Vec<f64> = estimated.iter().map(|r| r.timestamp).collect();
    let tg: Vec<f64> = ground_truth.iter().map(|r| r.timestamp).collect();
    let mut pairs = associate(&te, &tg, max_assoc_gap);
    pairs.sort_unstable();
    if pairs.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} associated pose pairs, need at least 2",
            pairs.len()
        )));
    }
    let e: Vec<Vec3> = pairs.iter().map(|&(i, _)| estimated[i].translation).collect();
    let g: Vec<Vec3> = pairs.iter().map(|&(_, j)| ground_truth[j].translation).collect();
    let t = if align {
        rigid_alignment(&e, &g)
    } else {
        Pose::identity()
    };
    let mut errors: Vec<f64> = e
        .iter()
        .zip(&g)
        .map(|(p, q)| (t.transform_point(p) - q).norm())
        .collect();
    let n = errors.len() as f64;
    let rmse = (errors.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
    let mean = errors.iter().sum::<f64>() / n;
    errors.sort_by(|a, b| a.total_cmp(b));
    let m = errors.len();
    let median = if m % 2 == 1 {
        errors[m / 2]
    } else {
        0.5 * (errors[m / 2 - 1] + errors[m / 2])
    };
    Ok(AteReport {
        rmse,
        mean,
        median,
        max: errors[m - 1],
        aligned: align,
        pairs_used: m,
    })
}

/// Aligned ATE.
pub fn ate_rmse(
    estimated: &[TrajectoryRecord],
    ground_truth: &[TrajectoryRecord],
    max_assoc_gap: f64,
) -> Result<AteReport> {
    ate(estimated, ground_truth, max_assoc_gap, true)
}
