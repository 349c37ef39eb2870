//! TUM trajectory files: `timestamp tx ty tz qx qy qz qw`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub timestamp: f64,
    pub translation: Vec3,
    /// `(qx, qy, qz, qw)`, unit norm.
    pub quaternion: [f64; 4],
}

impl TrajectoryRecord {
    pub fn from_pose(timestamp: f64, pose: &Pose) -> Self {
        let q = pose.quaternion();
        Self {
            timestamp,
            translation: pose.translation,
            quaternion: [q.i, q.j, q.k, q.w],
        }
    }

    pub fn pose(&self) -> Pose {
        let [qx, qy, qz, qw] = self.quaternion;
        Pose::from_quaternion(self.translation, qx, qy, qz, qw)
    }
}

// `-0.000000` would break byte-level comparisons of otherwise identical files.
fn fmt6(x: f64) -> String {
    format!("{:.6}", x + 0.0).replace("-0.000000", "0.000000")
}

pub fn format_record(r: &TrajectoryRecord) -> String {
    let t = &r.translation;
    let q = &r.quaternion;
    [r.timestamp, t.x, t.y, t.z, q[0], q[1], q[2], q[3]]
        .iter()
        .map(|&x| fmt6(x))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn format_trajectory(records: &[TrajectoryRecord]) -> String {
    let mut out = String::new();
    for r in records {
        let _ = writeln!(out, "{}", format_record(r));
    }
    out
}

pub fn export_trajectory(path: impl AsRef<Path>, records: &[TrajectoryRecord]) -> Result<()> {
    let path = path.as_ref();
    if records.is_empty() {
        return Err(Error::InsufficientData("empty trajectory".into()));
    }
    let mut text = String::from("# timestamp tx ty tz qx qy qz qw\n");
    text.push_str(&format_trajectory(records));
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Parses a trajectory; quaternions are renormalized.
pub fn parse_trajectory(text: &str, path: &Path) -> Result<Vec<TrajectoryRecord>> {
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(str::parse::<f64>)
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(path, idx + 1, e.to_string()))?;
        if vals.len() != 8 || vals.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse(
                path,
                idx + 1,
                "expected `timestamp tx ty tz qx qy qz qw`",
            ));
        }
        let q = [vals[4], vals[5], vals[6], vals[7]];
        let n = q.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n < 1e-9 {
            return Err(Error::parse(path, idx + 1, "zero quaternion"));
        }
        out.push(TrajectoryRecord {
            timestamp: vals[0],
            translation: Vec3::new(vals[1], vals[2], vals[3]),
            quaternion: q.map(|x| x / n),
        });
    }
    Ok(out)
}

pub fn read_trajectory(path: impl AsRef<Path>) -> Result<Vec<TrajectoryRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_trajectory(&text, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{se3_exp, Twist};

    #[test]
    fn identity_line_format() {
        let r = TrajectoryRecord::from_pose(1.0, &Pose::identity());
        assert_eq!(
            format_record(&r),
            "1.000000 0.000000 0.000000 0.000000 0.000000 0.000000 0.000000 1.000000"
        );
    }

    #[test]
    fn export_reload_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.txt");
        let records: Vec<_> = (0..20)
            .map(|i| {
                let xi = Twist::new(
                    Vec3::new(0.01 * i as f64, -0.02, 0.3),
                    Vec3::new(0.1 * i as f64, 1.5, -0.25),
                );
                TrajectoryRecord::from_pose(1000.0 + i as f64 / 30.0, &se3_exp(&xi))
            })
            .collect();
        export_trajectory(&path, &records).unwrap();
        let back = read_trajectory(&path).unwrap();
        assert_eq!(back.len(), records.len());
        for (a, b) in records.iter().zip(&back) {
            assert!((a.timestamp - b.timestamp).abs() < 1e-6);
            assert!((a.translation - b.translation).abs().max() < 1e-6);
            for k in 0..4 {
                assert!((a.quaternion[k] - b.quaternion[k]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn empty_export_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        assert!(export_trajectory(dir.path().join("t.txt"), &[]).is_err());
    }

    #[test]
    fn export_to_missing_directory_names_path() {
        let r = TrajectoryRecord::from_pose(0.0, &Pose::identity());
        let err = export_trajectory("/nonexistent/dir/t.txt", &[r]).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/dir/t.txt"));
    }
}
