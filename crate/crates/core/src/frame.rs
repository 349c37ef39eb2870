//! Per-frame derived geometry: intensity, vertex and normal maps.

use serde::{Deserialize, Serialize};

use crate::geometry::{Intrinsics, Vec3};
use crate::image::{Image, Mask};

pub type Rgb = [u8; 3];

/// Valid metric depth interval; readings outside it are treated as holes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthRange {
    pub min: f64,
    pub max: f64,
}

impl Default for DepthRange {
    fn default() -> Self {
        Self { min: 0.1, max: 6.0 }
    }
}

impl DepthRange {
    #[inline]
    pub fn contains(&self, d: f64) -> bool {
        d.is_finite() && d >= self.min && d <= self.max
    }
}

#[inline]
pub fn intensity_of(c: Rgb) -> f64 {
    (0.299 * c[0] as f64 + 0.587 * c[1] as f64 + 0.114 * c[2] as f64) / 255.0
}

/// Camera-frame vertices, unit normals and the mask of pixels where both are usable.
#[derive(Clone, Debug)]
pub struct VertexNormalMaps {
    pub vertices: Image<Vec3>,
    pub normals: Image<Vec3>,
    pub valid: Mask,
}

/// Neighbouring depths differing by more than this fraction of the centre
/// depth straddle a discontinuity; no normal is estimated there.
pub const MAX_RELATIVE_DEPTH_STEP: f64 = 0.05;

/// Computes vertex and normal maps from a metric depth image (0 marks holes).
///
/// Normals are the cross product of central differences of the vertex map,
/// flipped to face the camera. A pixel is valid only when it and its four
/// neighbours have depth, no neighbour jumps by more than
/// [`MAX_RELATIVE_DEPTH_STEP`], and the cross product is non-degenerate.
pub fn compute_vertex_normal_maps(depth: &Image<f64>, k: &Intrinsics) -> VertexNormalMaps {
    let (w, h) = depth.dims();
    let vertices = Image::from_fn_par(w, h, |u, v| {
        k.backproject(u as f64, v as f64, depth[(u, v)])
            .unwrap_or_else(Vec3::zeros)
    });
    let has = |u: usize, v: usize| depth[(u, v)] > 0.0;
    let normal_at = |u: usize, v: usize| -> Option<Vec3> {
        if u == 0 || v == 0 || u + 1 >= w || v + 1 >= h {
            return None;
        }
        if !(has(u, v) && has(u - 1, v) && has(u + 1, v) && has(u, v - 1) && has(u, v + 1)) {
            return None;
        }
        let z = depth[(u, v)];
        let jump = [(u - 1, v), (u + 1, v), (u, v - 1), (u, v + 1)]
            .iter()
            .any(|&(a, b)| (depth[(a, b)] - z).abs() > MAX_RELATIVE_DEPTH_STEP * z);
        if jump {
            return None;
        }
        let dx = vertices[(u + 1, v)] - vertices[(u - 1, v)];
        let dy = vertices[(u, v + 1)] - vertices[(u, v - 1)];
        let n = dx.cross(&dy);
        let len = n.norm();
        if !(len > 1e-12) {
            return None;
        }
        let n = n / len;
        Some(if n.dot(&vertices[(u, v)]) > 0.0 { -n } else { n })
    };
    let packed = Image::from_fn_par(w, h, |u, v| normal_at(u, v));
    let valid = packed.map(|n| n.is_some());
    let normals = packed.map(|n| n.unwrap_or_else(Vec3::zeros));
    VertexNormalMaps {
        vertices,
        normals,
        valid,
    }
}

/// One time-stamped RGB-D observation with its derived maps.
#[derive(Clone, Debug)]
pub struct Frame {
    pub timestamp: f64,
    pub rgb: Image<Rgb>,
    /// Metric depth; 0 where invalid or outside the depth range.
    pub depth: Image<f64>,
    pub intensity: Image<f64>,
    pub vertex_map: Image<Vec3>,
    pub normal_map: Image<Vec3>,
    pub valid_mask: Mask,
}

impl Frame {
    pub fn new(
        timestamp: f64,
        rgb: Image<Rgb>,
        depth: Image<f64>,
        k: &Intrinsics,
        range: DepthRange,
    ) -> crate::Result<Frame> {
        if !rgb.same_dims(&depth) {
            return Err(crate::Error::SizeMismatch {
                expected: depth.dims(),
                actual: rgb.dims(),
            });
        }
        if depth.dims() != (k.width, k.height) {
            return Err(crate::Error::SizeMismatch {
                expected: (k.width, k.height),
                actual: depth.dims(),
            });
        }
        let depth = depth.map(|&d| if range.contains(d) { d } else { 0.0 });
        let intensity = rgb.map(|&c| intensity_of(c));
        let maps = compute_vertex_normal_maps(&depth, k);
        Ok(Frame {
            timestamp,
            rgb,
            depth,
            intensity,
            vertex_map: maps.vertices,
            normal_map: maps.normals,
            valid_mask: maps.valid,
        })
    }

    pub fn width(&self) -> usize {
        self.depth.width()
    }

    pub fn height(&self) -> usize {
        self.depth.height()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_k() -> Intrinsics {
        Intrinsics::new(50.0, 50.0, 15.5, 11.5, 32, 24)
    }

    #[test]
    fn fronto_parallel_plane_normals() {
        let k = small_k();
        let depth = Image::filled(32, 24, 1.0);
        let m = compute_vertex_normal_maps(&depth, &k);
        for v in 1..23 {
            for u in 1..31 {
                assert!(m.valid[(u, v)]);
                assert!((m.normals[(u, v)] - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
                assert_eq!(m.vertices[(u, v)].z, 1.0);
            }
        }
        // borders have no central difference
        assert!(!m.valid[(0, 5)] && !m.valid[(31, 5)] && !m.valid[(5, 0)] && !m.valid[(5, 23)]);
    }

    #[test]
    fn depth_ramp_matches_analytic_surface_normal() {
        // Z(u) = d0 + s·u makes X quadratic in u, so central differences equal the
        // analytic tangents exactly and the normal must match their cross product.
        let k = small_k();
        let (d0, s) = (1.0, 0.01);
        let depth = Image::from_fn(32, 24, |u, _| d0 + s * u as f64);
        let m = compute_vertex_normal_maps(&depth, &k);
        for v in 1..23 {
            for u in 1..31 {
                let (uf, vf) = (u as f64, v as f64);
                let z = d0 + s * uf;
                let t_u = Vec3::new((z + (uf - k.cx) * s) / k.fx, (vf - k.cy) * s / k.fy, s);
                let t_v = Vec3::new(0.0, z / k.fy, 0.0);
                let mut n = t_u.cross(&t_v).normalize();
                if n.dot(&m.vertices[(u, v)]) > 0.0 {
                    n = -n;
                }
                assert!((m.normals[(u, v)] - n).norm() < 1e-9, "pixel ({u},{v})");
            }
        }
        // at the principal column the tilt about y is atan of the metric slope s·fx/Z
        let (u, v) = (16usize, 12usize);
        let n = m.normals[(u, v)];
        let z = d0 + s * u as f64;
        let tilt = n.x.atan2(-n.z);
        let expected = ((s * k.fx) / (z + (u as f64 - k.cx) * s)).atan();
        assert!((tilt - expected).abs() < 1e-9, "{tilt} vs {expected}");
    }

    #[test]
    fn hole_invalidates_its_four_neighbourhood() {
        let k = small_k();
        let mut depth = Image::filled(32, 24, 1.0);
        depth[(10, 10)] = 0.0;
        let m = compute_vertex_normal_maps(&depth, &k);
        for (u, v) in [(10, 10), (9, 10), (11, 10), (10, 9), (10, 11)] {
            assert!(!m.valid[(u, v)], "({u},{v}) should be invalid");
        }
        assert!(m.valid[(9, 9)] && m.valid[(12, 10)]);
    }

    #[test]
    fn frame_clips_depth_range_and_converts_intensity() {
        let k = small_k();
        let mut depth = Image::filled(32, 24, 1.0);
        depth[(3, 3)] = 0.05;
        depth[(4, 4)] = 7.0;
        let rgb = Image::filled(32, 24, [255u8, 255, 255]);
        let f = Frame::new(0.0, rgb, depth, &k, DepthRange::default()).unwrap();
        assert_eq!(f.depth[(3, 3)], 0.0);
        assert_eq!(f.depth[(4, 4)], 0.0);
        assert!((f.intensity[(0, 0)] - 1.0).abs() < 1e-12);
        for (i, &ok) in f.valid_mask.data().iter().enumerate() {
            if ok {
                assert!((f.normal_map.data()[i].norm() - 1.0).abs() < 1e-6);
                assert_eq!(f.vertex_map.data()[i].z, f.depth.data()[i]);
            }
        }
    }

    #[test]
    fn frame_rejects_mismatched_sizes() {
        let k = small_k();
        let r = Frame::new(
            0.0,
            Image::filled(31, 24, [0u8; 3]),
            Image::filled(32, 24, 1.0),
            &k,
            DepthRange::default(),
        );
        assert!(r.is_err());
    }
}
