//! Surfel splatting into a camera view.

use rayon::prelude::*;

use crate::frame::{intensity_of, Rgb};
use crate::geometry::{Intrinsics, Pose, Vec3};
use crate::image::{Image, Mask};
use crate::mapping::{Surfel, SurfelMap};

pub const NO_SURFEL: u32 = u32::MAX;

const NEAR_PLANE: f64 = 1e-3;

/// A z-buffered view of a surfel map, in camera coordinates.
#[derive(Clone, Debug)]
pub struct RenderedView {
    pub depth: Image<f64>,
    pub vertices: Image<Vec3>,
    pub normals: Image<Vec3>,
    pub colors: Image<Rgb>,
    /// Index of the front surfel per pixel, [`NO_SURFEL`] where empty.
    pub index: Image<u32>,
    pub valid: Mask,
}

struct Footprint {
    idx: u32,
    centre: Vec3,
    normal: Vec3,
    radius: f64,
    u0: usize,
    u1: usize,
    v0: usize,
    v1: usize,
    /// Pixel nearest to the projected centre; always drawn.
    cu: usize,
    cv: usize,
}

fn footprint(idx: usize, s: &Surfel, world_to_cam: &Pose, k: &Intrinsics) -> Option<Footprint> {
    let p = world_to_cam.transform_point(&s.position);
    if p.z <= NEAR_PLANE {
        return None;
    }
    let mut n = world_to_cam.transform_vector(&s.normal);
    if n.dot(&p) > 0.0 {
        n = -n;
    }
    let (x, y) = k.project(&p)?;
    let rpx = s.radius * k.fx.max(k.fy) / p.z + 0.5;
    let (w, h) = (k.width as f64, k.height as f64);
    if x + rpx < -0.5 || y + rpx < -0.5 || x - rpx > w - 0.5 || y - rpx > h - 0.5 {
        return None;
    }
    let clamp = |a: f64, hi: f64| a.clamp(0.0, hi - 1.0) as usize;
    let (cx, cy) = (x.round(), y.round());
    let centre_inside = cx >= 0.0 && cy >= 0.0 && cx < w && cy < h;
    Some(Footprint {
        idx: idx as u32,
        centre: p,
        normal: n,
        radius: s.radius,
        u0: clamp((x - rpx).floor(), w),
        u1: clamp((x + rpx).ceil(), w),
        v0: clamp((y - rpx).floor(), h),
        v1: clamp((y + rpx).ceil(), h),
        cu: if centre_inside { cx as usize } else { usize::MAX },
        cv: if centre_inside { cy as usize } else { usize::MAX },
    })
}

/// Depth along the pixel ray where it meets the surfel disk, if it does.
#[inline]
fn hit_depth(f: &Footprint, ray: &Vec3, force: bool) -> Option<f64> {
    let denom = f.normal.dot(ray);
    if denom.abs() < 1e-6 {
        return force.then_some(f.centre.z);
    }
    let t = f.normal.dot(&f.centre) / denom;
    if t <= NEAR_PLANE {
        return force.then_some(f.centre.z);
    }
    if force || (ray * t - f.centre).norm_squared() <= f.radius * f.radius {
        Some(t)
    } else {
        None
    }
}

const BAND_ROWS: usize = 16;

/// Splats every surfel of `map` as a disk seen from `pose` (camera → map);
/// the nearest hit wins, ties going to the lower surfel index.
pub fn render_map(map: &SurfelMap, pose: &Pose, k: &Intrinsics) -> RenderedView {
    render_surfels(map.surfels(), pose, k)
}

pub fn render_surfels(surfels: &[Surfel], pose: &Pose, k: &Intrinsics) -> RenderedView {
    let (w, h) = (k.width, k.height);
    let world_to_cam = pose.inverse();
    let feet: Vec<Footprint> = surfels
        .par_iter()
        .enumerate()
        .filter_map(|(i, s)| footprint(i, s, &world_to_cam, k))
        .collect();

    let mut depth = vec![f64::INFINITY; w * h];
    let mut index = vec![NO_SURFEL; w * h];
    depth
        .par_chunks_mut(w * BAND_ROWS)
        .zip(index.par_chunks_mut(w * BAND_ROWS))
        .enumerate()
        .for_each(|(band, (zbuf, ibuf))| {
            let vb0 = band * BAND_ROWS;
            let vb1 = vb0 + zbuf.len() / w;
            for f in &feet {
                if f.v1 < vb0 || f.v0 >= vb1 {
                    continue;
                }
                for v in f.v0.max(vb0)..=f.v1.min(vb1 - 1) {
                    for u in f.u0..=f.u1 {
                        let ray = k.ray(u as f64, v as f64);
                        let force = u == f.cu && v == f.cv;
                        if let Some(t) = hit_depth(f, &ray, force) {
                            let o = (v - vb0) * w + u;
                            if t < zbuf[o] {
                                zbuf[o] = t;
                                ibuf[o] = f.idx;
                            }
                        }
                    }
                }
            }
        });

    let valid = Image::from_vec(w, h, index.iter().map(|&i| i != NO_SURFEL).collect());
    let index = Image::from_vec(w, h, index);
    let depth = Image::from_vec(w, h, depth).map(|&d| if d.is_finite() { d } else { 0.0 });
    let vertices = Image::from_fn(w, h, |u, v| {
        let d = depth[(u, v)];
        if d > 0.0 {
            k.ray(u as f64, v as f64) * d
        } else {
            Vec3::zeros()
        }
    });
    let normals = Image::from_fn(w, h, |u, v| {
        let i = index[(u, v)];
        if i == NO_SURFEL {
            return Vec3::zeros();
        }
        let n = world_to_cam.transform_vector(&surfels[i as usize].normal);
        if n.dot(&vertices[(u, v)]) > 0.0 {
            -n
        } else {
            n
        }
    });
    let colors = index.map(|&i| if i == NO_SURFEL { [0; 3] } else { surfels[i as usize].color });
    RenderedView {
        depth,
        vertices,
        normals,
        colors,
        index,
        valid,
    }
}

impl RenderedView {
    pub fn intensity(&self) -> Image<f64> {
        self.colors.map(|&c| intensity_of(c))
    }
}

/// Per-pixel index of the nearest surfel whose centre projects there.
///
/// Only surfels for which `eligible` holds are considered.
pub fn centre_index_map(
    surfels: &[Surfel],
    pose: &Pose,
    k: &Intrinsics,
    eligible: impl Fn(&Surfel) -> bool + Sync,
) -> Image<u32> {
    let world_to_cam = pose.inverse();
    let hits: Vec<(usize, f64, u32)> = surfels
        .par_iter()
        .enumerate()
        .filter_map(|(i, s)| {
            if !eligible(s) {
                return None;
            }
            let p = world_to_cam.transform_point(&s.position);
            if p.z <= NEAR_PLANE {
                return None;
            }
            let (u, v) = k.pixel_of(&p)?;
            Some((v * k.width + u, p.z, i as u32))
        })
        .collect();
    let mut z = vec![f64::INFINITY; k.width * k.height];
    let mut idx = vec![NO_SURFEL; k.width * k.height];
    for (o, d, i) in hits {
        if d < z[o] {
            z[o] = d;
            idx[o] = i;
        }
    }
    Image::from_vec(k.width, k.height, idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{se3_exp, Twist};
    use crate::mapping::{surfel_radius, MapKind};

    fn k() -> Intrinsics {
        Intrinsics::new(50.0, 50.0, 15.5, 11.5, 32, 24)
    }

    fn surfel(p: Vec3) -> Surfel {
        Surfel {
            position: p,
            normal: Vec3::new(0.0, 0.0, -1.0),
            color: [200, 100, 50],
            radius: 1e-3,
            weight: 1.0,
            created_at: 0,
            last_updated: 0,
            active: true,
        }
    }

    #[test]
    fn single_surfel_lands_on_principal_point() {
        let k = Intrinsics::new(50.0, 50.0, 16.0, 12.0, 32, 24);
        let r = render_surfels(&[surfel(Vec3::new(0.0, 0.0, 1.0))], &Pose::identity(), &k);
        assert!(r.valid[(16, 12)]);
        assert_eq!(r.depth[(16, 12)], 1.0);
        assert_eq!(r.valid.count(), 1);
        assert_eq!(r.normals[(16, 12)], Vec3::new(0.0, 0.0, -1.0));
    }

    #[test]
    fn nearer_surfel_wins() {
        let k = Intrinsics::new(50.0, 50.0, 16.0, 12.0, 32, 24);
        let s = [surfel(Vec3::new(0.0, 0.0, 2.0)), surfel(Vec3::new(0.0, 0.0, 1.0))];
        let r = render_surfels(&s, &Pose::identity(), &k);
        assert_eq!(r.depth[(16, 12)], 1.0);
        assert_eq!(r.index[(16, 12)], 1);
    }

    #[test]
    fn surfel_behind_camera_is_culled() {
        let r = render_surfels(&[surfel(Vec3::new(0.0, 0.0, -1.0))], &Pose::identity(), &k());
        assert_eq!(r.valid.count(), 0);
    }

    #[test]
    fn empty_map_renders_nothing() {
        let m = SurfelMap::from_surfels(0, MapKind::Static, vec![]);
        assert_eq!(render_map(&m, &Pose::identity(), &k()).valid.count(), 0);
    }

    #[test]
    fn plane_of_disks_renders_exact_plane_depth() {
        // one disk per pixel of a tilted plane, seen from a slightly moved camera
        let k = k();
        let n = Vec3::new(0.2, 0.0, -1.0).normalize();
        let c = Vec3::new(0.0, 0.0, 1.0);
        let mut surfels = Vec::new();
        for v in 0..24 {
            for u in 0..32 {
                let ray = k.ray(u as f64, v as f64);
                let t = n.dot(&c) / n.dot(&ray);
                let p = ray * t;
                let mut s = surfel(p);
                s.normal = n;
                s.radius = surfel_radius(t, n.z, &k);
                surfels.push(s);
            }
        }
        let pose = se3_exp(&Twist::new(Vec3::new(0.0, 0.01, 0.0), Vec3::new(0.01, 0.0, 0.0)));
        let r = render_surfels(&surfels, &pose, &k);
        let inv = pose.inverse();
        let n_c = inv.transform_vector(&n);
        let c_c = inv.transform_point(&c);
        let mut checked = 0;
        for v in 2..22 {
            for u in 2..30 {
                assert!(r.valid[(u, v)], "hole at ({u},{v})");
                let ray = k.ray(u as f64, v as f64);
                let t = n_c.dot(&c_c) / n_c.dot(&ray);
                assert!((r.depth[(u, v)] - t).abs() < 1e-9);
                checked += 1;
            }
        }
        assert!(checked > 500);
    }

    #[test]
    fn centre_index_prefers_nearest() {
        let k = Intrinsics::new(50.0, 50.0, 16.0, 12.0, 32, 24);
        let s = [surfel(Vec3::new(0.0, 0.0, 2.0)), surfel(Vec3::new(0.0, 0.0, 1.0))];
        let m = centre_index_map(&s, &Pose::identity(), &k, |_| true);
        assert_eq!(m[(16, 12)], 1);
        let m = centre_index_map(&s, &Pose::identity(), &k, |s| s.position.z > 1.5);
        assert_eq!(m[(16, 12)], 0);
    }
}
