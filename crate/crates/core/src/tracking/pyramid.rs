use crate::frame::Frame;
use crate::geometry::{Intrinsics, Vec3};
use crate::image::{Image, Mask};

/// One resolution level of a frame or rendered reference.
#[derive(Clone, Debug)]
pub struct Level {
    pub k: Intrinsics,
    pub vertices: Image<Vec3>,
    pub normals: Image<Vec3>,
    pub intensity: Image<f64>,
    pub valid: Mask,
}

impl Level {
    pub fn from_frame(frame: &Frame, k: &Intrinsics) -> Self {
        Self {
            k: *k,
            vertices: frame.vertex_map.clone(),
            normals: frame.normal_map.clone(),
            intensity: frame.intensity.clone(),
            valid: frame.valid_mask.clone(),
        }
    }

    /// Half resolution: each 2×2 block keeps the vertex and normal of its
    /// lower-median-depth valid pixel and the mean intensity of its valid pixels.
    pub fn downsample(&self, level: usize, base: &Intrinsics) -> Level {
        let k = base.level(level);
        let (w, h) = (k.width, k.height);
        let mut vertices = Image::filled(w, h, Vec3::zeros());
        let mut normals = Image::filled(w, h, Vec3::zeros());
        let mut intensity = Image::filled(w, h, 0.0);
        let mut valid = Mask::empty(w, h);
        let mut block: Vec<(f64, usize, usize)> = Vec::with_capacity(4);
        for v in 0..h {
            for u in 0..w {
                block.clear();
                let mut sum_all = 0.0;
                for (du, dv) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    let (su, sv) = (2 * u + du, 2 * v + dv);
                    sum_all += self.intensity[(su, sv)];
                    if self.valid[(su, sv)] {
                        block.push((self.vertices[(su, sv)].z, su, sv));
                    }
                }
                if block.is_empty() {
                    intensity[(u, v)] = sum_all / 4.0;
                    continue;
                }
                let mean = block.iter().map(|&(_, su, sv)| self.intensity[(su, sv)]).sum::<f64>()
                    / block.len() as f64;
                block.sort_by(|a, b| a.0.total_cmp(&b.0));
                let (_, su, sv) = block[(block.len() - 1) / 2];
                vertices[(u, v)] = self.vertices[(su, sv)];
                normals[(u, v)] = self.normals[(su, sv)];
                intensity[(u, v)] = mean;
                valid[(u, v)] = true;
            }
        }
        Level {
            k,
            vertices,
            normals,
            intensity,
            valid,
        }
    }
}

/// Coarse pixel masked when any of its four children is.
pub fn downsample_mask(mask: &Mask) -> Mask {
    let (w, h) = (mask.width() / 2, mask.height() / 2);
    Image::from_fn(w, h, |u, v| {
        mask[(2 * u, 2 * v)]
            || mask[(2 * u + 1, 2 * v)]
            || mask[(2 * u, 2 * v + 1)]
            || mask[(2 * u + 1, 2 * v + 1)]
    })
}

/// Levels ordered fine (index 0) to coarse.
#[derive(Clone, Debug)]
pub struct Pyramid {
    pub levels: Vec<Level>,
}

impl Pyramid {
    pub fn new(finest: Level, n_levels: usize) -> Self {
        let base = finest.k;
        let mut levels = vec![finest];
        for l in 1..n_levels.max(1) {
            let next = levels[l - 1].downsample(l, &base);
            levels.push(next);
        }
        Self { levels }
    }

    pub fn from_frame(frame: &Frame, k: &Intrinsics, n_levels: usize) -> Self {
        Self::new(Level::from_frame(frame, k), n_levels)
    }
}

pub fn mask_pyramid(mask: &Mask, n_levels: usize) -> Vec<Mask> {
    let mut out = vec![mask.clone()];
    for l in 1..n_levels.max(1) {
        let next = downsample_mask(&out[l - 1]);
        out.push(next);
    }
    out
}
