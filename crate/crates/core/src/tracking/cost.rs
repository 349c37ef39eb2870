//! Joint point-to-plane + photometric cost over a fixed correspondence set.
//!
//! Residuals for a current-frame vertex `q` under the relative pose `T`
//! (current camera → reference camera), with `p = T q`:
//!
//! * geometric: `r = (v_ref − p) · n_ref`
//! * photometric: `r = I_ref(π(p)) − I_cur`, with bilinear `I_ref`
//!
//! Poses are perturbed on the left, `T ← exp(ξ) T`, `ξ = (ω, v)`.

use nalgebra::{Matrix6, Vector6};
use rayon::prelude::*;

use crate::geometry::{Intrinsics, Pose, Vec3};
use crate::image::{Image, Mask};

use super::pyramid::Level;

#[derive(Clone, Copy, Debug)]
pub struct Correspondence {
    pub pixel: (u32, u32),
    pub q: Vec3,
    pub v_ref: Vec3,
    pub n_ref: Vec3,
    pub i_cur: f64,
    /// Whether the photometric residual takes part.
    pub photometric: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct AssociationParams {
    pub dist_thresh: f64,
    pub angle_thresh: f64,
}

/// Projective data association of every valid, unmasked current pixel.
pub fn associate(
    reference: &Level,
    current: &Level,
    t_rel: &Pose,
    mask: Option<&Mask>,
    params: &AssociationParams,
) -> Vec<Correspondence> {
    let (w, h) = current.valid.dims();
    let k = &reference.k;
    let cos_t = params.angle_thresh.cos();
    let d2 = params.dist_thresh * params.dist_thresh;
    let rows: Vec<Vec<Correspondence>> = (0..h)
        .into_par_iter()
        .map(|v| {
            let mut out = Vec::new();
            for u in 0..w {
                if !current.valid[(u, v)] || mask.is_some_and(|m| m[(u, v)]) {
                    continue;
                }
                let q = current.vertices[(u, v)];
                let p = t_rel.transform_point(&q);
                let Some((ru, rv)) = k.pixel_of(&p) else { continue };
                if !reference.valid[(ru, rv)] {
                    continue;
                }
                let v_ref = reference.vertices[(ru, rv)];
                let n_ref = reference.normals[(ru, rv)];
                if (v_ref - p).norm_squared() > d2
                    || n_ref.dot(&t_rel.transform_vector(&current.normals[(u, v)])) < cos_t
                {
                    continue;
                }
                let (x, y) = k.project(&p).expect("in front of camera");
                out.push(Correspondence {
                    pixel: (u as u32, v as u32),
                    q,
                    v_ref,
                    n_ref,
                    i_cur: current.intensity[(u, v)],
                    photometric: bilinear_support(&reference.valid, x, y),
                });
            }
            out
        })
        .collect();
    rows.into_iter().flatten().collect()
}

fn bilinear_support(valid: &Mask, x: f64, y: f64) -> bool {
    let (x0, y0) = (x.floor(), y.floor());
    if x0 < 0.0 || y0 < 0.0 {
        return false;
    }
    let (x0, y0) = (x0 as usize, y0 as usize);
    x0 + 1 < valid.width()
        && y0 + 1 < valid.height()
        && valid[(x0, y0)]
        && valid[(x0 + 1, y0)]
        && valid[(x0, y0 + 1)]
        && valid[(x0 + 1, y0 + 1)]
}

/// Bilinear sample and its exact partial derivatives; coordinates are clamped
/// to the image.
#[inline]
pub fn bilinear(img: &Image<f64>, x: f64, y: f64) -> (f64, f64, f64) {
    let (w, h) = img.dims();
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let x0 = (x.floor() as usize).min(w.saturating_sub(2));
    let y0 = (y.floor() as usize).min(h.saturating_sub(2));
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let (a, b) = (x - x0 as f64, y - y0 as f64);
    let (i00, i10, i01, i11) = (img[(x0, y0)], img[(x1, y0)], img[(x0, y1)], img[(x1, y1)]);
    let val = (1.0 - a) * (1.0 - b) * i00 + a * (1.0 - b) * i10 + (1.0 - a) * b * i01 + a * b * i11;
    let gx = (1.0 - b) * (i10 - i00) + b * (i11 - i01);
    let gy = (1.0 - a) * (i01 - i00) + a * (i11 - i10);
    (val, gx, gy)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormalEquations {
    pub h: Matrix6<f64>,
    /// `Σ Jᵀ r` (half the cost gradient).
    pub g: Vector6<f64>,
    pub cost: f64,
    pub geometric: usize,
    pub photometric: usize,
}

impl NormalEquations {
    fn zero() -> Self {
        Self {
            h: Matrix6::zeros(),
            g: Vector6::zeros(),
            cost: 0.0,
            geometric: 0,
            photometric: 0,
        }
    }

    fn add(mut self, o: &Self) -> Self {
        self.h += o.h;
        self.g += o.g;
        self.cost += o.cost;
        self.geometric += o.geometric;
        self.photometric += o.photometric;
        self
    }

    /// Gradient of the cost with respect to a left perturbation.
    pub fn gradient(&self) -> Vector6<f64> {
        2.0 * self.g
    }
}

/// Geometric residual and its Jacobian row.
#[inline]
pub fn geometric_term(c: &Correspondence, t: &Pose) -> (f64, Vector6<f64>) {
    let p = t.transform_point(&c.q);
    let r = (c.v_ref - p).dot(&c.n_ref);
    let jw = c.n_ref.cross(&p);
    let jv = -c.n_ref;
    (r, Vector6::new(jw.x, jw.y, jw.z, jv.x, jv.y, jv.z))
}

/// Photometric residual and its Jacobian row; `None` behind the camera.
#[inline]
pub fn photometric_term(
    c: &Correspondence,
    t: &Pose,
    k: &Intrinsics,
    intensity: &Image<f64>,
) -> Option<(f64, Vector6<f64>)> {
    let p = t.transform_point(&c.q);
    let (x, y) = k.project(&p)?;
    let (val, gx, gy) = bilinear(intensity, x, y);
    let iz = 1.0 / p.z;
    let g3 = Vec3::new(
        gx * k.fx * iz,
        gy * k.fy * iz,
        -(gx * k.fx * p.x + gy * k.fy * p.y) * iz * iz,
    );
    let jw = p.cross(&g3);
    Some((val - c.i_cur, Vector6::new(jw.x, jw.y, jw.z, g3.x, g3.y, g3.z)))
}

const CHUNK: usize = 2048;

/// `E(T) = Σ r_geo² + λ Σ r_photo²` and its Gauss-Newton system.
///
/// Chunks are reduced in a fixed order, so results do not depend on thread count.
pub fn normal_equations(
    corr: &[Correspondence],
    reference: &Level,
    t: &Pose,
    lambda: f64,
) -> NormalEquations {
    let parts: Vec<NormalEquations> = corr
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut ne = NormalEquations::zero();
            for c in chunk {
                let (r, j) = geometric_term(c, t);
                ne.h += j * j.transpose();
                ne.g += j * r;
                ne.cost += r * r;
                ne.geometric += 1;
                if c.photometric {
                    if let Some((r, j)) = photometric_term(c, t, &reference.k, &reference.intensity) {
                        ne.h += lambda * j * j.transpose();
                        ne.g += lambda * j * r;
                        ne.cost += lambda * r * r;
                        ne.photometric += 1;
                    }
                }
            }
            ne
        })
        .collect();
    parts.iter().fold(NormalEquations::zero(), |acc, p| acc.add(p))
}

pub fn cost(corr: &[Correspondence], reference: &Level, t: &Pose, lambda: f64) -> f64 {
    let parts: Vec<f64> = corr
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut e = 0.0;
            for c in chunk {
                let (r, _) = geometric_term(c, t);
                e += r * r;
                if c.photometric {
                    if let Some((r, _)) = photometric_term(c, t, &reference.k, &reference.intensity) {
                        e += lambda * r * r;
                    }
                }
            }
            e
        })
        .collect();
    parts.iter().sum()
}
