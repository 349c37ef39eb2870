//! Rigid-body math and the pinhole camera model.
//!
//! Poses are stored as an explicit rotation matrix plus translation. Tangent
//! vectors ([`Twist`]) are ordered `(omega, v)` everywhere, including in
//! 6-vectors and Jacobian columns.

use std::fmt;

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Pinhole intrinsics plus image size and the raw-depth divisor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
    pub depth_scale: f64,
}

impl Intrinsics {
    /// The commonly used default for TUM RGB-D sequences (ROS default calibration).
    pub const TUM_DEFAULT: Intrinsics = Intrinsics {
        fx: 525.0,
        fy: 525.0,
        cx: 319.5,
        cy: 239.5,
        width: 640,
        height: 480,
        depth_scale: 5000.0,
    };

    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: usize, height: usize) -> Self {
        Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
            depth_scale: 5000.0,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.fx > 0.0
            && self.fy > 0.0
            && self.width > 0
            && self.height > 0
            && self.depth_scale > 0.0
            && self.cx.is_finite()
            && self.cy.is_finite()
    }

    /// Intrinsics of pyramid level `level`, where each level halves the resolution.
    pub fn level(&self, level: usize) -> Intrinsics {
        let s = (1u32 << level) as f64;
        Intrinsics {
            fx: self.fx / s,
            fy: self.fy / s,
            cx: (self.cx + 0.5) / s - 0.5,
            cy: (self.cy + 0.5) / s - 0.5,
            width: self.width >> level,
            height: self.height >> level,
            depth_scale: self.depth_scale,
        }
    }

    /// Continuous pixel coordinates of a camera-frame point; `None` behind the camera.
    #[inline]
    pub fn project(&self, p: &Vec3) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        Some((self.fx * p.x / p.z + self.cx, self.fy * p.y / p.z + self.cy))
    }

    /// Camera-frame point for pixel `(u, v)` at depth `d`; `None` for nonpositive depth.
    #[inline]
    pub fn backproject(&self, u: f64, v: f64, d: f64) -> Option<Vec3> {
        if d > 0.0 && d.is_finite() {
            Some(Vec3::new((u - self.cx) * d / self.fx, (v - self.cy) * d / self.fy, d))
        } else {
            None
        }
    }

    /// Unit-depth ray through pixel `(u, v)`.
    #[inline]
    pub fn ray(&self, u: f64, v: f64) -> Vec3 {
        Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    /// Nearest integer pixel of a projected point, if it falls inside the image.
    #[inline]
    pub fn pixel_of(&self, p: &Vec3) -> Option<(usize, usize)> {
        let (x, y) = self.project(p)?;
        let (u, v) = (x.round(), y.round());
        if u >= 0.0 && v >= 0.0 && (u as usize) < self.width && (v as usize) < self.height {
            Some((u as usize, v as usize))
        } else {
            None
        }
    }

    /// Ratio of this image area to VGA; used to scale pixel-count thresholds.
    pub fn area_ratio_to_vga(&self) -> f64 {
        (self.width * self.height) as f64 / (640.0 * 480.0)
    }
}

/// Rigid transform. For camera poses this maps camera coordinates into map coordinates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let t = &self.translation;
        let q = self.quaternion();
        write!(
            f,
            "t=[{:.6}, {:.6}, {:.6}] q=[{:.6}, {:.6}, {:.6}, {:.6}]",
            t.x, t.y, t.z, q.i, q.j, q.k, q.w
        )
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn new(rotation: Mat3, translation: Vec3) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Self::new(Mat3::identity(), t)
    }

    /// Builds a pose from a (not necessarily normalized) quaternion `(qx, qy, qz, qw)`.
    pub fn from_quaternion(translation: Vec3, qx: f64, qy: f64, qz: f64, qw: f64) -> Self {
        let q = UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(qw, qx, qy, qz));
        Self::new(*q.to_rotation_matrix().matrix(), translation)
    }

    /// Unit quaternion of the rotation, with a nonnegative scalar part.
    pub fn quaternion(&self) -> nalgebra::Quaternion<f64> {
        let rot = Rotation3::from_matrix_unchecked(self.rotation);
        let q = UnitQuaternion::from_rotation_matrix(&rot).into_inner();
        if q.w < 0.0 {
            -q
        } else {
            q
        }
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    #[inline]
    pub fn transform_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    #[inline]
    pub fn transform_vector(&self, n: &Vec3) -> Vec3 {
        self.rotation * n
    }

    /// Projects the rotation back onto SO(3) (nearest rotation in Frobenius norm).
    pub fn renormalized(&self) -> Pose {
        let svd = self.rotation.svd(true, true);
        let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
        let mut r = u * vt;
        if r.determinant() < 0.0 {
            let mut u2 = u;
            u2.column_mut(2).neg_mut();
            r = u2 * vt;
        }
        Pose::new(r, self.translation)
    }

    /// Largest deviation of `RᵀR` from identity and of `det R` from one.
    pub fn orthonormality_error(&self) -> f64 {
        let e = (self.rotation.transpose() * self.rotation - Mat3::identity()).abs().max();
        e.max((self.rotation.determinant() - 1.0).abs())
    }

    /// Rotation angle of the pose, in radians.
    pub fn rotation_angle(&self) -> f64 {
        so3_log(&self.rotation).norm()
    }
}

/// Tangent-space velocity: rotation `omega` (radians) and translation `v` (meters).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Twist {
    pub omega: Vec3,
    pub v: Vec3,
}

impl Twist {
    pub fn new(omega: Vec3, v: Vec3) -> Self {
        Self { omega, v }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_vector(x: &Vector6<f64>) -> Self {
        Self {
            omega: Vec3::new(x[0], x[1], x[2]),
            v: Vec3::new(x[3], x[4], x[5]),
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.omega.x,
            self.omega.y,
            self.omega.z,
            self.v.x,
            self.v.y,
            self.v.z,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.omega.iter().chain(self.v.iter()).all(|x| x.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.to_vector().norm()
    }
}

impl std::ops::Neg for Twist {
    type Output = Twist;
    fn neg(self) -> Twist {
        Twist::new(-self.omega, -self.v)
    }
}

#[inline]
pub fn skew(w: &Vec3) -> Mat3 {
    Mat3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Coefficients `sinθ/θ`, `(1−cosθ)/θ²`, `(θ−sinθ)/θ³`, series-expanded near zero.
fn exp_coefficients(theta: f64) -> (f64, f64, f64) {
    let t2 = theta * theta;
    if theta < 1e-4 {
        (
            1.0 - t2 / 6.0 + t2 * t2 / 120.0,
            0.5 - t2 / 24.0 + t2 * t2 / 720.0,
            1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0,
        )
    } else {
        let (s, c) = theta.sin_cos();
        (s / theta, (1.0 - c) / t2, (theta - s) / (t2 * theta))
    }
}

pub fn so3_exp(omega: &Vec3) -> Mat3 {
    let theta = omega.norm();
    let (a, b, _) = exp_coefficients(theta);
    let w = skew(omega);
    Mat3::identity() + w * a + w * w * b
}

pub fn so3_log(r: &Mat3) -> Vec3 {
    let vee = Vec3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    let cos = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    let sin = 0.5 * vee.norm();
    let theta = sin.atan2(cos);
    if theta < 1e-4 {
        return vee * (0.5 * (1.0 + theta * theta / 6.0));
    }
    if std::f64::consts::PI - theta < 1e-3 {
        // Near π the antisymmetric part vanishes; use sym(R) = cos·I + (1 − cos)·aaᵀ.
        let s = ((r + r.transpose()) * 0.5 - Mat3::identity() * cos) / (1.0 - cos);
        let k = (0..3)
            .max_by(|&i, &j| s[(i, i)].total_cmp(&s[(j, j)]))
            .unwrap_or(0);
        let mut axis: Vec3 = s.column(k).into_owned() / s[(k, k)].max(1e-300).sqrt();
        axis.normalize_mut();
        if axis.dot(&vee) < 0.0 {
            axis = -axis;
        }
        return axis * theta;
    }
    vee * (theta / (2.0 * sin))
}

pub fn se3_exp(xi: &Twist) -> Pose {
    let theta = xi.omega.norm();
    let (a, b, c) = exp_coefficients(theta);
    let w = skew(&xi.omega);
    let w2 = w * w;
    let r = Mat3::identity() + w * a + w2 * b;
    let v = Mat3::identity() + w * b + w2 * c;
    Pose::new(r, v * xi.v)
}

pub fn se3_log(pose: &Pose) -> Twist {
    let omega = so3_log(&pose.rotation);
    let theta = omega.norm();
    let w = skew(&omega);
    // V⁻¹ = I − W/2 + k·W², k = (1 − A/(2B))/θ²
    let k = if theta < 1e-4 {
        1.0 / 12.0 + theta * theta / 720.0
    } else {
        let (a, b, _) = exp_coefficients(theta);
        (1.0 - a / (2.0 * b)) / (theta * theta)
    };
    let v_inv = Mat3::identity() - w * 0.5 + w * w * k;
    Twist::new(omega, v_inv * pose.translation)
}

/// Camera-to-world pose of a camera at `eye` looking at `target`, with `up` the
/// world direction that should appear upward in the image (camera −y).
pub fn look_at(eye: &Vec3, target: &Vec3, up: &Vec3) -> Pose {
    let z = (target - eye).normalize();
    let x = z.cross(up).normalize();
    let y = z.cross(&x);
    Pose::new(Mat3::from_columns(&[x, y, z]), *eye)
}
