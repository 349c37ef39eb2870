//! Ray-cast synthetic RGB-D sequences with ground-truth poses, instance masks
//! and detection files.
//!
//! World axes follow the camera convention: x right, y down, z forward.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::detections::{detection_file_name, write_detections};
use crate::dataset::trajectory::{export_trajectory, TrajectoryRecord};
use crate::dataset::tum::{write_depth_png, write_intrinsics, write_rgb_png};
use crate::dataset::{write_points_ply, BBox, Detection};
use crate::error::{Error, Result};
use crate::frame::{DepthRange, Frame, Rgb};
use crate::geometry::{look_at, so3_exp, Intrinsics, Pose, Vec3};
use crate::image::Image;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneSpec {
    pub point: [f64; 3],
    /// Faces the scene interior; the camera must stay on this side.
    pub normal: [f64; 3],
    pub color: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxSpec {
    pub center: [f64; 3],
    pub half_extents: [f64; 3],
    /// Rotation about the vertical axis (radians).
    #[serde(default)]
    pub yaw: f64,
    pub color: [f64; 3],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MoverSpec {
    pub class_id: i64,
    pub class_name: String,
    pub body: BoxSpec,
    /// Translation per frame (meters).
    pub velocity: [f64; 3],
    /// Yaw change per frame (radians).
    #[serde(default)]
    pub yaw_rate: f64,
    /// First frame with motion; the body rests before it.
    #[serde(default)]
    pub start_frame: usize,
}

/// Camera on a horizontal arc around `target`, eased in and out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraArc {
    pub target: [f64; 3],
    pub radius: f64,
    /// Camera height (world y).
    pub height: f64,
    pub start_angle: f64,
    pub end_angle: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub intrinsics: Intrinsics,
    pub frames: usize,
    pub fps: f64,
    pub start_time: f64,
    pub planes: Vec<PlaneSpec>,
    pub boxes: Vec<BoxSpec>,
    #[serde(default)]
    pub movers: Vec<MoverSpec>,
    pub camera: CameraArc,
    /// Depth noise σ at 1 m; σ grows with depth².
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub write_detections: bool,
    /// Texture wavelength (meters).
    pub texture_scale: f64,
}

pub const PRESETS: [&str; 3] = ["static", "two_body", "plane"];

impl SceneSpec {
    fn room(frames: usize) -> Self {
        SceneSpec {
            intrinsics: Intrinsics::TUM_DEFAULT.level(1),
            frames,
            fps: 30.0,
            start_time: 1.0,
            planes: vec![
                PlaneSpec { point: [0.0, 0.8, 0.0], normal: [0.0, -1.0, 0.0], color: [170.0, 160.0, 140.0] },
                PlaneSpec { point: [0.0, 0.0, 3.5], normal: [0.0, 0.0, -1.0], color: [140.0, 170.0, 200.0] },
                PlaneSpec { point: [-2.8, 0.0, 0.0], normal: [1.0, 0.0, 0.0], color: [200.0, 180.0, 120.0] },
                PlaneSpec { point: [2.8, 0.0, 0.0], normal: [-1.0, 0.0, 0.0], color: [150.0, 200.0, 150.0] },
            ],
            boxes: vec![
                BoxSpec { center: [-0.7, 0.6, 2.4], half_extents: [0.2, 0.2, 0.2], yaw: 0.3, color: [90.0, 120.0, 220.0] },
                BoxSpec { center: [0.8, 0.55, 2.8], half_extents: [0.25, 0.25, 0.3], yaw: -0.4, color: [220.0, 200.0, 90.0] },
            ],
            movers: Vec::new(),
            camera: CameraArc {
                target: [0.0, 0.3, 2.5],
                radius: 2.5,
                height: -0.1,
                start_angle: -0.15,
                end_angle: 0.15,
            },
            noise_sigma: 0.0,
            seed: 7,
            write_detections: false,
            texture_scale: 0.25,
        }
    }

    /// Named scenes: `static` (room with boxes), `two_body` (plus a box
    /// carried into view), `plane` (one textured wall, static camera).
    pub fn preset(name: &str, frames: usize) -> Result<Self> {
        match name {
            "static" => Ok(Self::room(frames)),
            "two_body" => {
                let mut s = Self::room(frames);
                s.movers.push(MoverSpec {
                    class_id: 28,
                    class_name: "suitcase".into(),
                    body: BoxSpec {
                        center: [1.6, -0.05, 1.8],
                        half_extents: [0.16, 0.15, 0.2],
                        yaw: 0.0,
                        color: [210.0, 70.0, 60.0],
                    },
                    velocity: [-0.0144, 0.0, -0.0042],
                    yaw_rate: 0.0,
                    start_frame: 0,
                });
                s.write_detections = true;
                Ok(s)
            }
            "plane" => {
                let mut s = Self::room(frames);
                s.planes.truncate(2);
                s.planes[0].point = [0.0, 5.0, 0.0];
                s.boxes.clear();
                s.camera.start_angle = 0.0;
                s.camera.end_angle = 0.0;
                s.camera.height = 0.3;
                Ok(s)
            }
            other => Err(Error::Config(format!(
                "unknown scene preset `{other}` (expected one of {})",
                PRESETS.join(", ")
            ))),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
    }

    pub fn timestamp(&self, frame: usize) -> f64 {
        self.start_time + frame as f64 / self.fps
    }

    /// Camera → world pose at `frame`.
    pub fn camera_pose(&self, frame: usize) -> Pose {
        let c = &self.camera;
        let s = if self.frames > 1 {
            frame as f64 / (self.frames - 1) as f64
        } else {
            0.0
        };
        let ease = 0.5 * (1.0 - (PI * s).cos());
        let a = c.start_angle + (c.end_angle - c.start_angle) * ease;
        let target = Vec3::from(c.target);
        let eye = Vec3::new(target.x + c.radius * a.sin(), c.height, target.z - c.radius * a.cos());
        look_at(&eye, &target, &Vec3::new(0.0, -1.0, 0.0))
    }

    /// Body → world pose of mover `m` at `frame`.
    pub fn mover_pose(&self, m: usize, frame: usize) -> Pose {
        let mv = &self.movers[m];
        let steps = frame.saturating_sub(mv.start_frame) as f64;
        let yaw = mv.body.yaw + mv.yaw_rate * steps;
        Pose::new(
            so3_exp(&Vec3::new(0.0, yaw, 0.0)),
            Vec3::from(mv.body.center) + Vec3::from(mv.velocity) * steps,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !self.intrinsics.is_valid() {
            return Err(Error::InvalidScene("invalid intrinsics".into()));
        }
        if self.frames == 0 || self.fps <= 0.0 || self.texture_scale <= 0.0 {
            return Err(Error::InvalidScene("frames, fps and texture_scale must be positive".into()));
        }
        for f in 0..self.frames {
            let eye = self.camera_pose(f).translation;
            for (i, p) in self.planes.iter().enumerate() {
                if (eye - Vec3::from(p.point)).dot(&Vec3::from(p.normal)) <= 0.0 {
                    return Err(Error::InvalidScene(format!("frame {f}: camera behind plane {i}")));
                }
            }
            let inside = |pose: &Pose, half: &[f64; 3]| {
                let q = pose.inverse().transform_point(&eye);
                (0..3).all(|k| q[k].abs() < half[k])
            };
            for (i, b) in self.boxes.iter().enumerate() {
                if inside(&box_pose(b), &b.half_extents) {
                    return Err(Error::InvalidScene(format!("frame {f}: camera inside box {i}")));
                }
            }
            for m in 0..self.movers.len() {
                if inside(&self.mover_pose(m, f), &self.movers[m].body.half_extents) {
                    return Err(Error::InvalidScene(format!("frame {f}: camera inside mover {m}")));
                }
            }
        }
        Ok(())
    }
}

fn box_pose(b: &BoxSpec) -> Pose {
    Pose::new(so3_exp(&Vec3::new(0.0, b.yaw, 0.0)), Vec3::from(b.center))
}

enum Shape {
    Plane { point: Vec3, normal: Vec3, e1: Vec3, e2: Vec3 },
    Cuboid { pose: Pose, inv: Pose, half: Vec3 },
}

struct Primitive {
    shape: Shape,
    color: [f64; 3],
    /// 0 for static geometry, mover index + 1 otherwise.
    label: u8,
}

struct Hit {
    t: f64,
    normal: Vec3,
    tex: (f64, f64),
    prim: usize,
}

fn plane_basis(n: &Vec3) -> (Vec3, Vec3) {
    let a = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let e1 = n.cross(&a).normalize();
    (e1, n.cross(&e1))
}

fn intersect(prim: &Primitive, o: &Vec3, d: &Vec3) -> Option<(f64, Vec3, (f64, f64))> {
    match &prim.shape {
        Shape::Plane { point, normal, e1, e2 } => {
            let denom = normal.dot(d);
            if denom >= -1e-12 {
                return None;
            }
            let t = normal.dot(&(point - o)) / denom;
            (t > 1e-6).then(|| {
                let x = o + d * t - point;
                (t, *normal, (x.dot(e1), x.dot(e2)))
            })
        }
        Shape::Cuboid { pose, inv, half } => {
            let ob = inv.transform_point(o);
            let db = inv.transform_vector(d);
            let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
            let mut axis = 0;
            let mut sign = 0.0;
            for k in 0..3 {
                if db[k].abs() < 1e-12 {
                    if ob[k].abs() > half[k] {
                        return None;
                    }
                    continue;
                }
                let ta = (-half[k] - ob[k]) / db[k];
                let tb = (half[k] - ob[k]) / db[k];
                let (near, far) = if ta < tb { (ta, tb) } else { (tb, ta) };
                if near > t0 {
                    t0 = near;
                    axis = k;
                    sign = -db[k].signum();
                }
                t1 = t1.min(far);
            }
            if t0 > t1 || t0 <= 1e-6 {
                return None;
            }
            let mut nb = Vec3::zeros();
            nb[axis] = sign;
            let p = ob + db * t0;
            let (i, j) = ((axis + 1) % 3, (axis + 2) % 3);
            Some((t0, pose.transform_vector(&nb), (p[i] + 3.0 * axis as f64, p[j])))
        }
    }
}

fn texture(s: f64, t: f64, scale: f64) -> f64 {
    let k = 2.0 * PI / scale;
    0.5 + 0.3 * (k * s).sin() * (0.8 * k * t + 1.0).sin() + 0.2 * (0.6 * k * (0.7 * s - 0.4 * t)).sin()
}

/// One rendered frame with its ground truth.
#[derive(Clone, Debug)]
pub struct SyntheticFrame {
    pub timestamp: f64,
    pub rgb: Image<Rgb>,
    /// Meters, 0 where nothing was hit.
    pub depth: Image<f64>,
    /// 0 = static, `m + 1` = mover `m`.
    pub labels: Image<u8>,
    pub camera_pose: Pose,
    pub mover_poses: Vec<Pose>,
}

impl SyntheticFrame {
    /// The in-memory frame, skipping the PNG round trip.
    pub fn to_frame(&self, k: &Intrinsics) -> Frame {
        Frame::new(self.timestamp, self.rgb.clone(), self.depth.clone(), k, DepthRange::default())
            .expect("rendered at the scene intrinsics")
    }
}

pub fn render_frame(spec: &SceneSpec, frame: usize) -> SyntheticFrame {
    render_view(spec, frame, &spec.camera_pose(frame))
}

/// Renders the scene state of `frame` from an arbitrary camera → world pose.
pub fn render_view(spec: &SceneSpec, frame: usize, camera_pose: &Pose) -> SyntheticFrame {
    let k = &spec.intrinsics;
    let camera_pose = *camera_pose;
    let mover_poses: Vec<Pose> = (0..spec.movers.len()).map(|m| spec.mover_pose(m, frame)).collect();
    let mut prims = Vec::new();
    for p in &spec.planes {
        let normal = Vec3::from(p.normal).normalize();
        let (e1, e2) = plane_basis(&normal);
        prims.push(Primitive {
            shape: Shape::Plane { point: Vec3::from(p.point), normal, e1, e2 },
            color: p.color,
            label: 0,
        });
    }
    let cuboid = |pose: Pose, half: &[f64; 3]| Shape::Cuboid { pose, inv: pose.inverse(), half: Vec3::from(*half) };
    for b in &spec.boxes {
        prims.push(Primitive { shape: cuboid(box_pose(b), &b.half_extents), color: b.color, label: 0 });
    }
    for (m, mv) in spec.movers.iter().enumerate() {
        prims.push(Primitive {
            shape: cuboid(mover_poses[m], &mv.body.half_extents),
            color: mv.body.color,
            label: m as u8 + 1,
        });
    }
    let light = Vec3::new(0.3, -0.8, -0.5).normalize();
    let eye = camera_pose.translation;
    let hits: Image<Option<Hit>> = Image::from_fn_par(k.width, k.height, |u, v| {
        let d = camera_pose.transform_vector(&k.ray(u as f64, v as f64));
        let mut best: Option<Hit> = None;
        for (i, p) in prims.iter().enumerate() {
            if let Some((t, n, tex)) = intersect(p, &eye, &d) {
                if best.as_ref().is_none_or(|b| t < b.t) {
                    best = Some(Hit { t, normal: n, tex, prim: i });
                }
            }
        }
        best
    });
    let rgb = hits.map(|h| match h {
        None => [0; 3],
        Some(h) => {
            let p = &prims[h.prim];
            let shade = 0.55 + 0.45 * h.normal.dot(&light).max(0.0);
            let f = texture(h.tex.0, h.tex.1, spec.texture_scale);
            let c = |x: f64| (x * shade * (0.35 + 0.65 * f)).round().clamp(0.0, 255.0) as u8;
            [c(p.color[0]), c(p.color[1]), c(p.color[2])]
        }
    });
    let labels = hits.map(|h| h.as_ref().map_or(0, |h| prims[h.prim].label));
    let mut depth = hits.map(|h| h.as_ref().map_or(0.0, |h| h.t));
    if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_mul(1_000_003).wrapping_add(frame as u64));
        let unit = Normal::new(0.0, 1.0).expect("unit normal");
        for d in depth.data_mut() {
            if *d > 0.0 {
                *d = (*d + spec.noise_sigma * *d * *d * unit.sample(&mut rng)).max(0.0);
            }
        }
    }
    SyntheticFrame {
        timestamp: spec.timestamp(frame),
        rgb,
        depth,
        labels,
        camera_pose,
        mover_poses,
    }
}

/// Tight box around the pixels labelled `label`.
pub fn label_bbox(labels: &Image<u8>, label: u8) -> Option<(BBox, usize)> {
    let (mut x0, mut y0, mut x1, mut y1, mut n) = (usize::MAX, usize::MAX, 0, 0, 0);
    for v in 0..labels.height() {
        for (u, &l) in labels.row(v).iter().enumerate() {
            if l == label {
                x0 = x0.min(u);
                y0 = y0.min(v);
                x1 = x1.max(u);
                y1 = y1.max(v);
                n += 1;
            }
        }
    }
    (n > 0).then(|| (BBox { x: x0, y: y0, w: x1 - x0 + 1, h: y1 - y0 + 1 }, n))
}

/// Points on the surface of a box in its body frame, `spacing` apart.
pub fn box_surface_points(half: &Vec3, spacing: f64) -> Vec<Vec3> {
    let mut pts = Vec::new();
    for axis in 0..3 {
        let (i, j) = ((axis + 1) % 3, (axis + 2) % 3);
        let ni = (2.0 * half[i] / spacing).round().max(1.0) as usize;
        let nj = (2.0 * half[j] / spacing).round().max(1.0) as usize;
        for side in [-1.0, 1.0] {
            for a in 0..=ni {
                for b in 0..=nj {
                    let mut p = Vec3::zeros();
                    p[axis] = side * half[axis];
                    p[i] = -half[i] + 2.0 * half[i] * a as f64 / ni as f64;
                    p[j] = -half[j] + 2.0 * half[j] * b as f64 / nj as f64;
                    pts.push(p);
                }
            }
        }
    }
    pts
}

pub const MIN_DETECTION_PIXELS: usize = 20;

#[derive(Clone, Debug)]
pub struct SyntheticSummary {
    pub root: PathBuf,
    pub timestamps: Vec<f64>,
    pub camera_poses: Vec<Pose>,
    /// `mover_poses[m][f]`: body → world.
    pub mover_poses: Vec<Vec<Pose>>,
    /// `mover_pixels[m][f]`: visible pixel count.
    pub mover_pixels: Vec<Vec<usize>>,
}

pub fn mover_file_stem(m: usize, spec: &MoverSpec) -> String {
    format!("{}_{}", m + 1, spec.class_name.replace(' ', "_"))
}

/// Writes a TUM-layout sequence under `out_dir`:
/// `rgb/`, `depth/`, `rgb.txt`, `depth.txt`, `groundtruth.txt`, `camera.txt`,
/// `masks/` (8-bit instance labels), `detections/` (when requested),
/// `objects/<id>_<class>.txt` (body → world poses) and
/// `objects/<id>_<class>.ply` (surface samples in the body frame).
pub fn generate_synthetic(spec: &SceneSpec, out_dir: &Path) -> Result<SyntheticSummary> {
    spec.validate()?;
    for sub in ["rgb", "depth", "masks", "objects"] {
        let d = out_dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let det_dir = out_dir.join("detections");
    if spec.write_detections {
        fs::create_dir_all(&det_dir).map_err(|e| Error::io(&det_dir, e))?;
    }
    write_intrinsics(out_dir, &spec.intrinsics)?;

    let mut rgb_list = String::from("# timestamp filename\n");
    let mut depth_list = String::from("# timestamp filename\n");
    let mut gt = Vec::new();
    let mut summary = SyntheticSummary {
        root: out_dir.to_path_buf(),
        timestamps: Vec::new(),
        camera_poses: Vec::new(),
        mover_poses: vec![Vec::new(); spec.movers.len()],
        mover_pixels: vec![Vec::new(); spec.movers.len()],
    };
    for f in 0..spec.frames {
        let fr = render_frame(spec, f);
        let name = format!("{:.6}.png", fr.timestamp);
        write_rgb_png(&out_dir.join("rgb").join(&name), &fr.rgb)?;
        write_depth_png(&out_dir.join("depth").join(&name), &fr.depth, spec.intrinsics.depth_scale)?;
        let mask_path = out_dir.join("masks").join(&name);
        image::GrayImage::from_raw(fr.labels.width() as u32, fr.labels.height() as u32, fr.labels.data().to_vec())
            .expect("buffer size")
            .save(&mask_path)
            .map_err(|e| Error::image(&mask_path, e))?;
        rgb_list.push_str(&format!("{:.6} rgb/{name}\n", fr.timestamp));
        depth_list.push_str(&format!("{:.6} depth/{name}\n", fr.timestamp));
        gt.push(TrajectoryRecord::from_pose(fr.timestamp, &fr.camera_pose));

        let mut dets = Vec::new();
        for (m, mv) in spec.movers.iter().enumerate() {
            let bbox = label_bbox(&fr.labels, m as u8 + 1);
            summary.mover_pixels[m].push(bbox.map_or(0, |b| b.1));
            if let Some((bbox, n)) = bbox.filter(|b| b.1 >= MIN_DETECTION_PIXELS) {
                debug_assert!(n > 0);
                dets.push(Detection {
                    class_id: mv.class_id,
                    class_name: mv.class_name.clone(),
                    score: 0.9,
                    bbox,
                    rigid: true,
                });
            }
            summary.mover_poses[m].push(fr.mover_poses[m]);
        }
        if spec.write_detections {
            write_detections(&det_dir.join(detection_file_name(fr.timestamp)), &dets)?;
        }
        summary.timestamps.push(fr.timestamp);
        summary.camera_poses.push(fr.camera_pose);
    }
    let write = |p: PathBuf, s: &str| fs::write(&p, s).map_err(|e| Error::io(&p, e));
    write(out_dir.join("rgb.txt"), &rgb_list)?;
    write(out_dir.join("depth.txt"), &depth_list)?;
    export_trajectory(out_dir.join("groundtruth.txt"), &gt)?;
    for (m, mv) in spec.movers.iter().enumerate() {
        let stem = mover_file_stem(m, mv);
        let recs: Vec<TrajectoryRecord> = summary.mover_poses[m]
            .iter()
            .zip(&summary.timestamps)
            .map(|(p, &t)| TrajectoryRecord::from_pose(t, p))
            .collect();
        export_trajectory(out_dir.join("objects").join(format!("{stem}.txt")), &recs)?;
        let pts = box_surface_points(&Vec3::from(mv.body.half_extents), 0.005);
        write_points_ply(out_dir.join("objects").join(format!("{stem}.ply")), &pts)?;
    }
    Ok(summary)
}
