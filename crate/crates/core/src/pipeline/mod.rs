//! Per-frame orchestration and the sequence runner.

pub mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::dataset::detections::{CategoryTable, DetectionParser};
use crate::dataset::trajectory::{export_trajectory, TrajectoryRecord};
use crate::dataset::{export_ply, load_tum_sequence, Detection};
use crate::debug;
use crate::error::{Error, Result};
use crate::eval::{timing_report, Stage, Timings};
use crate::frame::Frame;
use crate::geometry::{Intrinsics, Pose};
use crate::image::{Image, Mask};
use crate::instance::{assign_detections, split_rigid_nonrigid, ObjectSegmentsMask};
use crate::mapping::{
    fuse_frame, match_maps_to_objects, project_map_mask, registry_manifest, FusionInput, MapId,
    MapMask, MatchResult, SurfelMap, STATIC_MAP_ID,
};
use crate::motion::{binary_motion_mask, motion_segments, MotionSegmentsMask};
use crate::segmentation::{segment_frame, SegmentsMask};
use crate::tracking::{refine_static_pose, track_all_maps, InvalidMask};

pub use config::{DebugDumps, PipelineConfig};

/// Reach, in pixels, of a moving region over unsegmented moving pixels.
pub const MOTION_BORDER_PX: usize = 2;

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let start = Instant::now();
    let out = f();
    (out, start.elapsed().as_secs_f64() * 1e3)
}

/// Intermediate products kept for debug dumps.
#[derive(Clone, Debug)]
pub struct FrameProducts {
    pub segments: SegmentsMask,
    pub objects: ObjectSegmentsMask,
    pub residuals: Option<Image<f64>>,
    pub binary_motion: Mask,
}

#[derive(Clone, Debug)]
pub struct FrameSummary {
    pub frame: u32,
    pub timestamp: f64,
    /// Camera → world (static map) pose.
    pub camera_pose: Pose,
    /// Whether the static pose came from a converged tracking run.
    pub tracked: bool,
    pub maps_tracked: usize,
    pub instances: usize,
    /// `(static, dynamic)` residual cluster centres when clustering ran.
    pub motion_clusters: Option<(f64, f64)>,
    /// Motion segments (completed to whole geometric segments).
    pub motion: Mask,
    pub invalid: Mask,
    /// Pixels fused into the static map.
    pub static_contributed: Mask,
    pub matches: Vec<(MapId, u32)>,
    pub created_maps: Vec<MapId>,
    pub products: Option<Box<FrameProducts>>,
}

/// Mutable SLAM state: maps, their latest poses and the timing log.
pub struct Pipeline {
    pub config: PipelineConfig,
    pub k: Intrinsics,
    maps: Vec<SurfelMap>,
    /// Latest camera → map pose of every map.
    poses: BTreeMap<MapId, Pose>,
    frame_idx: u32,
    timings: Timings,
    failures: usize,
}

impl Pipeline {
    pub fn new(config: PipelineConfig, k: Intrinsics) -> Self {
        Self {
            config,
            k,
            maps: vec![SurfelMap::new_static()],
            poses: BTreeMap::new(),
            frame_idx: 0,
            timings: Timings::default(),
            failures: 0,
        }
    }

    pub fn maps(&self) -> &[SurfelMap] {
        &self.maps
    }

    pub fn into_maps(self) -> Vec<SurfelMap> {
        self.maps
    }

    pub fn timings(&self) -> &Timings {
        &self.timings
    }

    pub fn frames_processed(&self) -> u32 {
        self.frame_idx
    }

    /// Frames whose static pose was carried forward.
    pub fn tracking_failures(&self) -> usize {
        self.failures
    }

    fn record(&mut self, stage: Stage, ms: f64, models: usize) {
        if self.config.instrumentation {
            self.timings.record(stage, ms, models);
        }
    }

    /// Runs one frame through every stage. `load_detections` runs concurrently
    /// with geometric segmentation.
    pub fn process_frame<F>(&mut self, frame: &Frame, load_detections: F) -> Result<FrameSummary>
    where
        F: FnOnce() -> Result<Vec<Detection>> + Send,
    {
        let frame_start = Instant::now();
        let idx = self.frame_idx;
        let (w, h) = (frame.width(), frame.height());
        if (w, h) != (self.k.width, self.k.height) {
            return Err(Error::SizeMismatch {
                expected: (self.k.width, self.k.height),
                actual: (w, h),
            });
        }
        let cfg = &self.config;
        let k = self.k;
        let use_detections = cfg.use_detections;

        let (((edges, segments), seg_ms), (detections, det_ms)) = rayon::join(
            || timed(|| segment_frame(frame, &cfg.segmentation)),
            || {
                timed(|| {
                    if use_detections {
                        load_detections()
                    } else {
                        Ok(Vec::new())
                    }
                })
            },
        );
        let detections = detections?;

        let (tracks, track_ms) =
            timed(|| track_all_maps(&self.maps, &self.poses, frame, &k, &cfg.tracking));
        let maps_tracked = tracks.values().filter(|t| t.visible()).count();

        let prev_camera = self.poses.get(&STATIC_MAP_ID).copied().unwrap_or_else(Pose::identity);
        let static_track = tracks.get(&STATIC_MAP_ID);
        let stage1 = static_track
            .and_then(|t| t.result.as_ref())
            .filter(|r| r.converged);

        let ((motion, binary_motion, motion_clusters), motion_ms) = timed(|| match stage1 {
            Some(r) if cfg.use_motion_segmentation => {
                let b = binary_motion_mask(&r.residual_map, &frame.valid_mask, &cfg.motion);
                (
                    motion_segments(&b.bits, &segments, cfg.motion.overlap_threshold),
                    b.bits,
                    Some((b.static_centroid, b.dynamic_centroid)),
                )
            }
            _ => (
                MotionSegmentsMask { bits: Mask::empty(w, h), labels: Vec::new() },
                Mask::empty(w, h),
                None,
            ),
        });

        let ((objects, rigid, invalid), objects_ms) = timed(|| {
            let objects = assign_detections(&segments, &detections, &cfg.instances);
            let (rigid, nonrigid) = split_rigid_nonrigid(&objects);
            let invalid = InvalidMask::from_union(&[&motion.bits, &nonrigid.support()]);
            (objects, rigid, invalid)
        });

        let ((camera_pose, tracked), refine_ms) = timed(|| match (static_track, stage1) {
            (Some(t), Some(r)) if invalid.bits.count() > 0 => {
                let refined = refine_static_pose(&t.reference, frame, r, &invalid, &cfg.tracking);
                (refined.pose, true)
            }
            (Some(_), Some(r)) => (r.pose, true),
            _ => (prev_camera, false),
        });
        if !tracked && idx > 0 {
            self.failures += 1;
            log::warn!("frame {idx}: static tracking failed, keeping the previous pose");
        }

        // Object maps: tracked pose when converged, otherwise assume the
        // object kept still in the world since its last pose. Untracked maps
        // still get a mask so they can be matched and grow.
        let world_step = prev_camera.inverse().compose(&camera_pose);
        let mut fused_poses = BTreeMap::new();
        fused_poses.insert(STATIC_MAP_ID, camera_pose);
        let mut next_poses = BTreeMap::new();
        next_poses.insert(STATIC_MAP_ID, camera_pose);
        for m in self.maps.iter().filter(|m| !m.is_static()) {
            let Some(prev) = self.poses.get(&m.id) else { continue };
            let predicted = prev.compose(&world_step);
            match tracks.get(&m.id).and_then(|t| t.result.as_ref()) {
                Some(r) => {
                    let pose = if r.converged { r.pose } else { predicted };
                    fused_poses.insert(m.id, pose);
                    next_poses.insert(m.id, pose);
                }
                None => {
                    fused_poses.insert(m.id, predicted);
                    next_poses.insert(m.id, predicted);
                }
            }
        }

        let ((matches, report), mapping_ms) = timed(|| {
            let map_masks: Vec<MapMask> = self
                .maps
                .par_iter()
                .filter(|m| !m.is_static())
                .filter_map(|m| fused_poses.get(&m.id).map(|p| project_map_mask(m, p, &k)))
                .collect();
            let matches: MatchResult = match_maps_to_objects(&map_masks, &rigid, cfg.match_threshold);
            // Moving pixels outside any kept segment are withheld from the
            // static map too when they border a moving segment or a moving
            // fragment too small to be a segment. Isolated moving edge pixels
            // are fused as usual.
            let unsegmented = |u: usize, v: usize| binary_motion[(u, v)] && segments.labels[(u, v)] == 0;
            let anchors = Mask::from_fn(w, h, |u, v| {
                motion.bits[(u, v)] || (unsegmented(u, v) && !edges.bits[(u, v)])
            })
            .dilate(MOTION_BORDER_PX);
            let stray = Mask::from_fn(w, h, |u, v| unsegmented(u, v) && anchors[(u, v)]);
            let withheld = InvalidMask::from_union(&[&invalid.bits, &stray]);
            let input = FusionInput {
                frame,
                k: &k,
                frame_idx: idx,
                objects: &objects,
                invalid: &withheld,
                matches: &matches,
                poses: &fused_poses,
            };
            let report = fuse_frame(&mut self.maps, &input, &cfg.fusion);
            (matches, report)
        });
        for &id in &report.created_maps {
            next_poses.insert(id, camera_pose);
            fused_poses.insert(id, camera_pose);
        }
        if cfg.drop_empty_maps {
            self.maps.retain(|m| m.is_static() || !m.is_empty());
            next_poses.retain(|id, _| self.maps.iter().any(|m| m.id == *id));
        }
        for m in &mut self.maps {
            if let Some(p) = fused_poses.get(&m.id) {
                m.record_pose(idx, frame.timestamp, *p);
            }
        }
        self.poses = next_poses;

        let products = cfg.debug.any().then(|| {
            Box::new(FrameProducts {
                segments: segments.clone(),
                objects: objects.clone(),
                residuals: static_track.and_then(|t| t.result.as_ref()).map(|r| r.residual_map.clone()),
                binary_motion,
            })
        });
        let static_contributed = report
            .stats
            .get(&STATIC_MAP_ID)
            .map(|s| s.contributed.clone())
            .unwrap_or_else(|| Mask::empty(w, h));

        let models_fused = report.stats.len() + report.shrunk.len();
        self.record(Stage::GeometricSegmentation, seg_ms, 1);
        self.record(Stage::ObjectDetection, det_ms, 1);
        self.record(Stage::InitialTracking, track_ms, maps_tracked);
        self.record(Stage::MotionSegmentation, motion_ms, 1);
        self.record(Stage::ObjectMaskGeneration, objects_ms, 1);
        self.record(Stage::CameraPoseRefinement, refine_ms, 1);
        self.record(Stage::Mapping, mapping_ms, models_fused);
        if self.config.instrumentation {
            let total = frame_start.elapsed().as_secs_f64() * 1e3;
            self.timings.record_frame(total, maps_tracked);
        }
        self.frame_idx += 1;

        Ok(FrameSummary {
            frame: idx,
            timestamp: frame.timestamp,
            camera_pose,
            tracked,
            maps_tracked,
            instances: objects.instances.len(),
            motion_clusters,
            motion: motion.bits,
            invalid: invalid.bits,
            static_contributed,
            matches: matches.matches,
            created_maps: report.created_maps,
            products,
        })
    }
}

/// Everything a run produced.
#[derive(Debug)]
pub struct PipelineOutput {
    /// Camera → world poses.
    pub trajectory: Vec<TrajectoryRecord>,
    /// Object frame → world poses per object map, for frames where the map was tracked.
    pub object_trajectories: BTreeMap<MapId, Vec<TrajectoryRecord>>,
    pub maps: Vec<SurfelMap>,
    pub timings: Timings,
    pub frames: Vec<FrameSummary>,
    pub tracking_failures: usize,
}

/// Object → world poses of `map` given the camera trajectory.
pub fn object_trajectory(map: &SurfelMap, camera: &BTreeMap<u32, Pose>) -> Vec<TrajectoryRecord> {
    map.poses
        .iter()
        .filter_map(|s| {
            let cam = camera.get(&s.frame)?;
            Some(TrajectoryRecord::from_pose(s.timestamp, &cam.compose(&s.pose.inverse())))
        })
        .collect()
}

fn write_text(path: PathBuf, text: &str) -> Result<()> {
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn dump_products(dir: &Path, s: &FrameSummary, dumps: &DebugDumps) -> Result<()> {
    let Some(p) = &s.products else { return Ok(()) };
    let stem = format!("{:06}", s.frame);
    if dumps.labels {
        debug::dump_segments(&dir.join(format!("{stem}_labels.png")), &p.segments)?;
    }
    if dumps.instances {
        debug::dump_instances(&dir.join(format!("{stem}_instances.png")), &p.objects)?;
    }
    if dumps.residuals {
        if let Some(r) = &p.residuals {
            debug::dump_residuals(&dir.join(format!("{stem}_residuals.png")), r)?;
        }
    }
    if dumps.motion {
        debug::dump_mask(&dir.join(format!("{stem}_motion_binary.png")), &p.binary_motion)?;
        debug::dump_mask(&dir.join(format!("{stem}_motion_segments.png")), &s.motion)?;
    }
    Ok(())
}

/// Writes the trajectory, maps, manifest, timing files and effective config.
pub fn export_outputs(dir: &Path, cfg: &PipelineConfig, out: &PipelineOutput) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    export_trajectory(dir.join("trajectory.txt"), &out.trajectory)?;
    for m in &out.maps {
        export_ply(dir.join(format!("map_{}.ply", m.id)), m)?;
    }
    for (id, recs) in &out.object_trajectories {
        export_trajectory(dir.join(format!("object_{id}.txt")), recs)?;
    }
    write_text(dir.join("maps.txt"), &registry_manifest(&out.maps))?;
    if cfg.instrumentation {
        write_text(dir.join("timing.log"), out.timings.log())?;
        write_text(dir.join("timing.txt"), &timing_report(&out.timings).to_string())?;
    }
    let surfels: usize = out.maps.iter().map(|m| m.len()).sum();
    let report = format!(
        "frames={}\nmaps={}\nobject_maps={}\nsurfels={}\ntracking_failures={}\n",
        out.frames.len(),
        out.maps.len(),
        out.maps.iter().filter(|m| !m.is_static()).count(),
        surfels,
        out.tracking_failures
    );
    write_text(dir.join("report.txt"), &report)?;
    write_text(dir.join("config.txt"), &cfg.to_text())
}

/// Loads the dataset named by `cfg`, processes every frame and, when an output
/// directory is configured, writes all results there.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineOutput> {
    cfg.validate()?;
    if !cfg.dataset.is_dir() {
        return Err(Error::io(
            &cfg.dataset,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
        ));
    }
    let mut seq = load_tum_sequence(&cfg.dataset, cfg.max_assoc_gap)?;
    let det_dir = cfg.detections.clone().unwrap_or_else(|| cfg.dataset.join("detections"));
    if cfg.use_detections {
        if det_dir.is_dir() {
            seq = seq.with_detections(&det_dir);
        } else {
            log::info!("no detection directory at {}, running without detections", det_dir.display());
        }
    }
    let k = seq.intrinsics;
    let mut parser = DetectionParser::new(k.width, k.height);
    parser.score_min = cfg.score_min;
    if let Some(p) = &cfg.categories {
        parser.categories = CategoryTable::load(p)?;
    }
    let n = if cfg.max_frames > 0 { cfg.max_frames.min(seq.len()) } else { seq.len() };

    let debug_dir = cfg.output.as_ref().filter(|_| cfg.debug.any()).map(|d| d.join("debug"));
    if let Some(d) = &debug_dir {
        fs::create_dir_all(d).map_err(|e| Error::io(d, e))?;
    }

    let mut pipeline = Pipeline::new(cfg.clone(), k);
    let mut frames = Vec::with_capacity(n);
    let mut trajectory = Vec::with_capacity(n);
    for i in 0..n {
        let frame = seq.load_frame(i, cfg.depth_range)?;
        if i == 0 && frame.valid_mask.count() == 0 {
            return Err(Error::InsufficientData(format!(
                "first frame {} has no valid depth",
                seq.entries[0].depth_path.display()
            )));
        }
        let det_path = seq.entries[i].detections_path.clone();
        let parser = &parser;
        let mut summary = pipeline.process_frame(&frame, move || match det_path {
            Some(p) => parser.load(&p),
            None => Ok(Vec::new()),
        })?;
        log::debug!(
            "frame {i}: {} maps tracked, {} instances, {} motion pixels",
            summary.maps_tracked,
            summary.instances,
            summary.motion.count()
        );
        trajectory.push(TrajectoryRecord::from_pose(summary.timestamp, &summary.camera_pose));
        if let Some(d) = &debug_dir {
            dump_products(d, &summary, &cfg.debug)?;
        }
        summary.products = None;
        frames.push(summary);
    }

    let camera: BTreeMap<u32, Pose> = frames.iter().map(|f| (f.frame, f.camera_pose)).collect();
    let tracking_failures = pipeline.tracking_failures();
    let timings = pipeline.timings().clone();
    let maps = pipeline.into_maps();
    let object_trajectories = maps
        .iter()
        .filter(|m| !m.is_static())
        .map(|m| (m.id, object_trajectory(m, &camera)))
        .collect();
    let out = PipelineOutput {
        trajectory,
        object_trajectories,
        maps,
        timings,
        frames,
        tracking_failures,
    };
    if let Some(dir) = &cfg.output {
        export_outputs(dir, cfg, &out)?;
    }
    Ok(out)
}
