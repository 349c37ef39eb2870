//! Flat `key = value` configuration with `[section]` headers.
//!
//! ```text
//! [dataset]
//! path = data/walking_xyz
//! score_min = 0.5
//!
//! [tracking]
//! iterations = 10,5,4
//! ```
//!
//! Every key is addressed as `section.key`; unknown keys are rejected.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::dataset::tum::DEFAULT_MAX_ASSOC_GAP;
use crate::error::{Error, Result};
use crate::frame::DepthRange;
use crate::instance::{InstanceParams, OverlapMetric};
use crate::mapping::FusionParams;
use crate::motion::MotionParams;
use crate::segmentation::SegmentationParams;
use crate::tracking::TrackingParams;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DebugDumps {
    pub labels: bool,
    pub instances: bool,
    pub residuals: bool,
    pub motion: bool,
}

impl DebugDumps {
    pub fn any(&self) -> bool {
        self.labels || self.instances || self.residuals || self.motion
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub dataset: PathBuf,
    /// Directory of `.det` files; defaults to `<dataset>/detections`.
    pub detections: Option<PathBuf>,
    /// Category rigidity table; built-in table when absent.
    pub categories: Option<PathBuf>,
    pub output: Option<PathBuf>,
    pub score_min: f64,
    pub depth_range: DepthRange,
    pub max_assoc_gap: f64,
    /// 0 processes the whole sequence.
    pub max_frames: usize,
    pub use_detections: bool,
    pub use_motion_segmentation: bool,
    pub instrumentation: bool,
    pub segmentation: SegmentationParams,
    pub instances: InstanceParams,
    pub tracking: TrackingParams,
    pub motion: MotionParams,
    pub fusion: FusionParams,
    /// Minimum |map mask ∩ instance| / |instance| for a map-object match.
    pub match_threshold: f64,
    /// Removes object maps that lost all their surfels.
    pub drop_empty_maps: bool,
    pub debug: DebugDumps,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            dataset: PathBuf::new(),
            detections: None,
            categories: None,
            output: None,
            score_min: 0.5,
            depth_range: DepthRange::default(),
            max_assoc_gap: DEFAULT_MAX_ASSOC_GAP,
            max_frames: 0,
            use_detections: true,
            use_motion_segmentation: true,
            instrumentation: true,
            segmentation: SegmentationParams::default(),
            instances: InstanceParams::default(),
            tracking: TrackingParams::default(),
            motion: MotionParams::default(),
            fusion: FusionParams::default(),
            match_threshold: 0.3,
            drop_empty_maps: false,
            debug: DebugDumps::default(),
        }
    }
}

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Config(format!("invalid value `{raw}` for `{key}`")))
}

fn flag(key: &str, raw: &str) -> Result<bool> {
    match raw {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean `{raw}` for `{key}`"))),
    }
}

fn opt_path(raw: &str) -> Option<PathBuf> {
    (!raw.is_empty()).then(|| PathBuf::from(raw))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl PipelineConfig {
    /// Every accepted key, in file order.
    pub const KEYS: &'static [&'static str] = &[
        "dataset.path",
        "dataset.detections",
        "dataset.categories",
        "dataset.score_min",
        "dataset.depth_min",
        "dataset.depth_max",
        "dataset.max_assoc_gap",
        "dataset.max_frames",
        "output.dir",
        "pipeline.detections",
        "pipeline.motion_segmentation",
        "pipeline.instrumentation",
        "segmentation.theta_dist",
        "segmentation.theta_angle_deg",
        "segmentation.min_segment_area",
        "instances.metric",
        "instances.overlap_threshold",
        "instances.allow_empty",
        "tracking.iterations",
        "tracking.lambda_rgb",
        "tracking.dist_thresh",
        "tracking.angle_thresh_deg",
        "tracking.min_inliers",
        "tracking.min_visible_pixels",
        "tracking.object_min_pixels",
        "tracking.convergence_eps",
        "tracking.max_halvings",
        "motion.min_dynamic_centroid",
        "motion.overlap_threshold",
        "motion.max_samples",
        "mapping.assoc_dist",
        "mapping.assoc_angle_deg",
        "mapping.w_new",
        "mapping.cull_weight",
        "mapping.stability_frames",
        "mapping.shrink_step",
        "mapping.min_object_pixels",
        "mapping.inactive_timeout",
        "mapping.match_threshold",
        "mapping.drop_empty_maps",
        "debug.labels",
        "debug.instances",
        "debug.residuals",
        "debug.motion",
    ];

    /// Sets one `section.key`.
    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let raw = raw.trim();
        match key {
            "dataset.path" => self.dataset = PathBuf::from(raw),
            "dataset.detections" => self.detections = opt_path(raw),
            "dataset.categories" => self.categories = opt_path(raw),
            "dataset.score_min" => self.score_min = value(key, raw)?,
            "dataset.depth_min" => self.depth_range.min = value(key, raw)?,
            "dataset.depth_max" => self.depth_range.max = value(key, raw)?,
            "dataset.max_assoc_gap" => self.max_assoc_gap = value(key, raw)?,
            "dataset.max_frames" => self.max_frames = value(key, raw)?,
            "output.dir" => self.output = opt_path(raw),
            "pipeline.detections" => self.use_detections = flag(key, raw)?,
            "pipeline.motion_segmentation" => self.use_motion_segmentation = flag(key, raw)?,
            "pipeline.instrumentation" => self.instrumentation = flag(key, raw)?,
            "segmentation.theta_dist" => self.segmentation.theta_dist = value(key, raw)?,
            "segmentation.theta_angle_deg" => {
                self.segmentation.theta_angle = value::<f64>(key, raw)?.to_radians()
            }
            "segmentation.min_segment_area" => self.segmentation.min_segment_area = value(key, raw)?,
            "instances.metric" => self.instances.metric = value::<OverlapMetric>(key, raw)?,
            "instances.overlap_threshold" => self.instances.overlap_threshold = value(key, raw)?,
            "instances.allow_empty" => self.instances.allow_empty_instances = flag(key, raw)?,
            "tracking.iterations" => {
                self.tracking.iterations = raw
                    .split(',')
                    .map(|s| value(key, s.trim()))
                    .collect::<Result<_>>()?
            }
            "tracking.lambda_rgb" => self.tracking.lambda_rgb = value(key, raw)?,
            "tracking.dist_thresh" => self.tracking.dist_thresh = value(key, raw)?,
            "tracking.angle_thresh_deg" => {
                self.tracking.angle_thresh = value::<f64>(key, raw)?.to_radians()
            }
            "tracking.min_inliers" => self.tracking.min_inliers = value(key, raw)?,
            "tracking.min_visible_pixels" => self.tracking.min_visible_pixels = value(key, raw)?,
            "tracking.object_min_pixels" => self.tracking.object_min_pixels = value(key, raw)?,
            "tracking.convergence_eps" => self.tracking.convergence_eps = value(key, raw)?,
            "tracking.max_halvings" => self.tracking.max_halvings = value(key, raw)?,
            "motion.min_dynamic_centroid" => self.motion.min_dynamic_centroid = value(key, raw)?,
            "motion.overlap_threshold" => self.motion.overlap_threshold = value(key, raw)?,
            "motion.max_samples" => self.motion.max_samples = value(key, raw)?,
            "mapping.assoc_dist" => self.fusion.assoc_dist = value(key, raw)?,
            "mapping.assoc_angle_deg" => {
                self.fusion.assoc_angle = value::<f64>(key, raw)?.to_radians()
            }
            "mapping.w_new" => self.fusion.w_new = value(key, raw)?,
            "mapping.cull_weight" => self.fusion.cull_weight = value(key, raw)?,
            "mapping.stability_frames" => self.fusion.stability_frames = value(key, raw)?,
            "mapping.shrink_step" => self.fusion.shrink_step = value(key, raw)?,
            "mapping.min_object_pixels" => self.fusion.min_object_pixels = value(key, raw)?,
            "mapping.inactive_timeout" => self.fusion.inactive_timeout = value(key, raw)?,
            "mapping.match_threshold" => self.match_threshold = value(key, raw)?,
            "mapping.drop_empty_maps" => self.drop_empty_maps = flag(key, raw)?,
            "debug.labels" => self.debug.labels = flag(key, raw)?,
            "debug.instances" => self.debug.instances = flag(key, raw)?,
            "debug.residuals" => self.debug.residuals = flag(key, raw)?,
            "debug.motion" => self.debug.motion = flag(key, raw)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `section.key=value` overrides in order.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let o = o.as_ref();
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override `{o}` is not `section.key=value`")))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = Self::default();
        let mut section: Option<String> = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = Some(name.trim().to_string());
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(path, idx + 1, "expected `key = value`"))?;
            let Some(sec) = &section else {
                return Err(Error::parse(path, idx + 1, format!("`{}` outside any [section]", k.trim())));
            };
            cfg.set(&format!("{sec}.{}", k.trim()), v)
                .map_err(|e| Error::parse(path, idx + 1, e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    fn get(&self, key: &str) -> String {
        let t = &self.tracking;
        let f = &self.fusion;
        match key {
            "dataset.path" => self.dataset.display().to_string(),
            "dataset.detections" => show_path(&self.detections),
            "dataset.categories" => show_path(&self.categories),
            "dataset.score_min" => self.score_min.to_string(),
            "dataset.depth_min" => self.depth_range.min.to_string(),
            "dataset.depth_max" => self.depth_range.max.to_string(),
            "dataset.max_assoc_gap" => self.max_assoc_gap.to_string(),
            "dataset.max_frames" => self.max_frames.to_string(),
            "output.dir" => show_path(&self.output),
            "pipeline.detections" => self.use_detections.to_string(),
            "pipeline.motion_segmentation" => self.use_motion_segmentation.to_string(),
            "pipeline.instrumentation" => self.instrumentation.to_string(),
            "segmentation.theta_dist" => self.segmentation.theta_dist.to_string(),
            "segmentation.theta_angle_deg" => self.segmentation.theta_angle.to_degrees().to_string(),
            "segmentation.min_segment_area" => self.segmentation.min_segment_area.to_string(),
            "instances.metric" => self.instances.metric.to_string(),
            "instances.overlap_threshold" => self.instances.overlap_threshold.to_string(),
            "instances.allow_empty" => self.instances.allow_empty_instances.to_string(),
            "tracking.iterations" => t.iterations.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(","),
            "tracking.lambda_rgb" => t.lambda_rgb.to_string(),
            "tracking.dist_thresh" => t.dist_thresh.to_string(),
            "tracking.angle_thresh_deg" => t.angle_thresh.to_degrees().to_string(),
            "tracking.min_inliers" => t.min_inliers.to_string(),
            "tracking.min_visible_pixels" => t.min_visible_pixels.to_string(),
            "tracking.object_min_pixels" => t.object_min_pixels.to_string(),
            "tracking.convergence_eps" => t.convergence_eps.to_string(),
            "tracking.max_halvings" => t.max_halvings.to_string(),
            "motion.min_dynamic_centroid" => self.motion.min_dynamic_centroid.to_string(),
            "motion.overlap_threshold" => self.motion.overlap_threshold.to_string(),
            "motion.max_samples" => self.motion.max_samples.to_string(),
            "mapping.assoc_dist" => f.assoc_dist.to_string(),
            "mapping.assoc_angle_deg" => f.assoc_angle.to_degrees().to_string(),
            "mapping.w_new" => f.w_new.to_string(),
            "mapping.cull_weight" => f.cull_weight.to_string(),
            "mapping.stability_frames" => f.stability_frames.to_string(),
            "mapping.shrink_step" => f.shrink_step.to_string(),
            "mapping.min_object_pixels" => f.min_object_pixels.to_string(),
            "mapping.inactive_timeout" => f.inactive_timeout.to_string(),
            "mapping.match_threshold" => self.match_threshold.to_string(),
            "mapping.drop_empty_maps" => self.drop_empty_maps.to_string(),
            "debug.labels" => self.debug.labels.to_string(),
            "debug.instances" => self.debug.instances.to_string(),
            "debug.residuals" => self.debug.residuals.to_string(),
            "debug.motion" => self.debug.motion.to_string(),
            _ => unreachable!("key list and getter disagree on `{key}`"),
        }
    }

    /// The configuration in file form; parsing it gives back the same values.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut current = "";
        for key in Self::KEYS {
            let (sec, name) = key.split_once('.').expect("sectioned key");
            if sec != current {
                if !out.is_empty() {
                    out.push('\n');
                }
                let _ = writeln!(out, "[{sec}]");
                current = sec;
            }
            let _ = writeln!(out, "{name} = {}", self.get(key));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.dataset.as_os_str().is_empty() {
            return bad("dataset.path is required");
        }
        if !(self.depth_range.min > 0.0 && self.depth_range.max > self.depth_range.min) {
            return bad("need 0 < dataset.depth_min < dataset.depth_max");
        }
        if !(0.0..=1.0).contains(&self.score_min) {
            return bad("dataset.score_min must lie in [0, 1]");
        }
        if self.tracking.iterations.is_empty() {
            return bad("tracking.iterations needs at least one level");
        }
        if self.tracking.lambda_rgb < 0.0 || self.tracking.dist_thresh <= 0.0 {
            return bad("tracking.lambda_rgb must be ≥ 0 and tracking.dist_thresh > 0");
        }
        for (name, v) in [
            ("instances.overlap_threshold", self.instances.overlap_threshold),
            ("motion.overlap_threshold", self.motion.overlap_threshold),
            ("mapping.match_threshold", self.match_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        if self.segmentation.theta_dist <= 0.0 || self.fusion.assoc_dist <= 0.0 {
            return bad("distance thresholds must be positive");
        }
        if self.fusion.w_new <= 0.0 || self.motion.max_samples < 2 {
            return bad("mapping.w_new must be positive and motion.max_samples ≥ 2");
        }
        Ok(())
    }
}
