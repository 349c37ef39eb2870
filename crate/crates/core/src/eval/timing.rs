//! Per-stage timing samples, their line log and the summary table.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::Path;

use crate::error::{Error, Result};

/// Processing stages in per-frame order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    InitialTracking,
    GeometricSegmentation,
    ObjectDetection,
    MotionSegmentation,
    ObjectMaskGeneration,
    CameraPoseRefinement,
    Mapping,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::InitialTracking,
        Stage::GeometricSegmentation,
        Stage::ObjectDetection,
        Stage::MotionSegmentation,
        Stage::ObjectMaskGeneration,
        Stage::CameraPoseRefinement,
        Stage::Mapping,
    ];

    pub fn title(self) -> &'static str {
        match self {
            Stage::InitialTracking => "Initial Tracking",
            Stage::GeometricSegmentation => "Geometric segmentation",
            Stage::ObjectDetection => "Object Detection",
            Stage::MotionSegmentation => "Motion Segmentation",
            Stage::ObjectMaskGeneration => "Object Mask Generation",
            Stage::CameraPoseRefinement => "Camera Pose refinement",
            Stage::Mapping => "Mapping",
        }
    }

    pub fn key(self) -> &'static str {
        match self {
            Stage::InitialTracking => "initial_tracking",
            Stage::GeometricSegmentation => "geometric_segmentation",
            Stage::ObjectDetection => "object_detection",
            Stage::MotionSegmentation => "motion_segmentation",
            Stage::ObjectMaskGeneration => "object_mask_generation",
            Stage::CameraPoseRefinement => "camera_pose_refinement",
            Stage::Mapping => "mapping",
        }
    }

    /// Stages whose cost grows with the number of maps.
    pub fn per_model(self) -> bool {
        matches!(self, Stage::InitialTracking | Stage::Mapping)
    }

    /// Stages that run concurrently with each other.
    pub fn concurrent(self) -> bool {
        matches!(self, Stage::GeometricSegmentation | Stage::ObjectDetection)
    }

    pub fn from_key(key: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|s| s.key() == key)
    }
}

pub const FRAME_TOTAL_KEY: &str = "frame_total";

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sample {
    pub ms: f64,
    /// Number of maps the stage worked on (1 for per-frame stages).
    pub models: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Timings {
    pub stages: BTreeMap<Stage, Vec<Sample>>,
    pub frames: Vec<Sample>,
    log: String,
}

impl Timings {
    pub fn record(&mut self, stage: Stage, ms: f64, models: usize) {
        self.stages.entry(stage).or_default().push(Sample { ms, models });
        if stage.per_model() {
            let _ = writeln!(self.log, "{} {ms:.3} {models}", stage.key());
        } else {
            let _ = writeln!(self.log, "{} {ms:.3}", stage.key());
        }
    }

    pub fn record_frame(&mut self, ms: f64, models: usize) {
        self.frames.push(Sample { ms, models });
        let _ = writeln!(self.log, "{FRAME_TOTAL_KEY} {ms:.3} {models}");
    }

    /// Line-delimited `stage_name ms [models]` records in recording order.
    pub fn log(&self) -> &str {
        &self.log
    }

    pub fn parse_log(text: &str, path: &Path) -> Result<Timings> {
        let mut t = Timings::default();
        for (idx, line) in text.lines().enumerate() {
            let toks: Vec<&str> = line.split_whitespace().collect();
            if toks.is_empty() || toks[0].starts_with('#') {
                continue;
            }
            let bad = || Error::parse(path, idx + 1, format!("bad timing record `{line}`"));
            if toks.len() < 2 || toks.len() > 3 {
                return Err(bad());
            }
            let ms: f64 = toks[1].parse().map_err(|_| bad())?;
            let models: usize = match toks.get(2) {
                Some(m) => m.parse().map_err(|_| bad())?,
                None => 1,
            };
            if toks[0] == FRAME_TOTAL_KEY {
                t.record_frame(ms, models);
            } else {
                let stage = Stage::from_key(toks[0]).ok_or_else(bad)?;
                t.record(stage, ms, models);
            }
        }
        Ok(t)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingRow {
    pub stage: Stage,
    /// Mean time per frame, or per map for per-model stages.
    pub mean_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TimingReport {
    pub rows: Vec<TimingRow>,
    /// `total ≈ base_ms + per_model_ms · models`; absent without frame totals.
    pub total: Option<(f64, f64)>,
    pub frames: usize,
}

/// Means per stage (stages without samples are omitted). Per-model stages are
/// averaged per map. The total splits the mean frame time into a fixed part and
/// the summed per-model stage cost.
pub fn timing_report(t: &Timings) -> TimingReport {
    let rows: Vec<TimingRow> = Stage::ALL
        .iter()
        .filter_map(|&stage| {
            let samples = t.stages.get(&stage).filter(|s| !s.is_empty())?;
            let ms: f64 = samples.iter().map(|s| s.ms).sum();
            let mean_ms = if stage.per_model() {
                let models: usize = samples.iter().map(|s| s.models).sum();
                if models == 0 {
                    return None;
                }
                ms / models as f64
            } else {
                ms / samples.len() as f64
            };
            Some(TimingRow { stage, mean_ms })
        })
        .collect();
    let total = (!t.frames.is_empty()).then(|| {
        let n = t.frames.len() as f64;
        let mean_frame = t.frames.iter().map(|s| s.ms).sum::<f64>() / n;
        let mean_models = t.frames.iter().map(|s| s.models as f64).sum::<f64>() / n;
        let per_model: f64 = rows.iter().filter(|r| r.stage.per_model()).map(|r| r.mean_ms).sum();
        (mean_frame - per_model * mean_models, per_model)
    });
    TimingReport {
        rows,
        total,
        frames: t.frames.len(),
    }
}

/// Three significant figures, as in "46.1" or "5.16".
fn sig3(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x:.2}");
    }
    let digits = (2 - x.abs().log10().floor() as i32).max(0) as usize;
    format!("{x:.digits$}")
}

impl fmt::Display for TimingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<28} Runtime [ms]", "Component")?;
        for r in &self.rows {
            let mark = if r.stage.concurrent() { " *" } else { "" };
            let name = format!("{}{mark}", r.stage.title());
            if r.stage.per_model() {
                writeln!(f, "{name:<28} {} / model", sig3(r.mean_ms))?;
            } else {
                writeln!(f, "{name:<28} {}", sig3(r.mean_ms))?;
            }
        }
        if let Some((base, per_model)) = self.total {
            writeln!(f, "{:<28} {} + {} / model", "Total", sig3(base), sig3(per_model))?;
        }
        Ok(())
    }
}
