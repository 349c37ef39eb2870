//! PNG dumps of intermediate masks for inspection.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use image::{GrayImage, RgbImage};

use crate::error::{Error, Result};
use crate::image::{Image, Mask};
use crate::instance::ObjectSegmentsMask;
use crate::segmentation::SegmentsMask;
use crate::tracking::NO_RESIDUAL;

/// Stable, well-spread color for a label; 0 is black.
pub fn label_color(label: u32) -> [u8; 3] {
    if label == 0 {
        return [0, 0, 0];
    }
    let mut h = label.wrapping_mul(0x9E37_79B1);
    h ^= h >> 15;
    h = h.wrapping_mul(0x85EB_CA77);
    h ^= h >> 13;
    let c = |s: u32| 64 + ((h >> s) & 0xBF) as u8;
    [c(0), c(8), c(16)]
}

fn save_rgb(path: &Path, img: &Image<[u8; 3]>) -> Result<()> {
    let buf = RgbImage::from_fn(img.width() as u32, img.height() as u32, |u, v| {
        image::Rgb(img[(u as usize, v as usize)])
    });
    buf.save(path).map_err(|e| Error::image(path, e))
}

pub fn label_image(labels: &Image<u32>) -> Image<[u8; 3]> {
    labels.map(|&l| label_color(l))
}

pub fn dump_segments(path: &Path, segments: &SegmentsMask) -> Result<()> {
    save_rgb(path, &label_image(&segments.labels))
}

/// Instance colors plus a `.txt` sidecar listing the instance table.
pub fn dump_instances(path: &Path, objects: &ObjectSegmentsMask) -> Result<()> {
    save_rgb(path, &label_image(&objects.instance_labels))?;
    let mut table = String::from("# instance_id class_id class_name rigid score x y w h pixels\n");
    for i in &objects.instances {
        let _ = writeln!(
            table,
            "{} {} {} {} {:.4} {} {} {} {} {}",
            i.instance_id,
            i.class_id,
            i.class_name,
            if i.rigid { "rigid" } else { "nonrigid" },
            i.score,
            i.bbox.x,
            i.bbox.y,
            i.bbox.w,
            i.bbox.h,
            i.pixel_count
        );
    }
    let side = path.with_extension("txt");
    fs::write(&side, table).map_err(|e| Error::io(&side, e))
}

/// Blue → red heat map of residuals, scaled to `max` (or the largest value);
/// pixels without a residual are black.
pub fn residual_heatmap(residuals: &Image<f64>, max: Option<f64>) -> Image<[u8; 3]> {
    let top = max.unwrap_or_else(|| residuals.data().iter().copied().fold(0.0, f64::max));
    let top = if top > 0.0 { top } else { 1.0 };
    residuals.map(|&r| {
        if r == NO_RESIDUAL {
            return [0, 0, 0];
        }
        let t = (r / top).clamp(0.0, 1.0).sqrt();
        let ramp = |x: f64| (255.0 * x.clamp(0.0, 1.0)).round() as u8;
        [ramp(2.0 * t), ramp(1.0 - (2.0 * t - 1.0).abs()), ramp(2.0 - 2.0 * t)]
    })
}

pub fn dump_residuals(path: &Path, residuals: &Image<f64>) -> Result<()> {
    save_rgb(path, &residual_heatmap(residuals, None))
}

pub fn dump_mask(path: &Path, mask: &Mask) -> Result<()> {
    let buf = GrayImage::from_fn(mask.width() as u32, mask.height() as u32, |u, v| {
        image::Luma([if mask[(u as usize, v as usize)] { 255 } else { 0 }])
    });
    buf.save(path).map_err(|e| Error::image(path, e))
}
