//! TUM RGB-D directory layout: `rgb.txt` / `depth.txt` listings and PNG frames.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::frame::{DepthRange, Frame, Rgb};
use crate::geometry::Intrinsics;
use crate::image::Image;

/// Name of the optional per-sequence intrinsics file: `fx fy cx cy width height depth_scale`.
pub const CAMERA_FILE: &str = "camera.txt";

pub const DEFAULT_MAX_ASSOC_GAP: f64 = 0.02;

#[derive(Clone, Debug, PartialEq)]
pub struct ListingEntry {
    pub timestamp: f64,
    pub file: String,
}

/// Parses a `timestamp filename` listing. Timestamps must be strictly increasing.
pub fn parse_listing(text: &str, path: &Path) -> Result<Vec<ListingEntry>> {
    let mut out: Vec<ListingEntry> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split_whitespace();
        let (Some(ts), Some(file)) = (fields.next(), fields.next()) else {
            return Err(Error::parse(path, line_no, "expected `timestamp filename`"));
        };
        let timestamp: f64 = ts
            .parse()
            .map_err(|_| Error::parse(path, line_no, format!("bad timestamp `{ts}`")))?;
        if !timestamp.is_finite() {
            return Err(Error::parse(path, line_no, "non-finite timestamp"));
        }
        if let Some(prev) = out.last() {
            if timestamp <= prev.timestamp {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!(
                        "timestamp {timestamp} is not after the previous entry {}",
                        prev.timestamp
                    ),
                ));
            }
        }
        out.push(ListingEntry {
            timestamp,
            file: file.to_string(),
        });
    }
    Ok(out)
}

/// Greedy nearest-timestamp association between two sorted timestamp streams.
///
/// All candidate pairs with gap `≤ max_gap` are visited in order of increasing
/// gap and accepted when neither side is already used. Returns `(index_a,
/// index_b)` sorted by `index_a`.
pub fn associate(a: &[f64], b: &[f64], max_gap: f64) -> Vec<(usize, usize)> {
    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, &ta) in a.iter().enumerate() {
        let start = b.partition_point(|&tb| tb < ta - max_gap);
        for (j, &tb) in b.iter().enumerate().skip(start) {
            if tb > ta + max_gap {
                break;
            }
            let gap = (ta - tb).abs();
            if gap <= max_gap {
                candidates.push((gap, i, j));
            }
        }
    }
    // Tie-break on the unordered timestamp pair so swapping the streams gives the same result.
    candidates.sort_by(|x, y| {
        let kx = (a[x.1].min(b[x.2]), a[x.1].max(b[x.2]));
        let ky = (a[y.1].min(b[y.2]), a[y.1].max(b[y.2]));
        x.0.total_cmp(&y.0)
            .then(kx.0.total_cmp(&ky.0))
            .then(kx.1.total_cmp(&ky.1))
    });
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    pairs
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceEntry {
    pub timestamp: f64,
    pub rgb_path: PathBuf,
    pub depth_path: PathBuf,
    pub detections_path: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct SequenceIndex {
    pub root: PathBuf,
    pub entries: Vec<SequenceEntry>,
    pub intrinsics: Intrinsics,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Reads `camera.txt` when present, otherwise the TUM default calibration.
pub fn load_intrinsics(dir: &Path) -> Result<Intrinsics> {
    let path = dir.join(CAMERA_FILE);
    if !path.exists() {
        return Ok(Intrinsics::TUM_DEFAULT);
    }
    let text = read_text(&path)?;
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|s| s.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::parse(&path, idx + 1, e.to_string()))?;
        if vals.len() != 7 {
            return Err(Error::parse(
                &path,
                idx + 1,
                "expected `fx fy cx cy width height depth_scale`",
            ));
        }
        let k = Intrinsics {
            fx: vals[0],
            fy: vals[1],
            cx: vals[2],
            cy: vals[3],
            width: vals[4] as usize,
            height: vals[5] as usize,
            depth_scale: vals[6],
        };
        if !k.is_valid() {
            return Err(Error::parse(&path, idx + 1, "invalid intrinsics"));
        }
        return Ok(k);
    }
    Err(Error::parse(&path, 1, "empty camera file"))
}

pub fn write_intrinsics(dir: &Path, k: &Intrinsics) -> Result<()> {
    let path = dir.join(CAMERA_FILE);
    let text = format!(
        "# fx fy cx cy width height depth_scale\n{} {} {} {} {} {} {}\n",
        k.fx, k.fy, k.cx, k.cy, k.width, k.height, k.depth_scale
    );
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Loads and associates the `rgb.txt` / `depth.txt` listings of a TUM-style sequence.
pub fn load_tum_sequence(dir: impl AsRef<Path>, max_assoc_gap: f64) -> Result<SequenceIndex> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
        ));
    }
    let rgb_path = dir.join("rgb.txt");
    let depth_path = dir.join("depth.txt");
    let rgb = parse_listing(&read_text(&rgb_path)?, &rgb_path)?;
    let depth = parse_listing(&read_text(&depth_path)?, &depth_path)?;
    let ta: Vec<f64> = rgb.iter().map(|e| e.timestamp).collect();
    let tb: Vec<f64> = depth.iter().map(|e| e.timestamp).collect();
    let pairs = associate(&ta, &tb, max_assoc_gap);
    if pairs.is_empty() {
        return Err(Error::EmptySequence(dir.to_path_buf()));
    }
    let entries = pairs
        .into_iter()
        .map(|(i, j)| SequenceEntry {
            timestamp: rgb[i].timestamp,
            rgb_path: dir.join(&rgb[i].file),
            depth_path: dir.join(&depth[j].file),
            detections_path: None,
        })
        .collect();
    Ok(SequenceIndex {
        root: dir.to_path_buf(),
        entries,
        intrinsics: load_intrinsics(dir)?,
    })
}

impl SequenceIndex {
    /// Attaches the per-frame detection file path (`<timestamp:.6>.det`) of each entry.
    pub fn with_detections(mut self, dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        for e in &mut self.entries {
            e.detections_path = Some(dir.join(super::detections::detection_file_name(e.timestamp)));
        }
        self
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn load_frame(&self, index: usize, range: DepthRange) -> Result<Frame> {
        let e = &self.entries[index];
        let rgb = read_rgb_png(&e.rgb_path)?;
        let depth = read_depth_png(&e.depth_path, self.intrinsics.depth_scale)?;
        Frame::new(e.timestamp, rgb, depth, &self.intrinsics, range)
    }
}

pub fn read_rgb_png(path: &Path) -> Result<Image<Rgb>> {
    let img = image::open(path)
        .map_err(|e| Error::image(path, e))?
        .into_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.pixels().map(|p| p.0).collect();
    Ok(Image::from_vec(w, h, data))
}

/// Decodes a 16-bit depth PNG into meters.
pub fn read_depth_png(path: &Path, depth_scale: f64) -> Result<Image<f64>> {
    let img = image::open(path).map_err(|e| Error::image(path, e))?;
    let img = match img {
        image::DynamicImage::ImageLuma16(buf) => buf,
        other => {
            return Err(Error::parse(
                path,
                0,
                format!("expected a 16-bit single-channel depth PNG, got {:?}", other.color()),
            ))
        }
    };
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.pixels().map(|p| p.0[0] as f64 / depth_scale).collect();
    Ok(Image::from_vec(w, h, data))
}

pub fn write_rgb_png(path: &Path, rgb: &Image<Rgb>) -> Result<()> {
    let buf = image::RgbImage::from_raw(
        rgb.width() as u32,
        rgb.height() as u32,
        rgb.data().iter().flatten().copied().collect(),
    )
    .expect("buffer size matches image dims");
    buf.save(path).map_err(|e| Error::image(path, e))
}

/// Encodes metric depth as a 16-bit PNG (`round(d · depth_scale)`, saturating).
pub fn write_depth_png(path: &Path, depth: &Image<f64>, depth_scale: f64) -> Result<()> {
    let raw: Vec<u16> = depth
        .data()
        .iter()
        .map(|&d| {
            if d > 0.0 && d.is_finite() {
                (d * depth_scale).round().clamp(0.0, u16::MAX as f64) as u16
            } else {
                0
            }
        })
        .collect();
    let buf: image::ImageBuffer<image::Luma<u16>, Vec<u16>> =
        image::ImageBuffer::from_raw(depth.width() as u32, depth.height() as u32, raw)
            .expect("buffer size matches image dims");
    buf.save(path).map_err(|e| Error::image(path, e))
}
