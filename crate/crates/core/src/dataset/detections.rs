//! Per-frame 2D detection files and the category rigidity table.
//!
//! One file per frame named `<timestamp with 6 decimals>.det`, holding lines
//! `class_id class_name score x y w h` (pixels, top-left origin) and `#` comments.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

/// Integer pixel rectangle `[x, x + w) × [y, y + h)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BBox {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl BBox {
    pub fn area(&self) -> usize {
        self.w * self.h
    }

    #[inline]
    pub fn contains(&self, u: usize, v: usize) -> bool {
        u >= self.x && v >= self.y && u < self.x + self.w && v < self.y + self.h
    }

    /// Clamps a floating-point box to `width × height`; `None` if nothing remains.
    pub fn clamped(x: f64, y: f64, w: f64, h: f64, width: usize, height: usize) -> Option<BBox> {
        let x0 = x.max(0.0).round() as usize;
        let y0 = y.max(0.0).round() as usize;
        let x1 = ((x + w).round().max(0.0) as usize).min(width);
        let y1 = ((y + h).round().max(0.0) as usize).min(height);
        (x1 > x0 && y1 > y0).then(|| BBox {
            x: x0,
            y: y0,
            w: x1 - x0,
            h: y1 - y0,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Detection {
    pub class_id: i64,
    pub class_name: String,
    pub score: f64,
    pub bbox: BBox,
    pub rigid: bool,
}

/// Which object categories may be mapped as rigid bodies.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoryTable {
    entries: BTreeMap<String, bool>,
}

const COCO_CLASSES: [&str; 80] = [
    "person", "bicycle", "car", "motorbike", "aeroplane", "bus", "train", "truck", "boat",
    "traffic light", "fire hydrant", "stop sign", "parking meter", "bench", "bird", "cat", "dog",
    "horse", "sheep", "cow", "elephant", "bear", "zebra", "giraffe", "backpack", "umbrella",
    "handbag", "tie", "suitcase", "frisbee", "skis", "snowboard", "sports ball", "kite",
    "baseball bat", "baseball glove", "skateboard", "surfboard", "tennis racket", "bottle",
    "wine glass", "cup", "fork", "knife", "spoon", "bowl", "banana", "apple", "sandwich",
    "orange", "broccoli", "carrot", "hot dog", "pizza", "donut", "cake", "chair", "sofa",
    "pottedplant", "bed", "diningtable", "toilet", "tvmonitor", "laptop", "mouse", "remote",
    "keyboard", "cell phone", "microwave", "oven", "toaster", "sink", "refrigerator", "book",
    "clock", "vase", "scissors", "teddy bear", "hair drier", "toothbrush",
];

impl Default for CategoryTable {
    /// COCO categories, all rigid except `person`.
    fn default() -> Self {
        let entries = COCO_CLASSES
            .iter()
            .map(|&name| (name.to_string(), name != "person"))
            .collect();
        Self { entries }
    }
}

impl CategoryTable {
    pub fn empty() -> Self {
        Self {
            entries: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, class_name: &str, rigid: bool) {
        self.entries.insert(class_name.to_string(), rigid);
    }

    /// Parses `class_name rigid|nonrigid` lines. Class names may contain spaces;
    /// the last token is the rigidity.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut table = Self::empty();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((name, kind)) = line.rsplit_once(char::is_whitespace) else {
                return Err(Error::parse(path, idx + 1, "expected `class_name rigid|nonrigid`"));
            };
            let rigid = match kind.trim() {
                "rigid" => true,
                "nonrigid" | "non-rigid" => false,
                other => {
                    return Err(Error::parse(
                        path,
                        idx + 1,
                        format!("unknown rigidity `{other}`"),
                    ))
                }
            };
            table.insert(name.trim(), rigid);
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn get(&self, class_name: &str) -> Option<bool> {
        self.entries.get(class_name).copied()
    }

    /// Rigidity of a class; unknown classes are treated as rigid with a warning.
    pub fn is_rigid(&self, class_name: &str) -> bool {
        match self.get(class_name) {
            Some(r) => r,
            None => {
                log::warn!("unknown object class `{class_name}`, treating it as rigid");
                true
            }
        }
    }
}

/// Parsing parameters shared by every frame of a sequence.
#[derive(Clone, Debug)]
pub struct DetectionParser {
    pub width: usize,
    pub height: usize,
    pub score_min: f64,
    pub categories: CategoryTable,
}

impl DetectionParser {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            score_min: 0.5,
            categories: CategoryTable::default(),
        }
    }

    pub fn parse(&self, text: &str, path: &Path) -> Result<Vec<Detection>> {
        let mut out = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 7 {
                return Err(Error::parse(
                    path,
                    line_no,
                    format!("expected 7 fields `class_id class_name score x y w h`, got {}", fields.len()),
                ));
            }
            let class_id: i64 = fields[0]
                .parse()
                .map_err(|_| Error::parse(path, line_no, format!("bad class id `{}`", fields[0])))?;
            let mut nums = [0.0f64; 5];
            for (slot, s) in nums.iter_mut().zip(&fields[2..]) {
                *slot = s
                    .parse()
                    .ok()
                    .filter(|x: &f64| x.is_finite())
                    .ok_or_else(|| Error::parse(path, line_no, format!("bad number `{s}`")))?;
            }
            let [score, x, y, w, h] = nums;
            if !(0.0..=1.0).contains(&score) {
                return Err(Error::parse(path, line_no, format!("score {score} outside [0, 1]")));
            }
            if w <= 0.0 || h <= 0.0 {
                return Err(Error::parse(path, line_no, "box width and height must be positive"));
            }
            if score < self.score_min {
                continue;
            }
            let Some(bbox) = BBox::clamped(x, y, w, h, self.width, self.height) else {
                log::debug!("{}:{line_no}: box lies outside the image, dropped", path.display());
                continue;
            };
            let class_name = fields[1].to_string();
            let rigid = self.categories.is_rigid(&class_name);
            out.push(Detection {
                class_id,
                class_name,
                score,
                bbox,
                rigid,
            });
        }
        Ok(out)
    }

    /// Loads a detection file; an absent file means no detections.
    pub fn load(&self, path: &Path) -> Result<Vec<Detection>> {
        match fs::read_to_string(path) {
            Ok(text) => self.parse(&text, path),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(Error::io(path, e)),
        }
    }
}

pub fn detection_file_name(timestamp: f64) -> String {
    format!("{timestamp:.6}.det")
}

/// Loads the detections of the frame at `frame_timestamp` from `dir`.
pub fn load_detections(
    dir: &Path,
    frame_timestamp: f64,
    parser: &DetectionParser,
) -> Result<Vec<Detection>> {
    parser.load(&dir.join(detection_file_name(frame_timestamp)))
}

pub fn format_detection(d: &Detection) -> String {
    format!(
        "{} {} {:.4} {} {} {} {}",
        d.class_id, d.class_name, d.score, d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h
    )
}

pub fn write_detections(path: &Path, detections: &[Detection]) -> Result<()> {
    let mut text = String::from("# class_id class_name score x y w h\n");
    for d in detections {
        text.push_str(&format_detection(d));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(PathBuf::from(path), e))
}
