//! PLY export of surfel maps and a small reader for point clouds.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::mapping::{Surfel, SurfelMap};

const SURFEL_FLOAT_PROPS: [&str; 10] = [
    "x",
    "y",
    "z",
    "nx",
    "ny",
    "nz",
    "radius",
    "confidence",
    "created",
    "updated",
];

fn surfel_header(count: usize) -> String {
    let mut h = String::from("ply\nformat binary_little_endian 1.0\n");
    h.push_str(&format!("element vertex {count}\n"));
    for p in SURFEL_FLOAT_PROPS {
        h.push_str(&format!("property float {p}\n"));
    }
    h.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n");
    h
}

pub fn write_surfels_ply(path: impl AsRef<Path>, surfels: &[Surfel]) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let mut write = || -> std::io::Result<()> {
        w.write_all(surfel_header(surfels.len()).as_bytes())?;
        for s in surfels {
            let vals = [
                s.position.x,
                s.position.y,
                s.position.z,
                s.normal.x,
                s.normal.y,
                s.normal.z,
                s.radius,
                s.weight,
                s.created_at as f64,
                s.last_updated as f64,
            ];
            for v in vals {
                w.write_all(&(v as f32).to_le_bytes())?;
            }
            w.write_all(&s.color)?;
        }
        w.flush()
    };
    write().map_err(|e| Error::io(path, e))
}

/// Writes every surfel of `map` in the map's own coordinate frame.
pub fn export_ply(path: impl AsRef<Path>, map: &SurfelMap) -> Result<()> {
    if map.is_empty() {
        return Err(Error::InsufficientData(format!("map {} has no surfels", map.id)));
    }
    write_surfels_ply(path, map.surfels())
}

/// Writes a plain `x y z` point cloud (binary little-endian floats).
pub fn write_points_ply(path: impl AsRef<Path>, points: &[Vec3]) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        points.len()
    )
    .into_bytes();
    for p in points {
        for v in [p.x, p.y, p.z] {
            bytes.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Scalar> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

struct Element {
    name: String,
    count: usize,
    props: Vec<(String, Scalar)>,
}

/// Reads the `x y z` vertex positions of an ASCII or binary little-endian PLY.
///
/// Elements preceding `vertex` must have scalar properties only.
pub fn read_ply_points(path: impl AsRef<Path>) -> Result<Vec<Vec3>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let header_end = bytes
        .windows(10)
        .position(|w| w == b"end_header")
        .ok_or_else(|| Error::parse(path, 1, "missing end_header"))?;
    let mut body_start = header_end + 10;
    if bytes.get(body_start) == Some(&b'\r') {
        body_start += 1;
    }
    if bytes.get(body_start) == Some(&b'\n') {
        body_start += 1;
    }
    let header = String::from_utf8_lossy(&bytes[..header_end]);
    let mut binary = None;
    let mut elements: Vec<Element> = Vec::new();
    for (idx, line) in header.lines().enumerate() {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            ["ply"] | [] => {}
            ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, _] => {
                binary = match *fmt {
                    "ascii" => Some(false),
                    "binary_little_endian" => Some(true),
                    other => {
                        return Err(Error::parse(path, idx + 1, format!("unsupported format {other}")))
                    }
                }
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::parse(path, idx + 1, "bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", ..] => {
                let el = elements
                    .last()
                    .ok_or_else(|| Error::parse(path, idx + 1, "property before element"))?;
                if el.name == "vertex" {
                    return Err(Error::parse(path, idx + 1, "list properties on vertices unsupported"));
                }
            }
            ["property", ty, name] => {
                let scalar = Scalar::parse(ty)
                    .ok_or_else(|| Error::parse(path, idx + 1, format!("unknown type {ty}")))?;
                elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(path, idx + 1, "property before element"))?
                    .props
                    .push((name.to_string(), scalar));
            }
            _ => return Err(Error::parse(path, idx + 1, format!("unexpected header line `{line}`"))),
        }
    }
    let binary = binary.ok_or_else(|| Error::parse(path, 1, "missing format line"))?;
    let vi = elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::parse(path, 1, "no vertex element"))?;
    let vertex = &elements[vi];
    let find = |n: &str| {
        vertex
            .props
            .iter()
            .position(|(name, _)| name == n)
            .ok_or_else(|| Error::parse(path, 1, format!("vertex property {n} missing")))
    };
    let (ix, iy, iz) = (find("x")?, find("y")?, find("z")?);
    let mut points = Vec::with_capacity(vertex.count);
    if binary {
        let mut offset = body_start;
        for e in &elements[..vi] {
            offset += e.count * e.props.iter().map(|(_, s)| s.size()).sum::<usize>();
        }
        let offsets: Vec<usize> = vertex
            .props
            .iter()
            .scan(0, |acc, (_, s)| {
                let o = *acc;
                *acc += s.size();
                Some(o)
            })
            .collect();
        let stride: usize = vertex.props.iter().map(|(_, s)| s.size()).sum();
        if offset + stride * vertex.count > bytes.len() {
            return Err(Error::parse(path, 0, "truncated binary body"));
        }
        for i in 0..vertex.count {
            let rec = &bytes[offset + i * stride..offset + (i + 1) * stride];
            let get = |k: usize| vertex.props[k].1.read_le(&rec[offsets[k]..]);
            points.push(Vec3::new(get(ix), get(iy), get(iz)));
        }
    } else {
        let body = String::from_utf8_lossy(&bytes[body_start..]);
        let mut lines = body.lines().filter(|l| !l.trim().is_empty());
        for e in &elements[..vi] {
            for _ in 0..e.count {
                lines.next();
            }
        }
        for i in 0..vertex.count {
            let line = lines
                .next()
                .ok_or_else(|| Error::parse(path, 0, format!("missing vertex {i}")))?;
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Error::parse(path, 0, format!("bad vertex {i}")))?;
            if vals.len() < vertex.props.len() {
                return Err(Error::parse(path, 0, format!("short vertex {i}")));
            }
            points.push(Vec3::new(vals[ix], vals[iy], vals[iz]));
        }
    }
    Ok(points)
}
