use std::fmt;

use crate::frame::Rgb;
use crate::geometry::{Intrinsics, Pose, Vec3};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Surfel {
    pub position: Vec3,
    pub normal: Vec3,
    pub color: Rgb,
    pub radius: f64,
    pub weight: f64,
    pub created_at: u32,
    pub last_updated: u32,
    pub active: bool,
}

impl Surfel {
    /// Unit normal, positive radius, nonnegative weight, finite position.
    pub fn is_well_formed(&self) -> bool {
        (self.normal.norm() - 1.0).abs() <= 1e-6
            && self.radius > 0.0
            && self.weight >= 0.0
            && self.position.iter().all(|x| x.is_finite())
    }
}

/// Disk radius covering one pixel footprint at `depth` for a surface whose
/// camera-frame normal has z-component `normal_z`.
pub fn surfel_radius(depth: f64, normal_z: f64, k: &Intrinsics) -> f64 {
    depth * std::f64::consts::SQRT_2 / (k.fx * normal_z.abs().clamp(0.5, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MapKind {
    Static,
    Object,
}

impl fmt::Display for MapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MapKind::Static => "static",
            MapKind::Object => "object",
        })
    }
}

pub type MapId = u32;

pub const STATIC_MAP_ID: MapId = 0;

#[derive(Clone, Debug, PartialEq)]
pub struct PoseSample {
    pub frame: u32,
    pub timestamp: f64,
    /// Camera pose with respect to the map (camera → map coordinates).
    pub pose: Pose,
}

/// A set of surfels in the map's own coordinate frame.
///
/// For object maps that frame coincides with the world frame on the frame the
/// map was created; object motion shows up as a changing camera-to-map pose.
#[derive(Clone, Debug, PartialEq)]
pub struct SurfelMap {
    pub id: MapId,
    pub kind: MapKind,
    pub class_name: Option<String>,
    pub created_at: u32,
    pub poses: Vec<PoseSample>,
    surfels: Vec<Surfel>,
}

impl SurfelMap {
    pub fn new_static() -> Self {
        Self {
            id: STATIC_MAP_ID,
            kind: MapKind::Static,
            class_name: None,
            created_at: 0,
            poses: Vec::new(),
            surfels: Vec::new(),
        }
    }

    pub fn new_object(id: MapId, class_name: impl Into<String>, created_at: u32) -> Self {
        let class_name = class_name.into();
        assert!(id != STATIC_MAP_ID && !class_name.is_empty());
        Self {
            id,
            kind: MapKind::Object,
            class_name: Some(class_name),
            created_at,
            poses: Vec::new(),
            surfels: Vec::new(),
        }
    }

    pub fn from_surfels(id: MapId, kind: MapKind, surfels: Vec<Surfel>) -> Self {
        Self {
            id,
            kind,
            class_name: (kind == MapKind::Object).then(|| "object".to_string()),
            created_at: 0,
            poses: Vec::new(),
            surfels,
        }
    }

    pub fn is_static(&self) -> bool {
        self.kind == MapKind::Static
    }

    pub fn surfels(&self) -> &[Surfel] {
        &self.surfels
    }

    pub fn surfels_mut(&mut self) -> &mut Vec<Surfel> {
        &mut self.surfels
    }

    pub fn len(&self) -> usize {
        self.surfels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.surfels.is_empty()
    }

    pub fn push(&mut self, s: Surfel) {
        self.surfels.push(s);
    }

    pub fn last_pose(&self) -> Option<&Pose> {
        self.poses.last().map(|p| &p.pose)
    }

    pub fn record_pose(&mut self, frame: u32, timestamp: f64, pose: Pose) {
        self.poses.push(PoseSample {
            frame,
            timestamp,
            pose,
        });
    }

    pub fn label(&self) -> &str {
        self.class_name.as_deref().unwrap_or("background")
    }
}

/// One manifest line per map: `id kind class surfels tx ty tz qx qy qz qw`.
pub fn registry_manifest(maps: &[SurfelMap]) -> String {
    let mut out = String::from("# map_id kind class surfels tx ty tz qx qy qz qw\n");
    for m in maps {
        let pose = m.last_pose().copied().unwrap_or_default();
        let q = pose.quaternion();
        let t = pose.translation;
        out.push_str(&format!(
            "{} {} {} {} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6} {:.6}\n",
            m.id,
            m.kind,
            m.label().replace(' ', "_"),
            m.len(),
            t.x,
            t.y,
            t.z,
            q.i,
            q.j,
            q.k,
            q.w
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_formula() {
        let k = Intrinsics::TUM_DEFAULT;
        let r = surfel_radius(1.0, -1.0, &k);
        assert!((r - 2.0f64.sqrt() / 525.0).abs() < 1e-15);
        assert!((r - 2.694e-3).abs() < 1e-6);
        assert!((surfel_radius(2.0, -1.0, &k) - 2.0 * r).abs() < 1e-15);
        assert!((surfel_radius(1.0, -0.1, &k) - 2.0 * r).abs() < 1e-15);
    }

    #[test]
    fn manifest_lists_maps() {
        let mut s = SurfelMap::new_static();
        s.record_pose(0, 0.0, Pose::identity());
        let o = SurfelMap::new_object(1, "teddy bear", 3);
        let text = registry_manifest(&[s, o]);
        let lines: Vec<&str> = text.lines().skip(1).collect();
        assert_eq!(lines.len(), 2);
        assert!(lines[0].starts_with("0 static background 0 0.000000"));
        assert!(lines[1].starts_with("1 object teddy_bear 0 "));
    }
}
