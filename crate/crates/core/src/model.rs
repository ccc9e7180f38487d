//! Core domain types shared by every module.
//!
//! Coordinates live in the ego frame: origin at the foot of the camera on the
//! road, `x` lateral (right positive), `y` longitudinal (forward positive) and
//! `z` up. The camera sits at `(0, 0, height_m)` with zero roll and yaw; its
//! pitch is positive when the optical axis tilts down toward the road.
//!
//! Every constructor and `validate` method rejects values that break an
//! invariant instead of normalizing them.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the ego frame, serialized as `[x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Point3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Point3D {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn xy(&self) -> Point2D {
        Point2D::new(self.x, self.y)
    }
}

impl From<[f64; 3]> for Point3D {
    fn from(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }
}

impl From<Point3D> for [f64; 3] {
    fn from(p: Point3D) -> Self {
        [p.x, p.y, p.z]
    }
}

/// A point on the flat ground plane, serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn distance(&self, other: &Point2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl From<[f64; 2]> for Point2D {
    fn from(v: [f64; 2]) -> Self {
        Self::new(v[0], v[1])
    }
}

impl From<Point2D> for [f64; 2] {
    fn from(p: Point2D) -> Self {
        [p.x, p.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width_px: u32,
    pub height_px: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraPose {
    pub height_m: f64,
    pub pitch_rad: f64,
    pub intrinsics: Intrinsics,
}

impl CameraPose {
    pub fn validate(&self) -> Result<()> {
        let k = &self.intrinsics;
        let bad = |reason: String| Err(Error::invalid("camera", reason));
        if !(self.height_m.is_finite() && self.height_m > 0.0) {
            return bad(format!("height_m must be > 0, got {}", self.height_m));
        }
        if !self.pitch_rad.is_finite() {
            return bad("pitch_rad must be finite".into());
        }
        if !(k.fx.is_finite() && k.fx > 0.0 && k.fy.is_finite() && k.fy > 0.0) {
            return bad(format!("focal lengths must be > 0, got ({}, {})", k.fx, k.fy));
        }
        if k.width_px == 0 || k.height_px == 0 {
            return bad("image size must be positive".into());
        }
        if !(k.cx >= 0.0 && k.cx < f64::from(k.width_px)) {
            return bad(format!("cx {} outside [0, {})", k.cx, k.width_px));
        }
        if !(k.cy >= 0.0 && k.cy < f64::from(k.height_px)) {
            return bad(format!("cy {} outside [0, {})", k.cy, k.height_px));
        }
        Ok(())
    }
}

impl Default for CameraPose {
    /// 1.78 m high, level, 1920x1080 with a 1000 px focal length.
    fn default() -> Self {
        Self {
            height_m: 1.78,
            pitch_rad: 0.0,
            intrinsics: Intrinsics {
                fx: 1000.0,
                fy: 1000.0,
                cx: 960.0,
                cy: 540.0,
                width_px: 1920,
                height_px: 1080,
            },
        }
    }
}

/// One lane boundary in the ego frame.
///
/// `prob` is only present on predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lane3D {
    pub id: String,
    pub points: Vec<Point3D>,
    pub visibility: Vec<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prob: Option<f64>,
}

impl Lane3D {
    pub fn new(id: impl Into<String>, points: Vec<Point3D>, visibility: Vec<u8>) -> Result<Self> {
        let lane = Self {
            id: id.into(),
            points,
            visibility,
            prob: None,
        };
        lane.validate()?;
        Ok(lane)
    }

    /// All points flagged visible.
    pub fn visible(id: impl Into<String>, points: Vec<Point3D>) -> Result<Self> {
        let n = points.len();
        Self::new(id, points, vec![1; n])
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let what = || format!("lane '{}'", self.id);
        if self.visibility.len() != self.points.len() {
            return Err(Error::invalid(
                what(),
                format!(
                    "visibility length {} != point count {}",
                    self.visibility.len(),
                    self.points.len()
                ),
            ));
        }
        if let Some(i) = self.points.iter().position(|p| !p.is_finite()) {
            return Err(Error::invalid(what(), format!("point {i} is not finite")));
        }
        if let Some(i) = self.visibility.iter().position(|&v| v > 1) {
            return Err(Error::invalid(what(), format!("visibility {i} is not 0 or 1")));
        }
        if let Some(i) = self.points.windows(2).position(|w| !(w[1].y > w[0].y)) {
            return Err(Error::invalid(
                what(),
                format!("y not strictly increasing at point {}", i + 1),
            ));
        }
        if let Some(p) = self.prob {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid(what(), format!("prob {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

/// One lane boundary on the flat ground plane.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lane2D {
    pub id: String,
    pub points: Vec<Point2D>,
    pub visibility: Vec<u8>,
}

impl Lane2D {
    pub fn new(id: impl Into<String>, points: Vec<Point2D>, visibility: Vec<u8>) -> Result<Self> {
        let lane = Self {
            id: id.into(),
            points,
            visibility,
        };
        lane.validate()?;
        Ok(lane)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let what = || format!("lane '{}'", self.id);
        if self.visibility.len() != self.points.len() {
            return Err(Error::invalid(what(), "visibility length != point count"));
        }
        if let Some(i) = self.points.iter().position(|p| !p.is_finite()) {
            return Err(Error::invalid(what(), format!("point {i} is not finite")));
        }
        if self.visibility.iter().any(|&v| v > 1) {
            return Err(Error::invalid(what(), "visibility must be 0 or 1"));
        }
        if let Some(i) = self.points.windows(2).position(|w| !(w[1].y > w[0].y)) {
            return Err(Error::invalid(
                what(),
                format!("y not strictly increasing at point {}", i + 1),
            ));
        }
        Ok(())
    }
}

/// Column-anchor encoding of a set of lanes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorSet {
    pub y_refs: Vec<f64>,
    pub anchors: Vec<Anchor>,
}

/// Per-lane anchor values, one entry per y reference.
///
/// `x_offsets` and the y references are flat-ground (virtual top view)
/// coordinates; `z` is the true lane height.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub x_offsets: Vec<f64>,
    pub z: Vec<f64>,
    pub vis: Vec<f64>,
    pub prob: f64,
}

impl AnchorSet {
    pub fn validate(&self) -> Result<()> {
        let n = self.y_refs.len();
        if self.y_refs.iter().any(|y| !y.is_finite()) || self.y_refs.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("anchor set", "y_refs must be finite and strictly increasing"));
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        for (k, a) in self.anchors.iter().enumerate() {
            let what = format!("anchor {k}");
            if a.x_offsets.len() != n || a.z.len() != n || a.vis.len() != n {
                return Err(Error::invalid(what, format!("per-reference lists must have length {n}")));
            }
            if a.x_offsets.iter().chain(&a.z).any(|v| !v.is_finite()) {
                return Err(Error::invalid(what, "non-finite offset or height"));
            }
            if !a.vis.iter().all(|&v| unit(v)) || !unit(a.prob) {
                return Err(Error::invalid(what, "vis and prob must lie in [0, 1]"));
            }
        }
        Ok(())
    }
}

/// Matched point indices between two lane boundaries.
///
/// Keys index the source (driving, shorter) boundary, values the target.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairMap {
    pub source_id: String,
    pub target_id: String,
    pairs: BTreeMap<usize, usize>,
}

impl PairMap {
    /// Fails if values decrease as keys increase.
    pub fn new(
        source_id: impl Into<String>,
        target_id: impl Into<String>,
        pairs: BTreeMap<usize, usize>,
    ) -> Result<Self> {
        if pairs.values().zip(pairs.values().skip(1)).any(|(a, b)| b < a) {
            return Err(Error::invalid("pair map", "target indices must be nondecreasing"));
        }
        Ok(Self {
            source_id: source_id.into(),
            target_id: target_id.into(),
            pairs,
        })
    }

    pub fn empty(source_id: impl Into<String>, target_id: impl Into<String>) -> Self {
        Self {
            source_id: source_id.into(),
            target_id: target_id.into(),
            pairs: BTreeMap::new(),
        }
    }

    pub fn get(&self, source_index: usize) -> Option<usize> {
        self.pairs.get(&source_index).copied()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `(source index, target index)` in increasing source order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.pairs.iter().map(|(&i, &j)| (i, j))
    }

    pub fn as_map(&self) -> &BTreeMap<usize, usize> {
        &self.pairs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub frame_id: String,
    pub camera: CameraPose,
    pub lanes: Vec<Lane3D>,
    #[serde(default)]
    pub metadata: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchors: Option<AnchorSet>,
}

impl Scene {
    pub fn new(frame_id: impl Into<String>, camera: CameraPose, lanes: Vec<Lane3D>) -> Result<Self> {
        let scene = Self {
            frame_id: frame_id.into(),
            camera,
            lanes,
            metadata: BTreeMap::new(),
            anchors: None,
        };
        scene.validate()?;
        Ok(scene)
    }

    pub fn validate(&self) -> Result<()> {
        if self.frame_id.is_empty() {
            return Err(Error::invalid("scene", "frame_id is empty"));
        }
        self.camera.validate()?;
        let mut seen = HashSet::new();
        for lane in &self.lanes {
            if !seen.insert(lane.id.as_str()) {
                return Err(Error::invalid(
                    format!("scene '{}'", self.frame_id),
                    format!("duplicate lane id '{}'", lane.id),
                ));
            }
            lane.validate()?;
        }
        if let Some(anchors) = &self.anchors {
            anchors.validate()?;
        }
        Ok(())
    }

    pub fn lane(&self, id: &str) -> Option<&Lane3D> {
        self.lanes.iter().find(|l| l.id == id)
    }

    /// Largest |z| over all lane points, 0 for a scene without points.
    pub fn max_abs_height(&self) -> f64 {
        self.lanes
            .iter()
            .flat_map(|l| l.points.iter())
            .map(|p| p.z.abs())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(ys: &[f64]) -> Vec<Point3D> {
        ys.iter().map(|&y| Point3D::new(0.0, y, 0.0)).collect()
    }

    #[test]
    fn lane_rejects_non_monotone_y() {
        let err = Lane3D::visible("l7", pts(&[1.0, 3.0, 2.0])).unwrap_err();
        assert!(err.to_string().contains("l7"), "{err}");
        assert!(Lane3D::visible("eq", pts(&[1.0, 1.0])).is_err());
    }

    #[test]
    fn lane_rejects_bad_visibility() {
        assert!(Lane3D::new("a", pts(&[1.0, 2.0]), vec![1]).is_err());
        assert!(Lane3D::new("a", pts(&[1.0, 2.0]), vec![1, 2]).is_err());
        assert!(Lane3D::new("a", vec![Point3D::new(f64::NAN, 0.0, 0.0)], vec![1]).is_err());
    }

    #[test]
    fn camera_invariants() {
        let mut cam = CameraPose::default();
        cam.validate().unwrap();
        cam.height_m = 0.0;
        assert!(cam.validate().is_err());
        let mut cam = CameraPose::default();
        cam.intrinsics.cx = 1920.0;
        assert!(cam.validate().is_err());
    }

    #[test]
    fn scene_rejects_duplicate_ids_and_empty_frame() {
        let lane = Lane3D::visible("a", pts(&[1.0, 2.0])).unwrap();
        assert!(Scene::new("f", CameraPose::default(), vec![lane.clone(), lane.clone()]).is_err());
        assert!(Scene::new("", CameraPose::default(), vec![lane]).is_err());
    }

    #[test]
    fn pair_map_must_be_monotone() {
        let ok: BTreeMap<_, _> = [(0, 0), (1, 2), (2, 2)].into_iter().collect();
        assert!(PairMap::new("a", "b", ok).is_ok());
        let bad: BTreeMap<_, _> = [(0, 1), (1, 0)].into_iter().collect();
        assert!(PairMap::new("a", "b", bad).is_err());
    }

    #[test]
    fn anchor_set_invariants() {
        let mut set = AnchorSet {
            y_refs: vec![5.0, 10.0],
            anchors: vec![Anchor {
                id: None,
                x_offsets: vec![0.0, 0.0],
                z: vec![0.0, 0.0],
                vis: vec![1.0, 0.5],
                prob: 1.0,
            }],
        };
        set.validate().unwrap();
        set.anchors[0].vis[1] = 1.5;
        assert!(set.validate().is_err());
        set.anchors[0].vis[1] = 1.0;
        set.y_refs = vec![10.0, 5.0];
        assert!(set.validate().is_err());
    }
}
