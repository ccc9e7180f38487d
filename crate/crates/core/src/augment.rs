//! Rotation augmentation of 3D lanes about the pitch (x), roll (y) and yaw (z)
//! axes of the ego frame.
//!
//! Each axis is drawn independently. The random stream for a scene is keyed by
//! `(seed, frame_id, draw_index)`, so results do not depend on the order or
//! thread in which scenes are processed.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Point3D, Scene};
use crate::projection::compute_visibility;
use crate::rng::keyed_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AngleUnit {
    Radians,
    Degrees,
}

impl AngleUnit {
    pub fn to_radians(self, angle: f64) -> f64 {
        match self {
            AngleUnit::Radians => angle,
            AngleUnit::Degrees => angle.to_radians(),
        }
    }
}

/// Unit of each range in an [`AugmentConfig`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AngleUnits {
    pub pitch: AngleUnit,
    pub roll: AngleUnit,
    pub yaw: AngleUnit,
}

impl Default for AngleUnits {
    fn default() -> Self {
        Self {
            pitch: AngleUnit::Radians,
            roll: AngleUnit::Degrees,
            yaw: AngleUnit::Degrees,
        }
    }
}

/// Ranges are `[lo, hi]` in the unit given by `angle_unit` for that axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    pub pitch_range: [f64; 2],
    pub roll_range: [f64; 2],
    pub yaw_range: [f64; 2],
    pub p_pitch: f64,
    pub p_roll: f64,
    pub p_yaw: f64,
    #[serde(default)]
    pub angle_unit: AngleUnits,
    #[serde(default)]
    pub seed: u64,
}

impl Default for AugmentConfig {
    /// Pitch in radians, roll and yaw in degrees.
    fn default() -> Self {
        Self {
            pitch_range: [-0.1, 0.3],
            roll_range: [-3.0, 3.0],
            yaw_range: [-3.0, 3.0],
            p_pitch: 0.1,
            p_roll: 0.05,
            p_yaw: 0.2,
            angle_unit: AngleUnits::default(),
            seed: 0,
        }
    }
}

impl AugmentConfig {
    /// Every probability zero: augmentation is the identity.
    pub fn disabled() -> Self {
        Self {
            p_pitch: 0.0,
            p_roll: 0.0,
            p_yaw: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in [("pitch", self.pitch_range), ("roll", self.roll_range), ("yaw", self.yaw_range)] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::invalid("augment config", format!("{name} range [{lo}, {hi}]")));
            }
        }
        for (name, p) in [("p_pitch", self.p_pitch), ("p_roll", self.p_roll), ("p_yaw", self.p_yaw)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::invalid("augment config", format!("{name} = {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rotation3x3(Matrix3<f64>);

impl Rotation3x3 {
    pub fn identity() -> Self {
        Self(Matrix3::identity())
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        std::array::from_fn(|k| m[(k / 3, k % 3)])
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }

    /// Inverse rotation.
    pub fn transpose(&self) -> Self {
        Self(self.0.transpose())
    }

    /// `self · other`: `other` acts first.
    pub fn then_after(&self, other: &Rotation3x3) -> Self {
        Self(self.0 * other.0)
    }

    pub fn apply(&self, p: Point3D) -> Point3D {
        let v = self.0 * Vector3::new(p.x, p.y, p.z);
        Point3D::new(v.x, v.y, v.z)
    }

    /// Largest entry of `RᵀR − I` in absolute value.
    pub fn orthonormality_error(&self) -> f64 {
        (self.0.transpose() * self.0 - Matrix3::identity()).amax()
    }
}

/// Rotation about x (pitch).
pub fn rot_x(angle: f64) -> Rotation3x3 {
    let (s, c) = angle.sin_cos();
    Rotation3x3(Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
}

/// Rotation about y (roll).
pub fn rot_y(angle: f64) -> Rotation3x3 {
    let (s, c) = angle.sin_cos();
    Rotation3x3(Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c))
}

/// Rotation about z (yaw).
pub fn rot_z(angle: f64) -> Rotation3x3 {
    let (s, c) = angle.sin_cos();
    Rotation3x3(Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
}

/// Angles in radians of the rotations that were drawn to apply.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AppliedRotation {
    pub pitch: Option<f64>,
    pub roll: Option<f64>,
    pub yaw: Option<f64>,
}

impl AppliedRotation {
    pub fn is_identity(&self) -> bool {
        self.pitch.is_none() && self.roll.is_none() && self.yaw.is_none()
    }

    /// Composed matrix `R_z · R_y · R_x` of the applied axes.
    pub fn rotation(&self) -> Rotation3x3 {
        let r = |a: Option<f64>, f: fn(f64) -> Rotation3x3| a.map_or_else(Rotation3x3::identity, f);
        r(self.yaw, rot_z).then_after(&r(self.roll, rot_y)).then_after(&r(self.pitch, rot_x))
    }
}

/// Draws the rotations for one scene. Every axis consumes the same number of
/// random values whether or not it fires.
pub fn draw_rotation(cfg: &AugmentConfig, frame_id: &str, draw_index: u64) -> AppliedRotation {
    let mut rng = keyed_rng(cfg.seed, frame_id, draw_index);
    let mut draw = |[lo, hi]: [f64; 2], p: f64, unit: AngleUnit| {
        let u: f64 = rng.random();
        let t: f64 = rng.random();
        (u < p).then(|| unit.to_radians(lo + (hi - lo) * t))
    };
    let units = cfg.angle_unit;
    AppliedRotation {
        pitch: draw(cfg.pitch_range, cfg.p_pitch, units.pitch),
        roll: draw(cfg.roll_range, cfg.p_roll, units.roll),
        yaw: draw(cfg.yaw_range, cfg.p_yaw, units.yaw),
    }
}

/// Rotates every lane point with the drawn rotation and recomputes visibility
/// against the unchanged camera. Points may end up above the camera.
///
/// Returns the scene unchanged when no axis fires. Applied angles are
/// recorded in radians under `augment_pitch_rad`, `augment_roll_rad` and
/// `augment_yaw_rad`; stale anchors are dropped.
///
/// Fails if a rotation makes some lane's `y` values non-increasing.
pub fn augment_scene(scene: &Scene, cfg: &AugmentConfig, draw_index: u64) -> Result<Scene> {
    cfg.validate()?;
    let applied = draw_rotation(cfg, &scene.frame_id, draw_index);
    if applied.is_identity() {
        return Ok(scene.clone());
    }
    let r = applied.rotation();
    let mut out = scene.clone();
    for lane in &mut out.lanes {
        for p in &mut lane.points {
            *p = r.apply(*p);
        }
        lane.visibility = compute_visibility(lane, &out.camera);
        lane.validate().map_err(|e| {
            Error::InvalidInput(format!("augmenting frame '{}' draw {draw_index}: {e}", scene.frame_id))
        })?;
    }
    for (key, angle) in [("pitch", applied.pitch), ("roll", applied.roll), ("yaw", applied.yaw)] {
        if let Some(a) = angle {
            out.metadata.insert(format!("augment_{key}_rad"), a.to_string());
        }
    }
    out.anchors = None;
    Ok(out)
}
