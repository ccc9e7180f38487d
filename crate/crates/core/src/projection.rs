//! View transformations between the ego frame, the flat ground plane and the
//! front-view image.
//!
//! Camera frame: `X` right, `Y` down, `Z` along the optical axis. With pitch
//! `θ` (positive tilts the axis toward the road) an ego point `p` maps to
//!
//! ```text
//! X = x
//! Y = -y·sinθ - (z - h)·cosθ
//! Z =  y·cosθ - (z - h)·sinθ
//! ```
//!
//! Flipping the pitch sign mirrors `v` about `cy`.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::model::{CameraPose, Lane2D, Lane3D, Point2D, Point3D};

/// Orthographic projection onto the ground: height is dropped.
pub fn project_real_top(p: Point3D) -> Point2D {
    Point2D::new(p.x, p.y)
}

/// Central projection from the camera center onto the flat ground plane.
///
/// Scales `(x, y)` by `h/(h − z)`. Points at or above the camera would land
/// behind it, so they are rejected.
pub fn project_virtual_top(p: Point3D, h_cam: f64) -> Result<Point2D> {
    if !(p.z < h_cam) {
        return Err(Error::HeightExceedsCamera { z: p.z, h_cam });
    }
    let scale = h_cam / (h_cam - p.z);
    Ok(Point2D::new(p.x * scale, p.y * scale))
}

/// Inverse of [`project_virtual_top`] for a known height `z`.
pub fn lift_from_virtual_top(p: Point2D, z: f64, h_cam: f64) -> Result<Point3D> {
    if !(z < h_cam) {
        return Err(Error::HeightExceedsCamera { z, h_cam });
    }
    let scale = (h_cam - z) / h_cam;
    Ok(Point3D::new(p.x * scale, p.y * scale, z))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FrontView {
    Pixel { u: f64, v: f64 },
    /// Zero or negative depth in the camera frame.
    Behind,
}

impl FrontView {
    pub fn pixel(self) -> Option<(f64, f64)> {
        match self {
            FrontView::Pixel { u, v } => Some((u, v)),
            FrontView::Behind => None,
        }
    }
}

fn camera_frame(p: Point3D, pose: &CameraPose) -> Vector3<f64> {
    let (s, c) = pose.pitch_rad.sin_cos();
    let dz = p.z - pose.height_m;
    Vector3::new(p.x, -p.y * s - dz * c, p.y * c - dz * s)
}

/// Pinhole projection into the front-view image. No distortion.
pub fn project_front_view(p: Point3D, pose: &CameraPose) -> FrontView {
    let cam = camera_frame(p, pose);
    if cam.z <= 0.0 {
        return FrontView::Behind;
    }
    let k = &pose.intrinsics;
    FrontView::Pixel {
        u: k.fx * cam.x / cam.z + k.cx,
        v: k.fy * cam.y / cam.z + k.cy,
    }
}

/// Inverse pinhole: the ego point at camera depth `depth` seen at pixel `(u, v)`.
pub fn back_project(u: f64, v: f64, depth: f64, pose: &CameraPose) -> Point3D {
    let k = &pose.intrinsics;
    let cam = Vector3::new((u - k.cx) / k.fx * depth, (v - k.cy) / k.fy * depth, depth);
    let (s, c) = pose.pitch_rad.sin_cos();
    // Rows of the ego->camera rotation are orthonormal; transpose inverts it.
    let y = -s * cam.y + c * cam.z;
    let dz = -c * cam.y - s * cam.z;
    Point3D::new(cam.x, y, dz + pose.height_m)
}

/// Ground-plane to image homography.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography3x3(Matrix3<f64>);

impl Homography3x3 {
    pub fn from_row_major(m: [f64; 9]) -> Result<Self> {
        let h = Matrix3::from_row_slice(&m);
        if !h.iter().all(|v| v.is_finite()) || h.determinant() == 0.0 {
            return Err(Error::invalid("homography", "singular or non-finite matrix"));
        }
        Ok(Self(h))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.0;
        [m[(0, 0)], m[(0, 1)], m[(0, 2)], m[(1, 0)], m[(1, 1)], m[(1, 2)], m[(2, 0)], m[(2, 1)], m[(2, 2)]]
    }

    pub fn determinant(&self) -> f64 {
        self.0.determinant()
    }

    /// Applies the homography; `None` when the result is at infinity.
    pub fn apply(&self, p: Point2D) -> Option<Point2D> {
        let q = self.0 * Vector3::new(p.x, p.y, 1.0);
        if q.z == 0.0 {
            return None;
        }
        Some(Point2D::new(q.x / q.z, q.y / q.z))
    }

    pub fn inverse(&self) -> Result<Self> {
        self.0
            .try_inverse()
            .map(Self)
            .ok_or_else(|| Error::invalid("homography", "not invertible"))
    }
}

/// Homography taking ground points `(x, y, 1)` to pixels `(u, v, 1)`.
pub fn ipm_homography(pose: &CameraPose) -> Result<Homography3x3> {
    pose.validate()?;
    let (s, c) = pose.pitch_rad.sin_cos();
    if c.abs() < 1e-12 {
        return Err(Error::DegeneratePose(format!("pitch {} rad", pose.pitch_rad)));
    }
    let h = pose.height_m;
    let k = &pose.intrinsics;
    let intr = Matrix3::new(k.fx, 0.0, k.cx, 0.0, k.fy, k.cy, 0.0, 0.0, 1.0);
    // Columns: camera-frame images of the ground x axis, y axis and origin.
    let ground = Matrix3::new(1.0, 0.0, 0.0, 0.0, -s, h * c, 0.0, c, h * s);
    Ok(Homography3x3(intr * ground))
}

/// `1` where the point lands inside the image with positive depth.
pub fn compute_visibility(lane: &Lane3D, pose: &CameraPose) -> Vec<u8> {
    let k = &pose.intrinsics;
    let (w, h) = (f64::from(k.width_px), f64::from(k.height_px));
    lane.points
        .iter()
        .map(|&p| match project_front_view(p, pose) {
            FrontView::Pixel { u, v } if (0.0..w).contains(&u) && (0.0..h).contains(&v) => 1,
            _ => 0,
        })
        .collect()
}

/// Virtual top view of a whole lane.
///
/// Points at or above the camera are dropped, as are points whose flat `y`
/// does not exceed every earlier one: a ray from the camera to such a point
/// passes under the road nearer in front, so it is hidden past a crest.
pub fn project_lane_virtual_top(lane: &Lane3D, h_cam: f64) -> Lane2D {
    let mut points = Vec::with_capacity(lane.points.len());
    let mut visibility = Vec::with_capacity(lane.points.len());
    let mut max_y = f64::NEG_INFINITY;
    for (p, &v) in lane.points.iter().zip(&lane.visibility) {
        let Ok(q) = project_virtual_top(*p, h_cam) else {
            continue;
        };
        if q.y > max_y {
            max_y = q.y;
            points.push(q);
            visibility.push(v);
        }
    }
    Lane2D {
        id: lane.id.clone(),
        points,
        visibility,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    const H: f64 = 1.78;

    fn pose(pitch: f64) -> CameraPose {
        CameraPose {
            pitch_rad: pitch,
            ..CameraPose::default()
        }
    }

    #[test]
    fn real_top_discards_height() {
        assert_eq!(project_real_top(Point3D::new(2.0, 10.0, 0.0)), Point2D::new(2.0, 10.0));
        assert_eq!(project_real_top(Point3D::new(2.0, 10.0, 5.0)), Point2D::new(2.0, 10.0));
        assert_eq!(project_real_top(Point3D::new(-3.5, 80.0, -1.0)), Point2D::new(-3.5, 80.0));
    }

    #[test]
    fn virtual_top_examples() {
        assert_eq!(project_virtual_top(Point3D::new(2.0, 10.0, 0.0), H).unwrap(), Point2D::new(2.0, 10.0));
        let q = project_virtual_top(Point3D::new(2.0, 10.0, 0.89), H).unwrap();
        assert!(close(q.x, 4.0, 1e-12) && close(q.y, 20.0, 1e-12), "{q:?}");
        assert!(matches!(
            project_virtual_top(Point3D::new(1.0, 5.0, 1.78), H),
            Err(Error::HeightExceedsCamera { .. })
        ));
    }

    #[test]
    fn lift_examples() {
        assert_eq!(lift_from_virtual_top(Point2D::new(2.0, 10.0), 0.0, H).unwrap(), Point3D::new(2.0, 10.0, 0.0));
        let p = lift_from_virtual_top(Point2D::new(4.0, 20.0), 0.89, H).unwrap();
        assert!(close(p.x, 2.0, 1e-12) && close(p.y, 10.0, 1e-12) && p.z == 0.89);
        assert!(lift_from_virtual_top(Point2D::new(4.0, 20.0), 2.0, H).is_err());
    }

    #[test]
    fn virtual_top_magnifies_above_ground() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..1000 {
            let p = Point3D::new(rng.random_range(-10.0..10.0), rng.random_range(1.0..100.0), rng.random_range(0.0..1.7));
            let q = project_virtual_top(p, H).unwrap();
            assert!(q.x.abs() >= p.x.abs() && q.y.abs() >= p.y.abs());
        }
    }

    #[test]
    fn front_view_examples() {
        let cam = pose(0.0);
        // On-axis: straight ahead at camera height.
        let (u, v) = project_front_view(Point3D::new(0.0, 30.0, H), &cam).pixel().unwrap();
        assert!(close(u, 960.0, 1e-12) && close(v, 540.0, 1e-12));
        assert_eq!(project_front_view(Point3D::new(0.0, 0.0, 0.0), &cam), FrontView::Behind);
        let (u, v) = project_front_view(Point3D::new(0.0, 20.0, 0.0), &cam).pixel().unwrap();
        assert!(close(u, 960.0, 1e-9) && close(v, 629.0, 1e-9), "({u}, {v})");
    }

    #[test]
    fn pitched_optical_axis_hits_principal_point() {
        let cam = pose(0.1);
        // Ground point hit by the optical axis.
        let y = H / 0.1f64.tan();
        let (u, v) = project_front_view(Point3D::new(0.0, y, 0.0), &cam).pixel().unwrap();
        assert!(close(u, 960.0, 1e-9) && close(v, 540.0, 1e-9), "({u}, {v})");
    }

    #[test]
    fn back_project_inverts_front_view() {
        let cam = pose(0.07);
        let p = back_project(123.0, 777.0, 25.0, &cam);
        let (u, v) = project_front_view(p, &cam).pixel().unwrap();
        assert!(close(u, 123.0, 1e-9) && close(v, 777.0, 1e-9));
    }

    #[test]
    fn homography_agrees_with_pinhole() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for &pitch in &[0.0, 0.05, -0.2, 0.3] {
            let cam = pose(pitch);
            let hom = ipm_homography(&cam).unwrap();
            let inv = hom.inverse().unwrap();
            for _ in 0..100 {
                let g = Point2D::new(rng.random_range(-20.0..20.0), rng.random_range(8.0..120.0));
                let (u, v) = project_front_view(Point3D::new(g.x, g.y, 0.0), &cam).pixel().unwrap();
                let q = hom.apply(g).unwrap();
                assert!(close(q.x, u, 1e-9) && close(q.y, v, 1e-9), "pitch {pitch}: {q:?} vs ({u}, {v})");
                let back = inv.apply(Point2D::new(u, v)).unwrap();
                assert!(close(back.x, g.x, 1e-7) && close(back.y, g.y, 1e-7));
            }
        }
    }

    #[test]
    fn homography_nonsingular_over_pitch_sweep() {
        for i in 0..=100 {
            let pitch = -0.499 + 0.998 * f64::from(i) / 100.0;
            assert!(ipm_homography(&pose(pitch)).unwrap().determinant().abs() > 0.0);
        }
    }

    #[test]
    fn degenerate_pitch_is_rejected() {
        let cam = pose(std::f64::consts::FRAC_PI_2);
        assert!(matches!(ipm_homography(&cam), Err(Error::DegeneratePose(_))));
    }

    #[test]
    fn visibility_flags() {
        let cam = pose(0.0);
        let k = cam.intrinsics;
        // 1 px outside the right edge at 30 m depth; 1 px inside for contrast.
        let outside = back_project(f64::from(k.width_px) + 1.0, 700.0, 30.0, &cam);
        let inside = back_project(f64::from(k.width_px) - 1.0, 700.0, 30.0 + 1e-3, &cam);
        let lane = Lane3D::visible(
            "v",
            vec![Point3D::new(0.0, -1.0, 0.0), Point3D::new(0.0, 20.0, 0.0), outside, inside],
        )
        .unwrap();
        assert_eq!(compute_visibility(&lane, &cam), vec![0, 1, 0, 1]);
    }

    #[test]
    fn lane_projection_drops_hidden_points() {
        let lane = Lane3D::visible(
            "c",
            vec![
                Point3D::new(0.0, 10.0, 0.0),
                Point3D::new(0.0, 20.0, 1.0),
                Point3D::new(0.0, 30.0, 0.5),
                Point3D::new(0.0, 40.0, 2.0),
                Point3D::new(0.0, 60.0, 0.2),
            ],
        )
        .unwrap();
        let flat = project_lane_virtual_top(&lane, H);
        // 20 m at 1.0 m projects to 45.6 m; 30 m at 0.5 m to 41.7 m, hidden.
        let ys: Vec<f64> = flat.points.iter().map(|p| p.y).collect();
        assert_eq!(ys.len(), 3);
        assert!(close(ys[1], 20.0 * H / (H - 1.0), 1e-12));
        flat.validate().unwrap();
    }
}
