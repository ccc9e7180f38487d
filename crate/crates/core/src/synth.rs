//! Synthetic road scenes, the column-anchor lane encoding and top-view masks.
//!
//! A road is a centerline `x(t)` over the longitudinal parameter `t`, a height
//! profile `z(t)` and a set of boundaries offset along the exact centerline
//! normal by multiples of the lane width. Every boundary point shares the
//! height of the centerline point it was offset from, so boundaries matched
//! at the same `t` are exactly one lane width apart in 3D.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Anchor, AnchorSet, CameraPose, Lane2D, Lane3D, Point2D, Point3D, Scene};
use crate::projection::{compute_visibility, lift_from_virtual_top, project_real_top, project_virtual_top};
use crate::rng::keyed_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeightProfile {
    /// `z(t) = Σ coeffs[k]·t^k`.
    Polynomial { coeffs: Coeffs },
    /// Raised-cosine bump starting at `start_y`, `length` long, topping out at
    /// `peak_z` halfway along. Zero outside.
    Hill { start_y: f64, length: f64, peak_z: f64 },
}

/// Up to four polynomial coefficients, lowest order first.
pub type Coeffs = [f64; 4];

impl Default for HeightProfile {
    fn default() -> Self {
        HeightProfile::Polynomial { coeffs: [0.0; 4] }
    }
}

impl HeightProfile {
    pub fn flat() -> Self {
        Self::default()
    }

    pub fn at(&self, t: f64) -> f64 {
        match *self {
            HeightProfile::Polynomial { coeffs } => poly(&coeffs, t),
            HeightProfile::Hill { start_y, length, peak_z } => {
                let s = (t - start_y) / length;
                if (0.0..=1.0).contains(&s) {
                    0.5 * peak_z * (1.0 - (2.0 * std::f64::consts::PI * s).cos())
                } else {
                    0.0
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            HeightProfile::Polynomial { coeffs } if coeffs.iter().all(|c| c.is_finite()) => Ok(()),
            HeightProfile::Hill { start_y, length, peak_z }
                if start_y.is_finite() && length > 0.0 && length.is_finite() && peak_z.is_finite() =>
            {
                Ok(())
            }
            _ => Err(Error::Spec(format!("height profile {self:?} is malformed"))),
        }
    }
}

fn poly(coeffs: &[f64], t: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

fn poly_derivative(coeffs: &[f64], t: f64) -> f64 {
    coeffs
        .iter()
        .enumerate()
        .skip(1)
        .rev()
        .fold(0.0, |acc, (k, c)| acc * t + k as f64 * c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoadSpec {
    /// `x(t) = Σ centerline_x_coeffs[k]·t^k`.
    pub centerline_x_coeffs: Coeffs,
    #[serde(alias = "height_coeffs_or_profile")]
    pub height_profile: HeightProfile,
    pub lane_width: f64,
    pub num_boundaries: usize,
    pub y_start: f64,
    pub y_end: f64,
    pub y_step: f64,
    pub camera: CameraPose,
}

impl Default for RoadSpec {
    /// Straight flat road, one lane 3.5 m wide, sampled every 2 m from 3 to 103 m.
    fn default() -> Self {
        Self {
            centerline_x_coeffs: [0.0; 4],
            height_profile: HeightProfile::flat(),
            lane_width: 3.5,
            num_boundaries: 2,
            y_start: 3.0,
            y_end: 103.0,
            y_step: 2.0,
            camera: CameraPose::default(),
        }
    }
}

impl RoadSpec {
    /// Sample positions of the centerline parameter.
    pub fn t_grid(&self) -> Vec<f64> {
        let n = ((self.y_end - self.y_start) / self.y_step + 1e-9).floor() as usize;
        (0..=n).map(|k| self.y_start + k as f64 * self.y_step).collect()
    }

    /// Lateral offset of boundary `k` from the centerline.
    pub fn offset(&self, k: usize) -> f64 {
        (k as f64 - (self.num_boundaries as f64 - 1.0) / 2.0) * self.lane_width
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Spec(msg));
        if !(self.lane_width > 0.0 && self.lane_width.is_finite()) {
            return fail(format!("lane_width must be > 0, got {}", self.lane_width));
        }
        if self.num_boundaries < 2 {
            return fail(format!("num_boundaries must be >= 2, got {}", self.num_boundaries));
        }
        if !(self.y_step > 0.0 && self.y_step.is_finite()) {
            return fail(format!("y_step must be > 0, got {}", self.y_step));
        }
        if !(self.y_start < self.y_end && self.y_end.is_finite() && self.y_start.is_finite()) {
            return fail(format!("need y_start < y_end, got {} and {}", self.y_start, self.y_end));
        }
        if self.centerline_x_coeffs.iter().any(|c| !c.is_finite()) {
            return fail("centerline coefficients must be finite".into());
        }
        self.height_profile.validate()?;
        self.camera.validate().map_err(|e| Error::Spec(e.to_string()))?;
        let h = self.camera.height_m;
        if let Some(t) = self.t_grid().into_iter().find(|&t| self.height_profile.at(t) >= h) {
            return fail(format!(
                "height {} at y = {t} is not below camera height {h}",
                self.height_profile.at(t)
            ));
        }
        Ok(())
    }

    /// Boundary `k` evaluated at `t`.
    pub fn boundary_point(&self, k: usize, t: f64) -> Point3D {
        let x = poly(&self.centerline_x_coeffs, t);
        let dx = poly_derivative(&self.centerline_x_coeffs, t);
        let norm = (1.0 + dx * dx).sqrt();
        let d = self.offset(k);
        Point3D::new(x + d / norm, t - d * dx / norm, self.height_profile.at(t))
    }
}

/// Builds the scene described by `spec`. Boundaries are named `b0`, `b1`, …
/// from left to right.
pub fn generate_scene(spec: &RoadSpec, frame_id: &str) -> Result<Scene> {
    spec.validate()?;
    let grid = spec.t_grid();
    let mut lanes = Vec::with_capacity(spec.num_boundaries);
    for k in 0..spec.num_boundaries {
        let points: Vec<_> = grid.iter().map(|&t| spec.boundary_point(k, t)).collect();
        let mut lane = Lane3D {
            id: format!("b{k}"),
            visibility: vec![1; points.len()],
            points,
            prob: None,
        };
        lane.visibility = compute_visibility(&lane, &spec.camera);
        lane.validate()
            .map_err(|e| Error::Spec(format!("boundary {k} is not monotone in y; curvature too high for the offset ({e})")))?;
        lanes.push(lane);
    }
    let mut scene = Scene::new(frame_id, spec.camera, lanes)?;
    scene.metadata.insert("lane_width".into(), spec.lane_width.to_string());
    scene.metadata.insert(
        "height_profile".into(),
        serde_json::to_string(&spec.height_profile).expect("profile serializes"),
    );
    Ok(scene)
}

/// Whether every boundary keeps all of its points in the virtual top view:
/// heights stay below the camera and flat `y` is strictly increasing.
pub fn is_fold_free(scene: &Scene) -> bool {
    let h = scene.camera.height_m;
    scene.lanes.iter().all(|lane| {
        let mut last = f64::NEG_INFINITY;
        lane.points.iter().all(|&p| match project_virtual_top(p, h) {
            Ok(q) if q.y > last => {
                last = q.y;
                true
            }
            _ => false,
        })
    })
}

/// Ranges for randomized road specs. Every `[lo, hi]` pair is sampled
/// uniformly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub camera: CameraPose,
    pub lane_width: [f64; 2],
    pub num_boundaries: [usize; 2],
    pub y_start: f64,
    pub y_end: f64,
    pub y_step: f64,
    /// Lateral offset of the centerline at `t = 0`.
    pub lateral_offset: [f64; 2],
    /// Slope `dx/dt` of the centerline.
    pub heading: [f64; 2],
    /// Quadratic coefficient of the centerline.
    pub curvature: [f64; 2],
    pub hill_probability: f64,
    pub hill_start_y: [f64; 2],
    pub hill_length: [f64; 2],
    pub hill_peak_z: [f64; 2],
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            camera: CameraPose::default(),
            lane_width: [3.0, 4.0],
            num_boundaries: [2, 4],
            y_start: 3.0,
            y_end: 103.0,
            y_step: 2.0,
            lateral_offset: [-1.0, 1.0],
            heading: [-0.02, 0.02],
            curvature: [-2e-4, 2e-4],
            hill_probability: 0.8,
            hill_start_y: [20.0, 60.0],
            hill_length: [60.0, 200.0],
            hill_peak_z: [-0.5, 1.0],
        }
    }
}

impl GenerateConfig {
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("lane_width", self.lane_width),
            ("lateral_offset", self.lateral_offset),
            ("heading", self.heading),
            ("curvature", self.curvature),
            ("hill_start_y", self.hill_start_y),
            ("hill_length", self.hill_length),
            ("hill_peak_z", self.hill_peak_z),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Config(format!("{name} range [{lo}, {hi}]")));
            }
        }
        if self.lane_width[0] <= 0.0 || self.hill_length[0] <= 0.0 {
            return Err(Error::Config("lane_width and hill_length must be > 0".into()));
        }
        let [b0, b1] = self.num_boundaries;
        if b0 < 2 || b0 > b1 {
            return Err(Error::Config(format!("num_boundaries range [{b0}, {b1}]")));
        }
        if !(0.0..=1.0).contains(&self.hill_probability) {
            return Err(Error::Config(format!("hill_probability {}", self.hill_probability)));
        }
        Ok(())
    }
}

fn uniform(rng: &mut impl Rng, [lo, hi]: [f64; 2]) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Halvings of the hill peak tried before falling back to a flat road.
const FOLD_RETRIES: usize = 8;

/// Random road for scene `index`. Hills are shrunk until the scene is
/// fold-free (see [`is_fold_free`]).
pub fn sample_road_spec(cfg: &GenerateConfig, seed: u64, index: u64) -> Result<RoadSpec> {
    cfg.validate()?;
    let mut rng = keyed_rng(seed, "road", index);
    let lane_width = uniform(&mut rng, cfg.lane_width);
    let num_boundaries = rng.random_range(cfg.num_boundaries[0]..=cfg.num_boundaries[1]);
    let coeffs = [
        uniform(&mut rng, cfg.lateral_offset),
        uniform(&mut rng, cfg.heading),
        uniform(&mut rng, cfg.curvature),
        0.0,
    ];
    let hill = rng.random::<f64>() < cfg.hill_probability;
    let start_y = uniform(&mut rng, cfg.hill_start_y);
    let length = uniform(&mut rng, cfg.hill_length);
    let peak_z = uniform(&mut rng, cfg.hill_peak_z);
    let mut spec = RoadSpec {
        centerline_x_coeffs: coeffs,
        height_profile: HeightProfile::flat(),
        lane_width,
        num_boundaries,
        y_start: cfg.y_start,
        y_end: cfg.y_end,
        y_step: cfg.y_step,
        camera: cfg.camera,
    };
    if hill {
        let mut peak = peak_z;
        for _ in 0..FOLD_RETRIES {
            spec.height_profile = HeightProfile::Hill { start_y, length, peak_z: peak };
            if spec.validate().is_ok() && is_fold_free(&generate_scene(&spec, "probe")?) {
                return Ok(spec);
            }
            peak *= 0.5;
        }
        spec.height_profile = HeightProfile::flat();
    }
    Ok(spec)
}

/// Scene `index` of the sequence drawn from `cfg` under `seed`, named
/// `scene-00000`, `scene-00001`, …
pub fn generate_scene_at(cfg: &GenerateConfig, seed: u64, index: u64) -> Result<Scene> {
    let spec = sample_road_spec(cfg, seed, index)?;
    let mut scene = generate_scene(&spec, &format!("scene-{index:05}"))?;
    scene.metadata.insert("seed".into(), seed.to_string());
    Ok(scene)
}

pub fn generate_scenes(cfg: &GenerateConfig, seed: u64, count: usize) -> Result<Vec<Scene>> {
    (0..count as u64).map(|i| generate_scene_at(cfg, seed, i)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorConfig {
    pub y_refs: Vec<f64>,
    pub y_assoc: f64,
}

impl Default for AnchorConfig {
    fn default() -> Self {
        Self {
            y_refs: vec![5.0, 10.0, 15.0, 20.0, 30.0, 40.0, 50.0, 60.0, 80.0, 100.0],
            y_assoc: 5.0,
        }
    }
}

impl AnchorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.y_refs.is_empty() || self.y_refs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("anchor config", "y_refs must be non-empty and strictly increasing"));
        }
        if !self.y_refs.contains(&self.y_assoc) {
            return Err(Error::invalid("anchor config", format!("y_assoc {} not among y_refs", self.y_assoc)));
        }
        Ok(())
    }
}

/// Linear interpolation of `values` over increasing `ys` at `y`; `None`
/// outside `[ys[0], ys[n-1]]`.
pub(crate) fn interpolate(ys: &[f64], values: &[f64], y: f64) -> Option<f64> {
    let n = ys.len();
    if n == 0 || y < ys[0] || y > ys[n - 1] {
        return None;
    }
    let k = ys.partition_point(|&v| v < y);
    if k == 0 || ys[k] == y {
        return Some(values[k]);
    }
    let s = (y - ys[k - 1]) / (ys[k] - ys[k - 1]);
    Some(values[k - 1] + s * (values[k] - values[k - 1]))
}

/// Encodes every lane of `scene` on the flat ground: one anchor per lane, in
/// lane order, with GT probability 1.
///
/// Points are projected to the virtual top view (hidden points dropped) and
/// x, z and visibility are interpolated linearly at each reference in flat
/// `y`. Interpolated visibility is thresholded at 0.5. References outside the
/// lane's flat span get visibility 0 and the value of the nearest end.
pub fn encode_anchors(scene: &Scene, cfg: &AnchorConfig) -> Result<AnchorSet> {
    cfg.validate()?;
    let h = scene.camera.height_m;
    let mut anchors = Vec::with_capacity(scene.lanes.len());
    for lane in &scene.lanes {
        let (mut ys, mut xs, mut zs, mut vs) = (vec![], vec![], vec![], vec![]);
        for (p, &v) in lane.points.iter().zip(&lane.visibility) {
            if let Ok(q) = project_virtual_top(*p, h) {
                if ys.last().is_none_or(|&last| q.y > last) {
                    ys.push(q.y);
                    xs.push(q.x);
                    zs.push(p.z);
                    vs.push(f64::from(v));
                }
            }
        }
        if interpolate(&ys, &xs, cfg.y_assoc).is_none() {
            return Err(Error::OutOfRange(format!(
                "lane '{}' in frame '{}' does not cover y = {}",
                lane.id, scene.frame_id, cfg.y_assoc
            )));
        }
        let clamp = |values: &[f64], y: f64| {
            interpolate(&ys, values, y).unwrap_or(if y < ys[0] { values[0] } else { values[values.len() - 1] })
        };
        let mut anchor = Anchor {
            id: Some(lane.id.clone()),
            x_offsets: vec![],
            z: vec![],
            vis: vec![],
            prob: 1.0,
        };
        for &y in &cfg.y_refs {
            anchor.x_offsets.push(clamp(&xs, y));
            anchor.z.push(clamp(&zs, y));
            let vis = interpolate(&ys, &vs, y).unwrap_or(0.0);
            anchor.vis.push(if vis >= 0.5 { 1.0 } else { 0.0 });
        }
        anchors.push(anchor);
    }
    let set = AnchorSet {
        y_refs: cfg.y_refs.clone(),
        anchors,
    };
    set.validate()?;
    Ok(set)
}

/// Lifts anchors back to 3D lanes. Anchors below `prob_threshold` are
/// dropped, as are references with visibility below 0.5 and lanes left with
/// no points. A point whose lifted `y` does not exceed the previous one is
/// skipped.
pub fn decode_anchors(set: &AnchorSet, h_cam: f64, prob_threshold: f64) -> Result<Vec<Lane3D>> {
    set.validate()?;
    let mut lanes = Vec::new();
    for (k, anchor) in set.anchors.iter().enumerate() {
        if anchor.prob < prob_threshold {
            continue;
        }
        let mut points: Vec<Point3D> = Vec::new();
        for (i, &y) in set.y_refs.iter().enumerate() {
            if anchor.vis[i] < 0.5 {
                continue;
            }
            let p = lift_from_virtual_top(Point2D::new(anchor.x_offsets[i], y), anchor.z[i], h_cam)?;
            if points.last().is_none_or(|last| p.y > last.y) {
                points.push(p);
            }
        }
        if points.is_empty() {
            continue;
        }
        let id = anchor.id.clone().unwrap_or_else(|| format!("a{k}"));
        let mut lane = Lane3D::visible(id, points)?;
        lane.prob = Some(anchor.prob);
        lanes.push(lane);
    }
    Ok(lanes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopView {
    /// Orthographic, height discarded.
    Real,
    /// Central projection from the camera onto the flat ground.
    Virtual,
}

/// Cell `(col, row)` is centered at `origin + (col, row)·meters_per_cell`;
/// columns run along x and rows along y.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskGeometry {
    pub width: usize,
    pub height: usize,
    pub meters_per_cell: f64,
    pub origin: Point2D,
    pub thickness_cells: usize,
}

impl Default for MaskGeometry {
    /// 20 m × 106 m at 0.1 m per cell, covering x ∈ [−10, 10], y ∈ [0, 106].
    fn default() -> Self {
        Self {
            width: 200,
            height: 1060,
            meters_per_cell: 0.1,
            origin: Point2D::new(-9.95, 0.05),
            thickness_cells: 3,
        }
    }
}

impl MaskGeometry {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("mask geometry", "grid must be non-empty"));
        }
        if !(self.meters_per_cell > 0.0 && self.meters_per_cell.is_finite()) {
            return Err(Error::invalid("mask geometry", "meters_per_cell must be > 0"));
        }
        if self.thickness_cells == 0 {
            return Err(Error::invalid("mask geometry", "thickness_cells must be >= 1"));
        }
        if !self.origin.is_finite() {
            return Err(Error::invalid("mask geometry", "origin must be finite"));
        }
        Ok(())
    }

    fn cell_of(&self, p: Point2D) -> (i64, i64) {
        let col = ((p.x - self.origin.x) / self.meters_per_cell).round();
        let row = ((p.y - self.origin.y) / self.meters_per_cell).round();
        // Keeps far-off points from overflowing while still clipping them.
        let lim = 1e12;
        (col.clamp(-lim, lim) as i64, row.clamp(-lim, lim) as i64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopViewMask {
    pub geometry: MaskGeometry,
    pub view: TopView,
    /// Row-major occupancy, `cells[row * width + col]` in {0, 1}.
    pub cells: Vec<u8>,
}

impl TopViewMask {
    pub fn get(&self, col: usize, row: usize) -> u8 {
        self.cells[row * self.geometry.width + col]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c != 0).count()
    }

    fn stamp(&mut self, col: i64, row: i64) {
        let g = &self.geometry;
        let t = g.thickness_cells as i64;
        let lo = -(t - 1) / 2;
        for dr in lo..lo + t {
            for dc in lo..lo + t {
                let (c, r) = (col + dc, row + dr);
                if (0..g.width as i64).contains(&c) && (0..g.height as i64).contains(&r) {
                    self.cells[r as usize * g.width + c as usize] = 1;
                }
            }
        }
    }

    fn draw_line(&mut self, (c0, r0): (i64, i64), (c1, r1): (i64, i64)) {
        let g = self.geometry;
        let margin = g.thickness_cells as i64;
        let outside = |c: i64, r: i64| {
            c < -margin || r < -margin || c >= g.width as i64 + margin || r >= g.height as i64 + margin
        };
        // Both ends beyond the same side: nothing to draw.
        if (c0.max(c1) < -margin)
            || (r0.max(r1) < -margin)
            || (c0.min(c1) >= g.width as i64 + margin)
            || (r0.min(r1) >= g.height as i64 + margin)
        {
            return;
        }
        let (dc, dr) = ((c1 - c0).abs(), -(r1 - r0).abs());
        let (sc, sr) = ((c1 - c0).signum(), (r1 - r0).signum());
        let (mut c, mut r, mut err) = (c0, r0, dc + dr);
        loop {
            if !outside(c, r) {
                self.stamp(c, r);
            }
            if c == c1 && r == r1 {
                break;
            }
            let e2 = 2 * err;
            if e2 >= dr {
                err += dr;
                c += sc;
            }
            if e2 <= dc {
                err += dc;
                r += sr;
            }
        }
    }

    /// Binary PGM, far end (largest row) first, occupied cells at 255.
    pub fn to_pgm(&self) -> Vec<u8> {
        let g = &self.geometry;
        let mut out = format!("P5\n{} {}\n255\n", g.width, g.height).into_bytes();
        for row in (0..g.height).rev() {
            out.extend(self.cells[row * g.width..(row + 1) * g.width].iter().map(|&c| c * 255));
        }
        out
    }

    /// Writes `<stem>.pgm` and the `<stem>.json` sidecar.
    pub fn write(&self, dir: impl AsRef<Path>, stem: &str) -> Result<()> {
        let dir = dir.as_ref();
        fs::write(dir.join(format!("{stem}.pgm")), self.to_pgm())?;
        let sidecar = MaskSidecar {
            geometry: self.geometry,
            view: self.view,
            row_order: "far_first".into(),
        };
        let mut f = fs::File::create(dir.join(format!("{stem}.json")))?;
        serde_json::to_writer_pretty(&mut f, &sidecar).map_err(std::io::Error::from)?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaskSidecar {
    pub geometry: MaskGeometry,
    pub view: TopView,
    pub row_order: String,
}

/// Draws every lane polyline into the grid with a square brush of
/// `thickness_cells`. In the virtual view, points at or above the camera
/// split the polyline.
pub fn rasterize_top_mask(scene: &Scene, geometry: &MaskGeometry, view: TopView) -> Result<TopViewMask> {
    geometry.validate()?;
    let mut mask = TopViewMask {
        geometry: *geometry,
        view,
        cells: vec![0; geometry.width * geometry.height],
    };
    let h = scene.camera.height_m;
    for lane in &scene.lanes {
        let mut prev: Option<(i64, i64)> = None;
        for &p in &lane.points {
            let q = match view {
                TopView::Real => Some(project_real_top(p)),
                TopView::Virtual => project_virtual_top(p, h).ok(),
            };
            let Some(q) = q else {
                prev = None;
                continue;
            };
            let cell = geometry.cell_of(q);
            mask.draw_line(prev.unwrap_or(cell), cell);
            prev = Some(cell);
        }
    }
    Ok(mask)
}

/// Adds independent Gaussian noise of standard deviation `sigma` to both
/// coordinates of every flat point. Deterministic in `(seed, frame_id)`.
pub fn add_flat_noise(lanes: &[Lane2D], sigma: f64, seed: u64, frame_id: &str) -> Result<Vec<Lane2D>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::invalid("noise", format!("sigma must be >= 0, got {sigma}")));
    }
    let mut rng = keyed_rng(seed, frame_id, 0);
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    lanes
        .iter()
        .map(|lane| {
            let points = lane
                .points
                .iter()
                .map(|p| Point2D::new(p.x + normal.sample(&mut rng), p.y + normal.sample(&mut rng)))
                .collect();
            Lane2D::new(lane.id.clone(), points, lane.visibility.clone())
        })
        .collect()
}
