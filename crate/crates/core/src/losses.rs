//! Distances, width series and the loss terms of the lane regressor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AnchorSet, Lane3D, PairMap, Point2D, Point3D};
use crate::projection::project_virtual_top;

/// Probability floor used inside the cross-entropy logs.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub lambda_geo: f64,
    pub lambda_cam: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_geo: 1e-2,
            lambda_cam: 1e2,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_geo >= 0.0 && self.lambda_cam >= 0.0) {
            return Err(Error::invalid("loss weights", "weights must be >= 0"));
        }
        Ok(())
    }
}

pub fn dist3d(a: Point3D, b: Point3D) -> f64 {
    let (dx, dy, dz) = (a.x - b.x, a.y - b.y, a.z - b.z);
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Flat-ground distance of the two virtual top-view projections, weighted by
/// `h_cam − z̃` with `z̃` the mean height of the pair.
///
/// For a pair at a common height this equals the horizontal 3D distance times
/// `h_cam`.
pub fn dist2d_weighted(a: Point3D, b: Point3D, h_cam: f64) -> Result<f64> {
    let mean_z = 0.5 * (a.z + b.z);
    let pa = project_virtual_top(a, h_cam)?;
    let pb = project_virtual_top(b, h_cam)?;
    Ok(pa.distance(&pb) * (h_cam - mean_z))
}

/// Lane widths along a pair of boundaries, in pair order.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct WidthSeries {
    pub d3: Vec<f64>,
    pub d2: Vec<f64>,
    pub mask: Vec<u8>,
}

impl WidthSeries {
    pub fn len(&self) -> usize {
        self.d3.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d3.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.d3.len();
        if self.d2.len() != n || self.mask.len() != n {
            return Err(Error::invalid("width series", "lists differ in length"));
        }
        if self.d3.iter().chain(&self.d2).any(|d| !(*d >= 0.0)) {
            return Err(Error::invalid("width series", "distances must be >= 0"));
        }
        Ok(())
    }
}

/// Widths for every matched pair. `pairs.source_id` picks which of the two
/// lanes the keys index; with equal ids `left` is taken as the source.
pub fn width_series(left: &Lane3D, right: &Lane3D, pairs: &PairMap, h_cam: f64) -> Result<WidthSeries> {
    let (src, dst) = if pairs.source_id == left.id {
        (left, right)
    } else if pairs.source_id == right.id {
        (right, left)
    } else {
        return Err(Error::InvalidInput(format!(
            "pair map source '{}' matches neither '{}' nor '{}'",
            pairs.source_id, left.id, right.id
        )));
    };
    let mut series = WidthSeries::default();
    for (i, j) in pairs.iter() {
        let (Some(&a), Some(&b)) = (src.points.get(i), dst.points.get(j)) else {
            return Err(Error::InvalidInput(format!("pair ({i}, {j}) out of range")));
        };
        series.d3.push(dist3d(a, b));
        series.d2.push(dist2d_weighted(a, b, h_cam)?);
        series.mask.push(src.visibility[i] & dst.visibility[j]);
    }
    Ok(series)
}

fn second_difference(d: &[f64], i: usize) -> f64 {
    (d[i - 1] + d[i + 1]) - 2.0 * d[i]
}

/// L1 penalty on second differences of both width series over the interior
/// pairs, weighted by `prob`. Zero for fewer than three pairs.
pub fn geo_prior_loss(series: &WidthSeries, prob: f64) -> f64 {
    let n = series.len();
    if n < 3 {
        return 0.0;
    }
    let mut total = 0.0;
    for d in [&series.d2, &series.d3] {
        for i in 1..n - 1 {
            total += prob * (f64::from(series.mask[i]) * second_difference(d, i)).abs();
        }
    }
    total
}

fn bce_term(weight: f64, q: f64) -> f64 {
    if weight == 0.0 {
        0.0
    } else {
        -weight * q.max(BCE_EPS).ln()
    }
}

/// Anchor regression loss: lane-probability cross-entropy, visibility-masked
/// L1 on x offsets and heights, and L1 on visibility, the last two gated by
/// the ground-truth probability.
///
/// Each log argument is floored at [`BCE_EPS`]; a term whose weight is zero
/// is skipped, so a perfect prediction with probabilities in {0, 1} scores
/// exactly 0.
pub fn anchor_loss(pred: &AnchorSet, gt: &AnchorSet) -> Result<f64> {
    pred.validate()?;
    gt.validate()?;
    if pred.y_refs != gt.y_refs {
        return Err(Error::MismatchedAnchors("y references differ".into()));
    }
    if pred.anchors.len() != gt.anchors.len() {
        return Err(Error::MismatchedAnchors(format!(
            "{} predicted anchors vs {} ground truth",
            pred.anchors.len(),
            gt.anchors.len()
        )));
    }
    let mut loss = 0.0;
    for (p, g) in pred.anchors.iter().zip(&gt.anchors) {
        loss += bce_term(g.prob, p.prob) + bce_term(1.0 - g.prob, 1.0 - p.prob);
        let mut offsets = 0.0;
        let mut vis = 0.0;
        for k in 0..gt.y_refs.len() {
            offsets += (g.vis[k] * (p.x_offsets[k] - g.x_offsets[k])).abs();
            offsets += (g.vis[k] * (p.z[k] - g.z[k])).abs();
            vis += (p.vis[k] - g.vis[k]).abs();
        }
        loss += g.prob * offsets + g.prob * vis;
    }
    Ok(loss)
}

/// L1 error on camera pitch and height.
pub fn cam_loss(pred_pitch: f64, pred_h: f64, gt_pitch: f64, gt_h: f64) -> f64 {
    (pred_pitch - gt_pitch).abs() + (pred_h - gt_h).abs()
}

/// Regression loss: anchor term plus the weighted geometry prior.
pub fn total_rec_loss(anchor: f64, geo: f64, w: &LossWeights) -> f64 {
    anchor + w.lambda_geo * geo
}

/// Camera term of the feature-extraction loss (the segmentation term is not
/// part of this crate).
pub fn weighted_cam_loss(cam: f64, w: &LossWeights) -> f64 {
    w.lambda_cam * cam
}

/// A matched pair of flat-ground (virtual top view) points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatPair {
    pub left: Point2D,
    pub right: Point2D,
    pub visible: bool,
}

/// Geometry of a matched boundary pair on the flat ground, as a function of
/// the unknown heights. The parameter vector interleaves the two endpoint
/// heights of every pair: `[z_l0, z_r0, z_l1, z_r1, ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatPairGeometry {
    pub pairs: Vec<FlatPair>,
    pub h_cam: f64,
}

/// Width values and their derivatives with respect to the two endpoint heights.
#[derive(Debug, Clone, Copy)]
struct PairWidth {
    d3: f64,
    d3_dl: f64,
    d3_dr: f64,
    d2: f64,
    d2_dz: f64,
}

impl FlatPairGeometry {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Endpoints lifted to 3D with the given heights.
    pub fn lift(&self, k: usize, z_left: f64, z_right: f64) -> (Point3D, Point3D) {
        let h = self.h_cam;
        let p = &self.pairs[k];
        let lift = |q: Point2D, z: f64| {
            let s = (h - z) / h;
            Point3D::new(q.x * s, q.y * s, z)
        };
        (lift(p.left, z_left), lift(p.right, z_right))
    }

    fn pair_width(&self, k: usize, zl: f64, zr: f64) -> PairWidth {
        let h = self.h_cam;
        let p = &self.pairs[k];
        let (a, b) = self.lift(k, zl, zr);
        let diff = [a.x - b.x, a.y - b.y, a.z - b.z];
        let d3 = (diff[0] * diff[0] + diff[1] * diff[1] + diff[2] * diff[2]).sqrt();
        let (d3_dl, d3_dr) = if d3 > 0.0 {
            let dl = [-p.left.x / h, -p.left.y / h, 1.0];
            let dr = [-p.right.x / h, -p.right.y / h, 1.0];
            let dot = |u: [f64; 3], v: [f64; 3]| u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
            (dot(diff, dl) / d3, -dot(diff, dr) / d3)
        } else {
            (0.0, 0.0)
        };
        let flat = p.left.distance(&p.right);
        PairWidth {
            d3,
            d3_dl,
            d3_dr,
            d2: flat * (h - 0.5 * (zl + zr)),
            d2_dz: -0.5 * flat,
        }
    }

    fn widths(&self, z: &[f64]) -> Vec<PairWidth> {
        assert_eq!(z.len(), 2 * self.len(), "parameter vector must hold two heights per pair");
        (0..self.len()).map(|k| self.pair_width(k, z[2 * k], z[2 * k + 1])).collect()
    }

    pub fn width_series(&self, z: &[f64]) -> WidthSeries {
        let w = self.widths(z);
        WidthSeries {
            d3: w.iter().map(|p| p.d3).collect(),
            d2: w.iter().map(|p| p.d2).collect(),
            mask: self.pairs.iter().map(|p| u8::from(p.visible)).collect(),
        }
    }

    pub fn geo_loss(&self, z: &[f64], prob: f64) -> f64 {
        geo_prior_loss(&self.width_series(z), prob)
    }

    /// Gradient of [`Self::geo_loss`]; the subgradient of |·| at 0 is 0.
    pub fn geo_loss_gradient(&self, z: &[f64], prob: f64) -> Vec<f64> {
        let w = self.widths(z);
        let n = w.len();
        let mut grad = vec![0.0; 2 * n];
        if n < 3 {
            return grad;
        }
        let mut c3 = vec![0.0; n];
        let mut c2 = vec![0.0; n];
        for i in 1..n - 1 {
            if !self.pairs[i].visible {
                continue;
            }
            let get3: fn(&PairWidth) -> f64 = |p| p.d3;
            let get2: fn(&PairWidth) -> f64 = |p| p.d2;
            for (coef, value) in [(&mut c3, get3), (&mut c2, get2)] {
                let sd = value(&w[i - 1]) + value(&w[i + 1]) - 2.0 * value(&w[i]);
                let s = prob * sign(sd);
                coef[i - 1] += s;
                coef[i + 1] += s;
                coef[i] -= 2.0 * s;
            }
        }
        for k in 0..n {
            grad[2 * k] = c3[k] * w[k].d3_dl + c2[k] * w[k].d2_dz;
            grad[2 * k + 1] = c3[k] * w[k].d3_dr + c2[k] * w[k].d2_dz;
        }
        grad
    }

    /// Sum of squared deviations of the 3D widths from `target`.
    pub fn width_residual(&self, z: &[f64], target: f64) -> f64 {
        self.widths(z).iter().map(|p| (p.d3 - target).powi(2)).sum()
    }

    pub fn width_residual_gradient(&self, z: &[f64], target: f64) -> Vec<f64> {
        self.widths(z)
            .iter()
            .flat_map(|p| {
                let r = 2.0 * (p.d3 - target);
                [r * p.d3_dl, r * p.d3_dr]
            })
            .collect()
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// A scalar function of a flat parameter vector with an analytic gradient.
pub trait Objective {
    fn value(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64]) -> Vec<f64>;
}

/// Adapts a pair of closures to [`Objective`].
pub struct FnObjective<F, G> {
    pub value: F,
    pub gradient: G,
}

impl<F, G> Objective for FnObjective<F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        (self.gradient)(x)
    }
}

/// Geometry prior of a flat pair geometry as an [`Objective`] of the heights.
pub struct GeoPriorObjective<'a> {
    pub geometry: &'a FlatPairGeometry,
    pub prob: f64,
}

impl Objective for GeoPriorObjective<'_> {
    fn value(&self, z: &[f64]) -> f64 {
        self.geometry.geo_loss(z, self.prob)
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        self.geometry.geo_loss_gradient(z, self.prob)
    }
}

/// Relative error between the analytic gradient and central finite
/// differences: `max_k |a_k − n_k|` over the largest component magnitude of
/// either gradient (floored at 1e-8).
pub fn grad_check(f: &impl Objective, point: &[f64], eps: f64) -> f64 {
    assert!(eps > 0.0, "finite-difference step must be positive");
    let analytic = f.gradient(point);
    assert_eq!(analytic.len(), point.len(), "gradient length mismatch");
    let mut x = point.to_vec();
    let mut diff = 0.0f64;
    let mut scale = 1e-8f64;
    for (k, &a) in analytic.iter().enumerate() {
        let orig = x[k];
        x[k] = orig + eps;
        let up = f.value(&x);
        x[k] = orig - eps;
        let down = f.value(&x);
        x[k] = orig;
        let numeric = (up - down) / (2.0 * eps);
        diff = diff.max((a - numeric).abs());
        scale = scale.max(a.abs()).max(numeric.abs());
    }
    diff / scale
}
