//! Lane detection evaluation: lane matching by minimum-cost flow, precision,
//! recall, F-score and AP over a probability sweep, near/far offset errors,
//! the joint metric over several methods and the dataset splits.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Lane3D, Scene};
use crate::synth::interpolate;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatchConfig {
    pub point_tolerance: f64,
    pub match_fraction: f64,
    pub eval_y_refs: Vec<f64>,
    pub near_far_split: f64,
    pub prob_thresholds: Vec<f64>,
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

impl Default for MatchConfig {
    /// 1.5 m tolerance over 75 % of the references, 100 references from 3 to
    /// 103 m, near/far split at 40 m, thresholds 0.05, 0.10, …, 0.95.
    fn default() -> Self {
        Self {
            point_tolerance: 1.5,
            match_fraction: 0.75,
            eval_y_refs: linspace(3.0, 103.0, 100),
            near_far_split: 40.0,
            prob_thresholds: (1..=19).map(|k| k as f64 * 0.05).collect(),
        }
    }
}

impl MatchConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.point_tolerance > 0.0) {
            return Err(Error::invalid("match config", "point_tolerance must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.match_fraction) {
            return Err(Error::invalid("match config", "match_fraction must lie in [0, 1]"));
        }
        if self.eval_y_refs.is_empty() || self.eval_y_refs.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::invalid("match config", "eval_y_refs must be non-empty and strictly increasing"));
        }
        if self.prob_thresholds.is_empty() || self.prob_thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::invalid("match config", "prob_thresholds must be non-empty and within [0, 1]"));
        }
        Ok(())
    }
}

/// A lane sampled at the evaluation references.
#[derive(Debug, Clone, PartialEq)]
pub struct Resampled {
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub visible: Vec<bool>,
}

/// Linear interpolation in `y`; a reference is visible when it lies inside
/// the lane's span and the interpolated visibility is at least 0.5.
pub fn resample_lane(lane: &Lane3D, refs: &[f64]) -> Resampled {
    let ys: Vec<f64> = lane.points.iter().map(|p| p.y).collect();
    let xs: Vec<f64> = lane.points.iter().map(|p| p.x).collect();
    let zs: Vec<f64> = lane.points.iter().map(|p| p.z).collect();
    let vs: Vec<f64> = lane.visibility.iter().map(|&v| f64::from(v)).collect();
    let mut out = Resampled {
        x: Vec::with_capacity(refs.len()),
        z: Vec::with_capacity(refs.len()),
        visible: Vec::with_capacity(refs.len()),
    };
    for &y in refs {
        match (interpolate(&ys, &xs, y), interpolate(&ys, &zs, y), interpolate(&ys, &vs, y)) {
            (Some(x), Some(z), Some(v)) => {
                out.x.push(x);
                out.z.push(z);
                out.visible.push(v >= 0.5);
            }
            _ => {
                out.x.push(0.0);
                out.z.push(0.0);
                out.visible.push(false);
            }
        }
    }
    out
}

/// Mean distance over co-visible references if the pair is admissible.
pub fn edge_cost(a: &Resampled, b: &Resampled, cfg: &MatchConfig) -> Option<f64> {
    let mut total = 0.0;
    let mut n = 0usize;
    let mut close = 0usize;
    for k in 0..a.x.len() {
        if a.visible[k] && b.visible[k] {
            let d = (a.x[k] - b.x[k]).hypot(a.z[k] - b.z[k]);
            total += d;
            n += 1;
            if d <= cfg.point_tolerance {
                close += 1;
            }
        }
    }
    (n > 0 && close as f64 >= cfg.match_fraction * n as f64).then(|| total / n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaneMatch {
    pub gt: usize,
    pub pred: usize,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matching {
    /// Sorted by GT index.
    pub pairs: Vec<LaneMatch>,
    pub num_gt: usize,
    pub num_pred: usize,
}

impl Matching {
    pub fn tp(&self) -> usize {
        self.pairs.len()
    }

    pub fn fp(&self) -> usize {
        self.num_pred - self.pairs.len()
    }

    pub fn fn_(&self) -> usize {
        self.num_gt - self.pairs.len()
    }

    pub fn total_cost(&self) -> f64 {
        self.pairs.iter().map(|m| m.cost).sum()
    }
}

/// Maximum-cardinality assignment of least total cost. `costs[g][p]` is
/// `None` for inadmissible edges.
///
/// Successive shortest paths on the unit-capacity flow network
/// source → GT → prediction → sink, with Bellman-Ford on the residual graph.
pub fn min_cost_assignment(costs: &[Vec<Option<f64>>], num_pred: usize) -> Vec<LaneMatch> {
    let num_gt = costs.len();
    // pred_of[g], gt_of[p]: current assignment.
    let mut pred_of: Vec<Option<usize>> = vec![None; num_gt];
    let mut gt_of: Vec<Option<usize>> = vec![None; num_pred];
    loop {
        // Nodes: GT 0..num_gt, predictions num_gt..num_gt+num_pred.
        // dist to each node from the source through free GT lanes.
        let n = num_gt + num_pred;
        let mut dist = vec![f64::INFINITY; n];
        let mut parent: Vec<Option<usize>> = vec![None; n];
        for g in 0..num_gt {
            if pred_of[g].is_none() {
                dist[g] = 0.0;
            }
        }
        for _ in 0..n {
            let mut changed = false;
            for g in 0..num_gt {
                if !dist[g].is_finite() {
                    continue;
                }
                for (p, c) in costs[g].iter().enumerate() {
                    let Some(c) = c else { continue };
                    if pred_of[g] == Some(p) {
                        continue;
                    }
                    let nd = dist[g] + c;
                    if nd < dist[num_gt + p] - 1e-12 {
                        dist[num_gt + p] = nd;
                        parent[num_gt + p] = Some(g);
                        changed = true;
                    }
                }
            }
            // Backward residual edges: prediction → its current GT, cost −c.
            for p in 0..num_pred {
                let (Some(g), true) = (gt_of[p], dist[num_gt + p].is_finite()) else {
                    continue;
                };
                let c = costs[g][p].expect("assigned edges are admissible");
                let nd = dist[num_gt + p] - c;
                if nd < dist[g] - 1e-12 {
                    dist[g] = nd;
                    parent[g] = Some(num_gt + p);
                    changed = true;
                }
            }
            if !changed {
                break;
            }
        }
        let best = (0..num_pred)
            .filter(|&p| gt_of[p].is_none() && dist[num_gt + p].is_finite())
            .min_by(|&a, &b| dist[num_gt + a].total_cmp(&dist[num_gt + b]).then(a.cmp(&b)));
        let Some(end) = best else {
            break;
        };
        // Walk back from the free prediction, flipping edges along the path.
        // A GT node reached through a backward edge has its old prediction
        // as parent; a free GT node starts the path.
        let mut p = end;
        loop {
            let g = parent[num_gt + p].expect("reached predictions have a parent");
            let back = parent[g];
            pred_of[g] = Some(p);
            gt_of[p] = Some(g);
            match back {
                Some(prev) => p = prev - num_gt,
                None => break,
            }
        }
    }
    pred_of
        .iter()
        .enumerate()
        .filter_map(|(g, p)| {
            p.map(|p| LaneMatch {
                gt: g,
                pred: p,
                cost: costs[g][p].expect("assigned edges are admissible"),
            })
        })
        .collect()
}

pub fn match_lanes(gt: &[Lane3D], pred: &[Lane3D], cfg: &MatchConfig) -> Matching {
    let g: Vec<Resampled> = gt.iter().map(|l| resample_lane(l, &cfg.eval_y_refs)).collect();
    let p: Vec<Resampled> = pred.iter().map(|l| resample_lane(l, &cfg.eval_y_refs)).collect();
    match_resampled(&g, &p, cfg)
}

fn match_resampled(gt: &[Resampled], pred: &[Resampled], cfg: &MatchConfig) -> Matching {
    let costs: Vec<Vec<Option<f64>>> = gt
        .iter()
        .map(|g| pred.iter().map(|p| edge_cost(g, p, cfg)).collect())
        .collect();
    Matching {
        pairs: min_cost_assignment(&costs, pred.len()),
        num_gt: gt.len(),
        num_pred: pred.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl std::ops::AddAssign for Counts {
    fn add_assign(&mut self, o: Counts) {
        self.tp += o.tp;
        self.fp += o.fp;
        self.fn_ += o.fn_;
    }
}

impl From<&Matching> for Counts {
    fn from(m: &Matching) -> Self {
        Counts {
            tp: m.tp(),
            fp: m.fp(),
            fn_: m.fn_(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FScore {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
}

/// Precision and recall are 0 when their denominators are.
pub fn compute_fscore(c: Counts) -> FScore {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f_score = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    FScore {
        precision,
        recall,
        f_score,
    }
}

/// Interpolated AP: `Σ (r_k − r_{k−1})·max_{r ≥ r_k} p(r)` over the sweep
/// sorted by recall, starting from recall 0.
pub fn compute_ap(points: &[FScore]) -> f64 {
    let mut pr: Vec<(f64, f64)> = points.iter().map(|s| (s.recall, s.precision)).collect();
    pr.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let mut envelope = vec![0.0; pr.len()];
    let mut best: f64 = 0.0;
    for k in (0..pr.len()).rev() {
        best = best.max(pr[k].1);
        envelope[k] = best;
    }
    let mut prev_r = 0.0;
    let mut ap = 0.0;
    for (k, &(r, _)) in pr.iter().enumerate() {
        ap += (r - prev_r) * envelope[k];
        prev_r = r;
    }
    ap
}

/// Mean absolute errors of one matched pair over its co-visible references,
/// split into near and far. `None` where a bucket has no references.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PairErrors {
    pub x_near: Option<f64>,
    pub x_far: Option<f64>,
    pub z_near: Option<f64>,
    pub z_far: Option<f64>,
}

pub fn pair_errors(gt: &Resampled, pred: &Resampled, refs: &[f64], split: f64) -> PairErrors {
    let mut acc = [(0.0, 0usize); 4];
    for (k, &y) in refs.iter().enumerate() {
        if !(gt.visible[k] && pred.visible[k]) {
            continue;
        }
        let far = usize::from(y >= split);
        let dx = (gt.x[k] - pred.x[k]).abs();
        let dz = (gt.z[k] - pred.z[k]).abs();
        acc[far].0 += dx;
        acc[far].1 += 1;
        acc[2 + far].0 += dz;
        acc[2 + far].1 += 1;
    }
    let mean = |(s, n): (f64, usize)| (n > 0).then(|| s / n as f64);
    PairErrors {
        x_near: mean(acc[0]),
        x_far: mean(acc[1]),
        z_near: mean(acc[2]),
        z_far: mean(acc[3]),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct OffsetErrors {
    pub x_near: f64,
    pub x_far: f64,
    pub z_near: f64,
    pub z_far: f64,
    /// No matched pair contributed.
    pub empty: bool,
}

/// Mean over pairs of the per-pair means; pairs without references in a
/// bucket are left out of that bucket.
pub fn aggregate_errors<'a>(pairs: impl IntoIterator<Item = &'a PairErrors>) -> OffsetErrors {
    let mut acc = [(0.0, 0usize); 4];
    let mut any = false;
    for e in pairs {
        any = true;
        for (k, v) in [e.x_near, e.x_far, e.z_near, e.z_far].into_iter().enumerate() {
            if let Some(v) = v {
                acc[k].0 += v;
                acc[k].1 += 1;
            }
        }
    }
    let mean = |(s, n): (f64, usize)| if n == 0 { 0.0 } else { s / n as f64 };
    OffsetErrors {
        x_near: mean(acc[0]),
        x_far: mean(acc[1]),
        z_near: mean(acc[2]),
        z_far: mean(acc[3]),
        empty: !any,
    }
}

/// Offset errors of the matched pairs of one frame.
pub fn compute_offset_errors(gt: &[Lane3D], pred: &[Lane3D], matching: &Matching, cfg: &MatchConfig) -> OffsetErrors {
    let errs: Vec<PairErrors> = matching
        .pairs
        .iter()
        .map(|m| {
            pair_errors(
                &resample_lane(&gt[m.gt], &cfg.eval_y_refs),
                &resample_lane(&pred[m.pred], &cfg.eval_y_refs),
                &cfg.eval_y_refs,
                cfg.near_far_split,
            )
        })
        .collect();
    aggregate_errors(&errs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub frame_id: String,
    pub gt_id: String,
    pub pred_id: String,
    pub errors: PairErrors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub frame_id: String,
    #[serde(flatten)]
    pub counts: Counts,
    #[serde(flatten)]
    pub errors: OffsetErrors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPoint {
    pub threshold: f64,
    #[serde(flatten)]
    pub score: FScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointErrors {
    /// One entry per compared method, in input order.
    pub methods: Vec<OffsetErrors>,
    pub shared_pairs: usize,
    pub empty_intersection: bool,
}

/// Errors and the match list are taken at the threshold with the best
/// F-score (the lowest such threshold on ties).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub f_score: f64,
    pub precision: f64,
    pub recall: f64,
    pub ap: f64,
    pub best_threshold: f64,
    pub x_err_near: f64,
    pub x_err_far: f64,
    pub z_err_near: f64,
    pub z_err_far: f64,
    pub errors_empty: bool,
    pub curve: Vec<ThresholdPoint>,
    pub matched_pairs: Vec<MatchedPair>,
    pub per_frame: Vec<FrameReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub joint: Option<JointErrors>,
}

impl EvalReport {
    pub fn offset_errors(&self) -> OffsetErrors {
        OffsetErrors {
            x_near: self.x_err_near,
            x_far: self.x_err_far,
            z_near: self.z_err_near,
            z_far: self.z_err_far,
            empty: self.errors_empty,
        }
    }
}

/// Pairs each GT frame with the prediction frame of the same id.
fn align<'a>(gt: &'a [Scene], pred: &'a [Scene]) -> Result<Vec<(&'a Scene, &'a Scene)>> {
    let by_id: BTreeMap<&str, &Scene> = pred.iter().map(|s| (s.frame_id.as_str(), s)).collect();
    let gt_ids: BTreeSet<&str> = gt.iter().map(|s| s.frame_id.as_str()).collect();
    let missing: Vec<&str> = gt.iter().map(|s| s.frame_id.as_str()).filter(|id| !by_id.contains_key(id)).collect();
    let extra: Vec<&str> = by_id.keys().copied().filter(|id| !gt_ids.contains(id)).collect();
    if !missing.is_empty() || !extra.is_empty() {
        return Err(Error::InvalidInput(format!(
            "frame ids differ; missing predictions for [{}], predictions without ground truth [{}]",
            missing.join(", "),
            extra.join(", ")
        )));
    }
    Ok(gt.iter().map(|g| (g, by_id[g.frame_id.as_str()])).collect())
}

fn lane_prob(lane: &Lane3D) -> f64 {
    lane.prob.unwrap_or(1.0)
}

struct FrameData<'a> {
    gt: &'a Scene,
    pred: &'a Scene,
    gt_r: Vec<Resampled>,
    pred_r: Vec<Resampled>,
}

/// Full evaluation of predictions against ground truth. Predictions without
/// a probability count as probability 1.
pub fn evaluate(gt: &[Scene], pred: &[Scene], cfg: &MatchConfig) -> Result<EvalReport> {
    cfg.validate()?;
    let frames: Vec<FrameData> = align(gt, pred)?
        .into_iter()
        .map(|(g, p)| FrameData {
            gt: g,
            pred: p,
            gt_r: g.lanes.iter().map(|l| resample_lane(l, &cfg.eval_y_refs)).collect(),
            pred_r: p.lanes.iter().map(|l| resample_lane(l, &cfg.eval_y_refs)).collect(),
        })
        .collect();
    let match_at = |f: &FrameData, t: f64| -> (Vec<usize>, Matching) {
        let keep: Vec<usize> = (0..f.pred.lanes.len()).filter(|&k| lane_prob(&f.pred.lanes[k]) >= t).collect();
        let kept: Vec<Resampled> = keep.iter().map(|&k| f.pred_r[k].clone()).collect();
        (keep, match_resampled(&f.gt_r, &kept, cfg))
    };
    let mut curve = Vec::with_capacity(cfg.prob_thresholds.len());
    for &t in &cfg.prob_thresholds {
        let mut counts = Counts::default();
        for f in &frames {
            counts += Counts::from(&match_at(f, t).1);
        }
        curve.push(ThresholdPoint {
            threshold: t,
            score: compute_fscore(counts),
        });
    }
    let ap = compute_ap(&curve.iter().map(|p| p.score).collect::<Vec<_>>());
    let best = curve
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.score.f_score.total_cmp(&b.1.score.f_score).then(b.0.cmp(&a.0)))
        .map(|(k, _)| k)
        .expect("thresholds are non-empty");
    let t = curve[best].threshold;

    let mut matched_pairs = Vec::new();
    let mut per_frame = Vec::with_capacity(frames.len());
    for f in &frames {
        let (keep, m) = match_at(f, t);
        let mut errs = Vec::with_capacity(m.pairs.len());
        for lm in &m.pairs {
            let p = keep[lm.pred];
            let e = pair_errors(&f.gt_r[lm.gt], &f.pred_r[p], &cfg.eval_y_refs, cfg.near_far_split);
            matched_pairs.push(MatchedPair {
                frame_id: f.gt.frame_id.clone(),
                gt_id: f.gt.lanes[lm.gt].id.clone(),
                pred_id: f.pred.lanes[p].id.clone(),
                errors: e,
            });
            errs.push(e);
        }
        per_frame.push(FrameReport {
            frame_id: f.gt.frame_id.clone(),
            counts: Counts::from(&m),
            errors: aggregate_errors(&errs),
        });
    }
    let errors = aggregate_errors(matched_pairs.iter().map(|p| &p.errors));
    let score = curve[best].score;
    Ok(EvalReport {
        f_score: score.f_score,
        precision: score.precision,
        recall: score.recall,
        ap,
        best_threshold: t,
        x_err_near: errors.x_near,
        x_err_far: errors.x_far,
        z_err_near: errors.z_near,
        z_err_far: errors.z_far,
        errors_empty: errors.empty,
        curve,
        matched_pairs,
        per_frame,
        joint: None,
    })
}

/// Recomputes each report's errors over the GT lanes (frame id, lane id)
/// matched in every report.
pub fn joint_offset_errors(reports: &[&EvalReport]) -> JointErrors {
    let keys = |r: &EvalReport| -> BTreeSet<(String, String)> {
        r.matched_pairs.iter().map(|p| (p.frame_id.clone(), p.gt_id.clone())).collect()
    };
    let shared = reports
        .iter()
        .map(|r| keys(r))
        .reduce(|a, b| a.intersection(&b).cloned().collect())
        .unwrap_or_default();
    let methods = reports
        .iter()
        .map(|r| {
            aggregate_errors(
                r.matched_pairs
                    .iter()
                    .filter(|p| shared.contains(&(p.frame_id.clone(), p.gt_id.clone())))
                    .map(|p| &p.errors),
            )
        })
        .collect();
    JointErrors {
        methods,
        shared_pairs: shared.len(),
        empty_intersection: shared.is_empty(),
    }
}

/// Scenes reaching beyond 195 m, and a config with references every 5 m
/// from 5 to 200 m.
pub fn split_extra_long(scenes: &[Scene], base: &MatchConfig) -> (Vec<Scene>, MatchConfig) {
    let kept = scenes
        .iter()
        .filter(|s| s.lanes.iter().flat_map(|l| &l.points).any(|p| p.y > 195.0))
        .cloned()
        .collect();
    let cfg = MatchConfig {
        eval_y_refs: (1..=40).map(|k| 5.0 * k as f64).collect(),
        ..base.clone()
    };
    (kept, cfg)
}

/// Default height threshold of the hard split.
pub const HARD_HEIGHT_THRESHOLD: f64 = 1.78;

/// `(hard, easy)`: hard scenes have some point with |z| above the threshold.
pub fn split_hard_easy(scenes: &[Scene], z_threshold: f64) -> Result<(Vec<Scene>, Vec<Scene>)> {
    if !(z_threshold > 0.0) {
        return Err(Error::InvalidInput(format!("height threshold must be > 0, got {z_threshold}")));
    }
    Ok(scenes.iter().cloned().partition(|s| s.max_abs_height() > z_threshold))
}

pub fn write_per_frame_csv(report: &EvalReport, out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "frame_id,tp,fp,fn,x_near,x_far,z_near,z_far")?;
    for f in &report.per_frame {
        let e = &f.errors;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            f.frame_id, f.counts.tp, f.counts.fp, f.counts.fn_, e.x_near, e.x_far, e.z_near, e.z_far
        )?;
    }
    Ok(())
}
