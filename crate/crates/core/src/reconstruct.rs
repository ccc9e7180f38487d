//! Height recovery from flat-ground (virtual top view) lanes.
//!
//! With both endpoints of a width pair at height `z`, the flat distance is
//! `c·h/(h − z)` for true width `c`, so `z = h·(1 − c/D_flat)`. The iterative
//! solver starts from that estimate and minimizes the squared deviation of
//! the 3D widths from a near-range width plus the weighted geometry prior.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::{FlatPair, FlatPairGeometry, Objective};
use crate::model::{Lane2D, Lane3D, PairMap, Point2D, Point3D, Scene};
use crate::pairing::{match_point_pairs, Pairing, PairingConfig};
use crate::projection::{lift_from_virtual_top, project_lane_virtual_top};

/// Estimates at or above `h_cam − CLAMP_MARGIN` are clamped there.
pub const CLAMP_MARGIN: f64 = 1e-6;

const MAX_HALVINGS: usize = 20;

/// Per-pair height from the flat width: exact when both endpoints share a
/// height and the true width is `true_width`.
pub fn reconstruct_closed_form(pairs: &[(Point2D, Point2D)], true_width: f64, h_cam: f64) -> Result<Vec<f64>> {
    if !(true_width > 0.0) {
        return Err(Error::InvalidInput(format!("true width must be > 0, got {true_width}")));
    }
    if !(h_cam > 0.0) {
        return Err(Error::InvalidInput(format!("camera height must be > 0, got {h_cam}")));
    }
    pairs
        .iter()
        .enumerate()
        .map(|(index, (a, b))| {
            let d = a.distance(b);
            if !(d > 1e-9) {
                return Err(Error::DegeneratePair { index, distance: d });
            }
            Ok(h_cam * (1.0 - true_width / d))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_iters: usize,
    /// Initial gradient step before backtracking.
    pub step: f64,
    /// Stop once an accepted step changes J by less than this.
    pub tol: f64,
    pub lambda_geo: f64,
    /// Pairs from the near end whose median flat width fixes the target width.
    pub near_pairs: usize,
    pub pairing: PairingConfig,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 500,
            step: 0.1,
            tol: 1e-12,
            lambda_geo: 1e-2,
            near_pairs: 3,
            pairing: PairingConfig::default(),
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 || !(self.step > 0.0) || !(self.tol > 0.0) || self.near_pairs == 0 {
            return Err(Error::invalid(
                "solver options",
                "max_iters, step, tol and near_pairs must be positive",
            ));
        }
        if !(self.lambda_geo >= 0.0) {
            return Err(Error::invalid("solver options", "lambda_geo must be >= 0"));
        }
        self.pairing.validate()
    }
}

/// `Σ (D_3D − target)² + λ·L_geo` over the heights of a flat pair geometry.
pub struct WidthObjective<'a> {
    pub geometry: &'a FlatPairGeometry,
    pub target: f64,
    pub lambda_geo: f64,
}

impl Objective for WidthObjective<'_> {
    fn value(&self, z: &[f64]) -> f64 {
        let g = self.geometry;
        let geo = if self.lambda_geo == 0.0 { 0.0 } else { g.geo_loss(z, 1.0) };
        g.width_residual(z, self.target) + self.lambda_geo * geo
    }

    fn gradient(&self, z: &[f64]) -> Vec<f64> {
        let g = self.geometry;
        let mut grad = g.width_residual_gradient(z, self.target);
        if self.lambda_geo != 0.0 {
            for (a, b) in grad.iter_mut().zip(g.geo_loss_gradient(z, 1.0)) {
                *a += self.lambda_geo * b;
            }
        }
        grad
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub pair: usize,
    pub iter: usize,
    pub j: f64,
    pub step: f64,
}

pub fn write_trace_csv(rows: &[TraceRow], out: &mut impl Write) -> std::io::Result<()> {
    writeln!(out, "pair,iter,J,step")?;
    for r in rows {
        writeln!(out, "{},{},{},{}", r.pair, r.iter, r.j, r.step)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LaneStatus {
    Solved,
    /// Solved, but some estimate hit the camera-height clamp.
    Clamped,
    /// No neighbouring boundary could be paired with this one; heights are 0.
    NoPairing,
}

impl LaneStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            LaneStatus::Solved => "solved",
            LaneStatus::Clamped => "clamped",
            LaneStatus::NoPairing => "no_pairing",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    /// Same order as the input lanes.
    pub lanes: Vec<Lane3D>,
    pub status: Vec<LaneStatus>,
    pub trace: Vec<TraceRow>,
}

/// Result of minimizing one objective from `z0`.
#[derive(Debug, Clone, PartialEq)]
pub struct Descent {
    pub z: Vec<f64>,
    pub j: f64,
    pub iters: usize,
    pub clamped: bool,
    pub trace: Vec<(usize, f64, f64)>,
}

/// Gradient descent with step halving: a step is accepted only if it does
/// not increase J. Heights are clamped below `h_cam`.
pub fn descend(f: &impl Objective, z0: Vec<f64>, h_cam: f64, opts: &SolverOptions) -> Result<Descent> {
    let z_max = h_cam - CLAMP_MARGIN;
    let mut clamped = false;
    let mut clamp = |z: &mut [f64]| {
        for v in z.iter_mut() {
            if *v > z_max {
                *v = z_max;
                clamped = true;
            }
        }
    };
    let mut z = z0;
    clamp(&mut z);
    let mut j = f.value(&z);
    if !j.is_finite() {
        return Err(Error::Diverged(format!("objective is {j} at the initial point")));
    }
    let mut trace = vec![(0, j, 0.0)];
    let mut iters = 0;
    while iters < opts.max_iters {
        let grad = f.gradient(&z);
        if grad.iter().all(|g| *g == 0.0) {
            break;
        }
        let mut step = opts.step;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let mut trial: Vec<f64> = z.iter().zip(&grad).map(|(v, g)| v - step * g).collect();
            clamp(&mut trial);
            let jt = f.value(&trial);
            if !jt.is_finite() {
                return Err(Error::Diverged(format!("objective is {jt} after {iters} iterations")));
            }
            if jt <= j {
                accepted = Some((trial, jt));
                break;
            }
            step *= 0.5;
        }
        let Some((next, jn)) = accepted else {
            break;
        };
        iters += 1;
        let delta = j - jn;
        z = next;
        j = jn;
        trace.push((iters, j, step));
        if delta < opts.tol {
            break;
        }
    }
    Ok(Descent {
        z,
        j,
        iters,
        clamped,
        trace,
    })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Flat lane as a 3D lane on the ground plane, for pairing.
fn on_ground(lane: &Lane2D) -> Result<Lane3D> {
    Lane3D::new(
        lane.id.clone(),
        lane.points.iter().map(|p| Point3D::new(p.x, p.y, 0.0)).collect(),
        lane.visibility.clone(),
    )
}

/// Lateral order of the lanes: by x at the first point.
fn lateral_order(lanes: &[Lane2D]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..lanes.len()).filter(|&k| !lanes[k].is_empty()).collect();
    order.sort_by(|&a, &b| lanes[a].points[0].x.total_cmp(&lanes[b].points[0].x).then(a.cmp(&b)));
    order
}

/// Solved heights for one adjacent boundary pair, keyed by point index.
struct PairSolution {
    first: (usize, Vec<(usize, f64)>),
    second: (usize, Vec<(usize, f64)>),
    clamped: bool,
}

/// Pair geometry with the closed-form starting heights.
struct PairSetup {
    src: usize,
    dst: usize,
    pairs: PairMap,
    geometry: FlatPairGeometry,
    target: f64,
    z0: Vec<f64>,
}

fn setup_pair(
    lanes: &[Lane2D],
    (ia, ib): (usize, usize),
    pairs: PairMap,
    h_cam: f64,
    opts: &SolverOptions,
) -> Result<Option<PairSetup>> {
    let (src, dst) = if pairs.source_id == lanes[ia].id { (ia, ib) } else { (ib, ia) };
    let (s, d) = (&lanes[src], &lanes[dst]);
    let geometry = FlatPairGeometry {
        pairs: pairs
            .iter()
            .map(|(i, j)| FlatPair {
                left: s.points[i],
                right: d.points[j],
                visible: s.visibility[i] == 1 && d.visibility[j] == 1,
            })
            .collect(),
        h_cam,
    };
    let flat: Vec<(Point2D, Point2D)> = geometry.pairs.iter().map(|p| (p.left, p.right)).collect();
    let near: Vec<f64> = flat.iter().take(opts.near_pairs).map(|(a, b)| a.distance(b)).collect();
    let target = median(near);
    let z0 = match reconstruct_closed_form(&flat, target, h_cam) {
        Ok(z) => z.iter().flat_map(|&z| [z, z]).collect(),
        Err(Error::DegeneratePair { .. }) => return Ok(None),
        Err(e) => return Err(e),
    };
    Ok(Some(PairSetup {
        src,
        dst,
        pairs,
        geometry,
        target,
        z0,
    }))
}

fn pair_up(a: &Lane3D, b: &Lane3D, cfg: &PairingConfig) -> Result<Option<PairMap>> {
    match match_point_pairs(a, b, cfg) {
        Ok(Pairing::Matched(m)) if !m.is_empty() => Ok(Some(m)),
        Ok(_) | Err(Error::InvalidInput(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn solve_pair(
    lanes: &[Lane2D],
    (ia, ib): (usize, usize),
    pair_index: usize,
    h_cam: f64,
    opts: &SolverOptions,
    trace: &mut Vec<TraceRow>,
) -> Result<Option<PairSolution>> {
    let Some(pairs) = pair_up(&on_ground(&lanes[ia])?, &on_ground(&lanes[ib])?, &opts.pairing)? else {
        return Ok(None);
    };
    let Some(setup) = setup_pair(lanes, (ia, ib), pairs, h_cam, opts)? else {
        return Ok(None);
    };
    let objective = WidthObjective {
        geometry: &setup.geometry,
        target: setup.target,
        lambda_geo: opts.lambda_geo,
    };
    let result = descend(&objective, setup.z0.clone(), h_cam, opts)?;
    trace.extend(result.trace.iter().map(|&(iter, j, step)| TraceRow {
        pair: pair_index,
        iter,
        j,
        step,
    }));
    let keys: Vec<(usize, usize)> = setup.pairs.iter().collect();
    Ok(Some(PairSolution {
        first: (setup.src, keys.iter().enumerate().map(|(k, &(i, _))| (i, result.z[2 * k])).collect()),
        second: (setup.dst, keys.iter().enumerate().map(|(k, &(_, j))| (j, result.z[2 * k + 1])).collect()),
        clamped: result.clamped,
    }))
}

/// Heights of all points from the estimated ones: linear in flat `y` between
/// estimates, constant beyond the ends.
fn fill_heights(lane: &Lane2D, estimates: &BTreeMap<usize, f64>) -> Vec<f64> {
    let known: Vec<(f64, f64)> = estimates.iter().map(|(&i, &z)| (lane.points[i].y, z)).collect();
    let ys: Vec<f64> = known.iter().map(|k| k.0).collect();
    let zs: Vec<f64> = known.iter().map(|k| k.1).collect();
    lane.points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            if let Some(&z) = estimates.get(&i) {
                z
            } else if p.y <= ys[0] {
                zs[0]
            } else if p.y >= ys[ys.len() - 1] {
                zs[zs.len() - 1]
            } else {
                crate::synth::interpolate(&ys, &zs, p.y).expect("inside the estimated span")
            }
        })
        .collect()
}

/// Lifts each flat lane to 3D using heights solved per adjacent boundary pair.
///
/// Boundaries are ordered laterally by their first point and each
/// neighbouring pair is matched and solved on its own. A point in two pairs
/// gets the mean of its estimates; points outside every pair are filled from
/// the solved ones. Lifted points whose `y` does not increase are dropped.
///
/// Fails with `NoPairing` when no pair of boundaries can be matched.
pub fn reconstruct_iterative(flat_lanes: &[Lane2D], h_cam: f64, opts: &SolverOptions) -> Result<Reconstruction> {
    opts.validate()?;
    if !(h_cam > 0.0) {
        return Err(Error::InvalidInput(format!("camera height must be > 0, got {h_cam}")));
    }
    for lane in flat_lanes {
        lane.validate()?;
    }
    let order = lateral_order(flat_lanes);
    let mut sums: Vec<BTreeMap<usize, (f64, usize)>> = vec![BTreeMap::new(); flat_lanes.len()];
    let mut clamped = vec![false; flat_lanes.len()];
    let mut trace = Vec::new();
    let mut solved_any = false;
    for (k, w) in order.windows(2).enumerate() {
        let Some(sol) = solve_pair(flat_lanes, (w[0], w[1]), k, h_cam, opts, &mut trace)? else {
            continue;
        };
        solved_any = true;
        for (lane, zs) in [sol.first, sol.second] {
            clamped[lane] |= sol.clamped;
            for (i, z) in zs {
                let e = sums[lane].entry(i).or_insert((0.0, 0));
                e.0 += z;
                e.1 += 1;
            }
        }
    }
    if !solved_any {
        let ids: Vec<&str> = flat_lanes.iter().map(|l| l.id.as_str()).collect();
        return Err(Error::NoPairing(format!("none of [{}] could be paired", ids.join(", "))));
    }
    let mut lanes = Vec::with_capacity(flat_lanes.len());
    let mut status = Vec::with_capacity(flat_lanes.len());
    for (k, lane) in flat_lanes.iter().enumerate() {
        let estimates: BTreeMap<usize, f64> = sums[k].iter().map(|(&i, &(s, n))| (i, s / n as f64)).collect();
        let (heights, st) = if estimates.is_empty() {
            (vec![0.0; lane.len()], LaneStatus::NoPairing)
        } else if clamped[k] {
            (fill_heights(lane, &estimates), LaneStatus::Clamped)
        } else {
            (fill_heights(lane, &estimates), LaneStatus::Solved)
        };
        lanes.push(lift_lane(lane, &heights, h_cam)?);
        status.push(st);
    }
    Ok(Reconstruction { lanes, status, trace })
}

/// Lifts a flat lane with the given heights, keeping points whose `y`
/// increases.
pub fn lift_lane(lane: &Lane2D, heights: &[f64], h_cam: f64) -> Result<Lane3D> {
    let mut points: Vec<Point3D> = Vec::with_capacity(lane.len());
    let mut visibility = Vec::with_capacity(lane.len());
    for ((p, &z), &v) in lane.points.iter().zip(heights).zip(&lane.visibility) {
        let q = lift_from_virtual_top(*p, z.min(h_cam - CLAMP_MARGIN), h_cam)?;
        if points.last().is_none_or(|last| q.y > last.y) {
            points.push(q);
            visibility.push(v);
        }
    }
    Lane3D::new(lane.id.clone(), points, visibility)
}

/// Metadata key holding the solver status of a lane.
pub fn status_key(lane_id: &str) -> String {
    format!("reconstruct_status.{lane_id}")
}

/// Reconstructs every lane of a scene from its virtual top view.
///
/// Lanes are first projected with `h_cam` (the scene camera height when
/// `None`); lanes already on the ground plane project to themselves. When no
/// boundaries can be paired, or the solver diverges, lanes are lifted at
/// height 0 and the status says so. Statuses go into the scene metadata.
pub fn reconstruct_scene(scene: &Scene, h_cam: Option<f64>, opts: &SolverOptions) -> Result<(Scene, Vec<TraceRow>)> {
    let h = h_cam.unwrap_or(scene.camera.height_m);
    let flat: Vec<Lane2D> = scene.lanes.iter().map(|l| project_lane_virtual_top(l, h)).collect();
    let (lanes, status, trace) = match reconstruct_iterative(&flat, h, opts) {
        Ok(r) => (r.lanes, r.status.iter().map(|s| s.as_str()).collect(), r.trace),
        Err(e @ (Error::NoPairing(_) | Error::Diverged(_))) => {
            let tag = if matches!(e, Error::NoPairing(_)) { "no_pairing" } else { "diverged" };
            let lanes = flat
                .iter()
                .map(|l| lift_lane(l, &vec![0.0; l.len()], h))
                .collect::<Result<Vec<_>>>()?;
            let n = lanes.len();
            (lanes, vec![tag; n], Vec::new())
        }
        Err(e) => return Err(e),
    };
    let mut out = scene.clone();
    out.anchors = None;
    for (lane, st) in lanes.iter().zip(&status) {
        out.metadata.insert(status_key(&lane.id), (*st).to_string());
    }
    out.lanes = lanes;
    Ok((out, trace))
}
