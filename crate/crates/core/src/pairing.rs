//! Lane-width pairs: matching points on one lane boundary to the points of a
//! neighbouring boundary that measure the local lane width.
//!
//! [`match_point_pairs`] is the greedy sliding-window search. It seeds a pair
//! at the middle of the shorter boundary, then walks backward and forward,
//! each step looking at most `window` indices past the previous match. A pair
//! whose width jumps by more than `width_jump_threshold` from the previous
//! matched width rejects the whole lane pair.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::dist3d;
use crate::model::{Lane3D, PairMap, Point3D};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairingConfig {
    pub window: usize,
    pub width_jump_threshold: f64,
}

impl Default for PairingConfig {
    fn default() -> Self {
        Self {
            window: 2,
            width_jump_threshold: 1.0,
        }
    }
}

impl PairingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window < 1 {
            return Err(Error::invalid("pairing config", "window must be >= 1"));
        }
        if !(self.width_jump_threshold > 0.0) {
            return Err(Error::invalid("pairing config", "width_jump_threshold must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Pairing {
    Matched(PairMap),
    /// Adjacent matched widths differ by more than the threshold.
    Rejected {
        source_index: usize,
        width_jump: f64,
    },
}

impl Pairing {
    pub fn matched(self) -> Option<PairMap> {
        match self {
            Pairing::Matched(m) => Some(m),
            Pairing::Rejected { .. } => None,
        }
    }
}

/// Index of the point whose `y` is closest to `y`; ties go to the lower index.
pub fn nearest_y_index(points: &[Point3D], y: f64) -> usize {
    let k = points.partition_point(|p| p.y < y);
    match k {
        0 => 0,
        k if k == points.len() => k - 1,
        k => {
            if (points[k].y - y).abs() < (y - points[k - 1].y).abs() {
                k
            } else {
                k - 1
            }
        }
    }
}

/// Whether `a` should drive the search when paired with `b`: the shorter
/// boundary drives; equal lengths fall back to a content order so the result
/// does not depend on argument order.
fn drives(a: &Lane3D, b: &Lane3D) -> bool {
    let by_content = || {
        a.id.cmp(&b.id).then_with(|| {
            a.points
                .iter()
                .zip(&b.points)
                .map(|(p, q)| p.x.total_cmp(&q.x).then(p.y.total_cmp(&q.y)).then(p.z.total_cmp(&q.z)))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
    };
    a.len().cmp(&b.len()).then_with(by_content) != Ordering::Greater
}

/// Argmin of the distance to `p` over `candidates`, smallest index on ties.
fn closest(p: Point3D, target: &[Point3D], candidates: impl Iterator<Item = usize>) -> Option<(usize, f64)> {
    candidates
        .map(|j| (j, dist3d(p, target[j])))
        .fold(None, |best, (j, d)| match best {
            Some((_, bd)) if bd <= d => best,
            _ => Some((j, d)),
        })
}

pub fn match_point_pairs(l1: &Lane3D, l2: &Lane3D, cfg: &PairingConfig) -> Result<Pairing> {
    cfg.validate()?;
    for lane in [l1, l2] {
        if lane.len() < 3 {
            return Err(Error::InvalidInput(format!(
                "lane '{}' has {} points, need at least 3",
                lane.id,
                lane.len()
            )));
        }
    }
    let (src, dst) = if drives(l1, l2) { (l1, l2) } else { (l2, l1) };
    let (a, b) = (&src.points, &dst.points);
    let eta = cfg.window;
    let n2 = b.len();

    // Candidates must also stay within the window around the same-y index.
    let band = |i: usize| {
        let s = nearest_y_index(b, a[i].y);
        (s.saturating_sub(eta), (s + eta).min(n2 - 1))
    };

    let mid1 = a.len() / 2;
    let (lo, hi) = band(mid1);
    let (mid2, mid_width) = closest(a[mid1], b, lo..=hi).expect("band is never empty");
    let mut pairs = BTreeMap::from([(mid1, mid2)]);

    let (mut prev_j, mut prev_w) = (mid2, mid_width);
    for i in (0..mid1).rev() {
        if prev_j == 0 {
            break;
        }
        let (lo, hi) = band(i);
        let lo = lo.max(prev_j.saturating_sub(eta));
        let hi = hi.min(prev_j - 1);
        if lo > hi {
            break;
        }
        let (j, w) = closest(a[i], b, lo..=hi).expect("non-empty range");
        if (w - prev_w).abs() > cfg.width_jump_threshold {
            return Ok(Pairing::Rejected {
                source_index: i,
                width_jump: w - prev_w,
            });
        }
        pairs.insert(i, j);
        (prev_j, prev_w) = (j, w);
    }

    let (mut prev_j, mut prev_w) = (mid2, mid_width);
    for (i, &p) in a.iter().enumerate().skip(mid1 + 1) {
        let (lo, hi) = band(i);
        let lo = lo.max(prev_j + 1);
        let hi = hi.min(prev_j + eta);
        if lo > hi {
            break;
        }
        let (j, w) = closest(p, b, lo..=hi).expect("non-empty range");
        if (w - prev_w).abs() > cfg.width_jump_threshold {
            return Ok(Pairing::Rejected {
                source_index: i,
                width_jump: w - prev_w,
            });
        }
        pairs.insert(i, j);
        (prev_j, prev_w) = (j, w);
    }

    Ok(Pairing::Matched(PairMap::new(&src.id, &dst.id, pairs)?))
}

/// Per-index matching over the three candidates `{i−1, i, i+1}` with no
/// rejection step. Fails if the resulting pairs cross.
pub fn simplified_main_paper_pairs(l1: &Lane3D, l2: &Lane3D) -> Result<PairMap> {
    if l1.is_empty() || l2.is_empty() {
        return Err(Error::InvalidInput("both lanes need at least one point".into()));
    }
    let n2 = l2.len();
    let pairs = l1
        .points
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let lo = i.saturating_sub(1).min(n2 - 1);
            let hi = (i + 1).min(n2 - 1);
            let (j, _) = closest(p, &l2.points, lo..=hi).expect("non-empty range");
            (i, j)
        })
        .collect();
    PairMap::new(&l1.id, &l2.id, pairs)
}
