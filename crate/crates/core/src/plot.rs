//! Hand-written SVG figures: per-frame lane overlays and report bar charts.
//!
//! Ground truth is drawn in blue, predictions in red. Each frame figure has a
//! top-view panel (x across, y up) and a height profile panel (y across, z up).

use std::fmt::Write;

use crate::evaluate::EvalReport;
use crate::model::{Lane3D, Scene};

pub const GT_COLOR: &str = "blue";
pub const PRED_COLOR: &str = "red";

const PANEL_W: f64 = 300.0;
const PANEL_H: f64 = 400.0;
const MARGIN: f64 = 40.0;

pub fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

#[derive(Debug, Clone, Copy)]
struct Bounds {
    lo: (f64, f64),
    hi: (f64, f64),
}

impl Bounds {
    fn of(points: impl Iterator<Item = (f64, f64)>) -> Self {
        let mut b = Bounds {
            lo: (f64::INFINITY, f64::INFINITY),
            hi: (f64::NEG_INFINITY, f64::NEG_INFINITY),
        };
        for (u, v) in points {
            b.lo = (b.lo.0.min(u), b.lo.1.min(v));
            b.hi = (b.hi.0.max(u), b.hi.1.max(v));
        }
        if !b.lo.0.is_finite() {
            return Bounds { lo: (0.0, 0.0), hi: (1.0, 1.0) };
        }
        // Pad degenerate extents so flat profiles still get an axis.
        let pad = |lo: f64, hi: f64| if hi - lo < 1e-6 { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
        let (u0, u1) = pad(b.lo.0, b.hi.0);
        let (v0, v1) = pad(b.lo.1, b.hi.1);
        Bounds { lo: (u0, v0), hi: (u1, v1) }
    }

    /// Panel coordinates with `v` growing upward.
    fn map(&self, (u, v): (f64, f64), x0: f64) -> (f64, f64) {
        let px = x0 + MARGIN + (u - self.lo.0) / (self.hi.0 - self.lo.0) * (PANEL_W - 2.0 * MARGIN);
        let py = PANEL_H - MARGIN - (v - self.lo.1) / (self.hi.1 - self.lo.1) * (PANEL_H - 2.0 * MARGIN);
        (px, py)
    }
}

fn polyline(out: &mut String, pts: &[(f64, f64)], color: &str, class: &str, id: &str) {
    let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let _ = writeln!(
        out,
        r#"<polyline class="{class}" data-lane="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
        escape(id),
        coords.join(" ")
    );
}

fn panel(
    out: &mut String,
    x0: f64,
    title: &str,
    series: &[(&Lane3D, &str, &str)],
    project: fn(&crate::model::Point3D) -> (f64, f64),
) {
    let bounds = Bounds::of(series.iter().flat_map(|(l, _, _)| l.points.iter().map(project)));
    let _ = writeln!(
        out,
        r##"<rect x="{x0}" y="0" width="{PANEL_W}" height="{PANEL_H}" fill="white" stroke="#888"/>"##
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" font-size="12" text-anchor="middle">{}</text>"#,
        x0 + PANEL_W / 2.0,
        escape(title)
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="10">{:.1} .. {:.1}</text>"#,
        x0 + MARGIN,
        PANEL_H - 10.0,
        bounds.lo.0,
        bounds.hi.0
    );
    for (lane, color, class) in series {
        let pts: Vec<(f64, f64)> = lane.points.iter().map(|p| bounds.map(project(p), x0)).collect();
        polyline(out, &pts, color, class, &lane.id);
    }
}

/// Overlay of a GT scene and an optional prediction of the same frame.
pub fn scene_svg(gt: &Scene, pred: Option<&Scene>) -> String {
    let mut series: Vec<(&Lane3D, &str, &str)> = gt.lanes.iter().map(|l| (l, GT_COLOR, "gt")).collect();
    if let Some(p) = pred {
        series.extend(p.lanes.iter().map(|l| (l, PRED_COLOR, "pred")));
    }
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{}" height="{}" viewBox="0 0 {} {}">"#,
        2.0 * PANEL_W,
        PANEL_H + 20.0,
        2.0 * PANEL_W,
        PANEL_H + 20.0
    );
    let _ = writeln!(out, "<title>{}</title>", escape(&gt.frame_id));
    panel(&mut out, 0.0, "top view (x, y)", &series, |p| (p.x, p.y));
    panel(&mut out, PANEL_W, "height (y, z)", &series, |p| (p.y, p.z));
    let _ = writeln!(
        out,
        r#"<text x="10" y="{}" font-size="11"><tspan fill="{GT_COLOR}">ground truth</tspan> <tspan fill="{PRED_COLOR}">prediction</tspan></text>"#,
        PANEL_H + 15.0
    );
    out.push_str("</svg>\n");
    out
}

/// Bar chart of the headline numbers of a report.
pub fn report_svg(report: &EvalReport, title: &str) -> String {
    let bars = [
        ("F", report.f_score),
        ("AP", report.ap),
        ("x near", report.x_err_near),
        ("x far", report.x_err_far),
        ("z near", report.z_err_near),
        ("z far", report.z_err_far),
    ];
    let max = bars.iter().map(|b| b.1).fold(1.0, f64::max);
    let (w, h, bw) = (480.0, 300.0, 60.0);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
    let _ = writeln!(out, "<title>{}</title>", escape(title));
    let base = h - 40.0;
    for (k, (label, value)) in bars.iter().enumerate() {
        let x = 20.0 + k as f64 * (bw + 15.0);
        let bh = (value / max) * (base - 30.0);
        let color = if k < 2 { GT_COLOR } else { PRED_COLOR };
        let _ = writeln!(
            out,
            r#"<rect class="bar" x="{x:.1}" y="{:.2}" width="{bw}" height="{bh:.2}" fill="{color}"/>"#,
            base - bh
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{}" font-size="11" text-anchor="middle">{}</text>"#,
            x + bw / 2.0,
            base + 15.0,
            escape(label)
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.2}" font-size="10" text-anchor="middle">{value:.4}</text>"#,
            x + bw / 2.0,
            base - bh - 4.0
        );
    }
    out.push_str("</svg>\n");
    out
}
