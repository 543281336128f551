//! Hand-written SVG figures: top-down plan views and line charts.

use std::fmt::Write;

use crate::geometry::Point2;
use crate::simworld::{Episode, OrientedRect, CLASS_PEDESTRIAN, CLASS_VEHICLE, EGO_LENGTH, EGO_WIDTH};
use crate::worldmodel::PlanResult;

const SIZE: f64 = 600.0;
/// Meters visible behind and ahead of the ego vehicle.
const BEHIND_M: f64 = 10.0;
const AHEAD_M: f64 = 50.0;

struct View {
    scale: f64,
}

impl View {
    /// Ego frame (x forward, y left) to screen (forward up).
    fn px(&self, p: Point2) -> (f64, f64) {
        (SIZE / 2.0 - p[1] * self.scale, SIZE - (p[0] + BEHIND_M) * self.scale)
    }

    fn path(&self, pts: &[Point2]) -> String {
        pts.iter()
            .map(|&p| {
                let (x, y) = self.px(p);
                format!("{x:.2},{y:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn centreline(curvature: f64, s: f64) -> (Point2, f64) {
    if curvature.abs() < 1e-12 {
        ([s, 0.0], 0.0)
    } else {
        let h = curvature * s;
        ([h.sin() / curvature, (1.0 - h.cos()) / curvature], h)
    }
}

fn polyline(out: &mut String, view: &View, pts: &[Point2], stroke: &str, width: f64, extra: &str) {
    let _ = writeln!(
        out,
        r#"<polyline points="{}" fill="none" stroke="{stroke}" stroke-width="{width}" {extra}/>"#,
        view.path(pts)
    );
}

fn rect(out: &mut String, view: &View, r: &OrientedRect, fill: &str, extra: &str) {
    let c = r.corners();
    let _ = writeln!(out, r#"<polygon points="{}" fill="{fill}" {extra}/>"#, view.path(&c));
}

/// Top-down view in the ego frame of frame `t`: road, obstacles at `t`,
/// expert trajectory, every candidate and the selected one.
pub fn plan_svg(episode: &Episode, t: usize, plan: &PlanResult) -> String {
    let view = View { scale: SIZE / (BEHIND_M + AHEAD_M) };
    let time = t as f64 * episode.dt;
    let pose = episode.profile.pose_at(time);
    let road = &episode.scene.road;
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#);
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="#eef0e8"/>"##);

    let s0 = pose.x.hypot(pose.y).max(0.0);
    let arc = if episode.profile.speed > 0.0 { episode.profile.speed * time } else { s0 };
    let mut left = Vec::new();
    let mut right = Vec::new();
    let mut s = arc - 2.0 * BEHIND_M;
    while s <= arc + 2.0 * AHEAD_M {
        let (c, h) = centreline(road.curvature, s);
        let n = [-h.sin(), h.cos()];
        let w = road.width / 2.0;
        left.push(pose.to_local([c[0] + n[0] * w, c[1] + n[1] * w]));
        right.push(pose.to_local([c[0] - n[0] * w, c[1] - n[1] * w]));
        s += 1.0;
    }
    let mut area = left.clone();
    area.extend(right.iter().rev());
    let _ = writeln!(out, r##"<polygon points="{}" fill="#9a9a9a"/>"##, view.path(&area));
    polyline(&mut out, &view, &left, "white", 2.0, "");
    polyline(&mut out, &view, &right, "white", 2.0, "");

    for o in &episode.scene.obstacles {
        let r = o.at(time);
        let local = OrientedRect { center: pose.to_local(r.center), heading: r.heading - pose.heading, ..r };
        let fill = match o.class_id {
            CLASS_VEHICLE => "#3060c0",
            CLASS_PEDESTRIAN => "#d07020",
            _ => "#704030",
        };
        rect(&mut out, &view, &local, fill, r#"stroke="black" stroke-width="0.5""#);
    }
    let ego = OrientedRect { center: [0.0, 0.0], length: EGO_LENGTH, width: EGO_WIDTH, heading: 0.0 };
    rect(&mut out, &view, &ego, "#20a040", r#"stroke="black" stroke-width="0.5""#);

    let with_origin = |p: &[Point2]| std::iter::once([0.0, 0.0]).chain(p.iter().copied()).collect::<Vec<_>>();
    for (k, c) in plan.candidates.iter().enumerate() {
        if k != plan.j {
            polyline(&mut out, &view, &with_origin(c), "#505050", 1.5, r#"stroke-dasharray="4 3""#);
        }
    }
    polyline(&mut out, &view, &with_origin(&episode.frames[t].expert_points()), "#10a010", 3.0, "");
    polyline(&mut out, &view, &with_origin(&plan.trajectory), "#d02020", 3.0, "");
    for p in &plan.trajectory {
        let (x, y) = view.px(*p);
        let _ = writeln!(out, r##"<circle cx="{x:.2}" cy="{y:.2}" r="3" fill="#d02020"/>"##);
    }
    let _ = writeln!(
        out,
        r#"<text x="10" y="20" font-family="monospace" font-size="13">frame {t} {} j={} score={:.3}</text>"#,
        plan.command.name(),
        plan.j,
        plan.scores.get(plan.j).copied().unwrap_or(f64::NAN)
    );
    out.push_str("</svg>\n");
    out
}

const PALETTE: [&str; 6] = ["#d02020", "#2050c0", "#20a040", "#c08000", "#8030a0", "#208080"];

/// Line chart of named `(x, y)` series.
pub fn line_chart_svg(title: &str, x_label: &str, series: &[(String, Vec<(f64, f64)>)], log_y: bool) -> String {
    let (w, h) = (720.0, 420.0);
    let (ml, mr, mt, mb) = (70.0, 150.0, 30.0, 45.0);
    let ty = |v: f64| if log_y { v.max(1e-12).log10() } else { v };
    let pts = series.iter().flat_map(|(_, s)| s.iter()).filter(|(x, y)| x.is_finite() && ty(*y).is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(ty(y));
        y1 = y1.max(ty(y));
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| ml + (x - x0) / (x1 - x0) * (w - ml - mr);
    let sy = |y: f64| mt + (1.0 - (ty(y) - y0) / (y1 - y0)) * (h - mt - mb);
    let mut out = String::new();
    let _ = writeln!(out, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#);
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<rect x="{ml}" y="{mt}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        w - ml - mr,
        h - mt - mb
    );
    let _ = writeln!(out, r#"<text x="{ml}" y="20" font-family="sans-serif" font-size="14">{title}</text>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">{x_label}</text>"#,
        (ml + w - mr) / 2.0,
        h - 8.0
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let yv = y0 + f * (y1 - y0);
        let py = mt + (1.0 - f) * (h - mt - mb);
        let label = if log_y { format!("{:.3e}", 10f64.powf(yv)) } else { format!("{yv:.3}") };
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{py:.1}" font-family="sans-serif" font-size="11" text-anchor="end">{label}</text>"#,
            ml - 4.0
        );
        let xv = x0 + f * (x1 - x0);
        let px = ml + f * (w - ml - mr);
        let _ = writeln!(
            out,
            r#"<text x="{px:.1}" y="{}" font-family="sans-serif" font-size="11" text-anchor="middle">{xv:.0}</text>"#,
            h - mb + 14.0
        );
    }
    for (i, (name, s)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<String> = s
            .iter()
            .filter(|(x, y)| x.is_finite() && ty(*y).is_finite())
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            pts.join(" ")
        );
        let ly = mt + 16.0 * (i as f64 + 1.0);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{ly}" font-family="sans-serif" font-size="12" fill="{color}">{name}</text>"#,
            w - mr + 10.0
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Exponential moving average, for smoothing noisy loss curves.
pub fn smooth(values: &[(f64, f64)], alpha: f64) -> Vec<(f64, f64)> {
    let mut acc = None;
    values
        .iter()
        .map(|&(x, y)| {
            let v = match acc {
                None => y,
                Some(a) => alpha * y + (1.0 - alpha) * a,
            };
            acc = Some(v);
            (x, v)
        })
        .collect()
}
