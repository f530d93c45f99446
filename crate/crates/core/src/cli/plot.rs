//! SVG figures and ball-geometry CSV for 2-D results.

use std::fmt::Write as _;

use crate::backreach::BackreachResult;
use crate::geometry::{Norm, NormBall, Polytope};

const SIZE: f64 = 640.0;
const MARGIN: f64 = 56.0;

#[derive(Clone, Debug, Default)]
pub struct PlotSpec {
    /// Steps to draw; all when empty.
    pub steps: Vec<usize>,
    pub xlim: Option<(f64, f64)>,
    pub ylim: Option<(f64, f64)>,
    pub start_sets: Vec<(String, Polytope)>,
}

/// Vertices of a bounded 2-D polytope in counter-clockwise order.
pub fn polygon_vertices(p: &Polytope) -> Vec<[f64; 2]> {
    let mut pts: Vec<[f64; 2]> = Vec::new();
    for i in 0..p.rows() {
        for j in i + 1..p.rows() {
            let (a1, a2) = (&p.a[i], &p.a[j]);
            let det = a1[0] * a2[1] - a1[1] * a2[0];
            if det.abs() < 1e-12 {
                continue;
            }
            let x = (p.b[i] * a2[1] - a1[1] * p.b[j]) / det;
            let y = (a1[0] * p.b[j] - p.b[i] * a2[0]) / det;
            let v = [x, y];
            if p.contains(&v, 1e-9 * (1.0 + x.abs() + y.abs()))
                && !pts.iter().any(|q| (q[0] - x).abs() < 1e-9 && (q[1] - y).abs() < 1e-9)
            {
                pts.push(v);
            }
        }
    }
    if pts.is_empty() {
        return pts;
    }
    let cx = pts.iter().map(|v| v[0]).sum::<f64>() / pts.len() as f64;
    let cy = pts.iter().map(|v| v[1]).sum::<f64>() / pts.len() as f64;
    pts.sort_by(|a, b| (a[1] - cy).atan2(a[0] - cx).total_cmp(&(b[1] - cy).atan2(b[0] - cx)));
    pts
}

/// Corners of a ball's outline: a square for `∞`, a diamond for `1`.
pub fn ball_outline(b: &NormBall) -> Vec<[f64; 2]> {
    let (c, r) = (&b.center, b.radius);
    match b.norm {
        Norm::L1 => vec![[c[0] + r, c[1]], [c[0], c[1] + r], [c[0] - r, c[1]], [c[0], c[1] - r]],
        _ => vec![[c[0] - r, c[1] - r], [c[0] + r, c[1] - r], [c[0] + r, c[1] + r], [c[0] - r, c[1] + r]],
    }
}

fn ramp(t: usize, k: usize) -> String {
    let f = if k <= 1 { 0.0 } else { (t - 1) as f64 / (k - 1) as f64 };
    let r = (40.0 + 200.0 * f) as u8;
    let b = (220.0 - 180.0 * f) as u8;
    format!("#{r:02x}50{b:02x}")
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, p: [f64; 2]) -> (f64, f64) {
        let w = SIZE - 2.0 * MARGIN;
        let sx = MARGIN + (p[0] - self.x.0) / (self.x.1 - self.x.0) * w;
        let sy = SIZE - MARGIN - (p[1] - self.y.0) / (self.y.1 - self.y.0) * w;
        (sx, sy)
    }

    fn points(&self, vs: &[[f64; 2]]) -> String {
        vs.iter()
            .map(|&v| {
                let (x, y) = self.px(v);
                format!("{x:.3},{y:.3}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    (0..=5).map(|i| lo + (hi - lo) * i as f64 / 5.0).collect()
}

/// Draws the goal, the selected steps' balls and any start sets.
pub fn render_svg(result: &BackreachResult, spec: &PlotSpec) -> String {
    let d = &result.domain;
    let frame = Frame {
        x: spec.xlim.unwrap_or((d.lo[0], d.hi[0])),
        y: spec.ylim.unwrap_or((d.lo[1], d.hi[1])),
    };
    let k = result.steps.len();
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{SIZE}" height="{SIZE}" fill="white"/>"#);
    let (x0, y0) = frame.px([frame.x.0, frame.y.0]);
    let (x1, y1) = frame.px([frame.x.1, frame.y.1]);
    let _ = writeln!(
        s,
        r#"<g class="axes" stroke="black" fill="none"><rect x="{x0:.3}" y="{y1:.3}" width="{:.3}" height="{:.3}"/></g>"#,
        x1 - x0,
        y0 - y1
    );
    let _ = writeln!(s, r#"<g class="ticks" font-family="sans-serif" font-size="11" fill="black">"#);
    for v in ticks(frame.x.0, frame.x.1) {
        let (x, _) = frame.px([v, frame.y.0]);
        let _ = writeln!(s, r#"<text x="{x:.3}" y="{:.3}" text-anchor="middle">{v:.2}</text>"#, y0 + 16.0);
    }
    for v in ticks(frame.y.0, frame.y.1) {
        let (_, y) = frame.px([frame.x.0, v]);
        let _ = writeln!(s, r#"<text x="{:.3}" y="{:.3}" text-anchor="end">{v:.2}</text>"#, x0 - 6.0, y + 4.0);
    }
    let _ = writeln!(s, "</g>");
    let goal = polygon_vertices(&result.goal);
    let _ = writeln!(
        s,
        r##"<polygon class="goal" points="{}" fill="#7bc96f" fill-opacity="0.6" stroke="#2e7d32"/>"##,
        frame.points(&goal)
    );
    for step in &result.steps {
        if !spec.steps.is_empty() && !spec.steps.contains(&step.t) {
            continue;
        }
        let color = ramp(step.t, k);
        for rec in &step.balls {
            let _ = writeln!(
                s,
                r#"<polygon class="ball" data-t="{}" points="{}" fill="{color}" fill-opacity="0.35" stroke="{color}"/>"#,
                step.t,
                frame.points(&ball_outline(&rec.ball))
            );
        }
    }
    for (name, p) in &spec.start_sets {
        let _ = writeln!(
            s,
            r#"<polygon class="start" data-name="{}" points="{}" fill="none" stroke="black" stroke-dasharray="4 3"/>"#,
            xml_escape(name),
            frame.points(&polygon_vertices(p))
        );
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// One row per ball with its axis-aligned extent.
pub fn balls_csv(result: &BackreachResult) -> String {
    let mut s = String::from("t,center_x,center_y,radius,norm,x_min,x_max,y_min,y_max\n");
    for (t, b) in result.balls() {
        let bb = b.bounding_box();
        let _ = writeln!(
            s,
            "{t},{},{},{},{},{},{},{},{}",
            b.center[0],
            b.center[1],
            b.radius,
            b.norm.as_str(),
            bb.lo[0],
            bb.hi[0],
            bb.lo[1],
            bb.hi[1]
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_vertices() {
        let p = Polytope::from_box(&[0.0, 1.0], &[2.0, 3.0]).unwrap();
        let v = polygon_vertices(&p);
        assert_eq!(v.len(), 4);
        assert!(v.contains(&[0.0, 1.0]) && v.contains(&[2.0, 3.0]));
    }

    #[test]
    fn triangle_vertices_skip_redundant_rows() {
        let p = Polytope::new(
            vec![vec![-1.0, 0.0], vec![0.0, -1.0], vec![1.0, 1.0], vec![1.0, 1.0]],
            vec![0.0, 0.0, 1.0, 2.0],
        )
        .unwrap();
        assert_eq!(polygon_vertices(&p).len(), 3);
    }

    #[test]
    fn diamond_outline() {
        let b = NormBall::new(vec![1.0, 1.0], 0.5, Norm::L1).unwrap();
        assert_eq!(ball_outline(&b)[0], [1.5, 1.0]);
    }
}
