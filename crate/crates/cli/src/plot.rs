//! Static SVG rendering of a trace over the scenario geometry.

use std::fmt::Write;

use ftdnav::sim::{Metrics, ScenarioConfig, SimTrace};

const WIDTH: f64 = 800.0;
const MARGIN: f64 = 30.0;

struct View {
    x0: f64,
    y1: f64,
    scale: f64,
    height: f64,
}

impl View {
    fn fit(xs: &[f64], ys: &[f64]) -> Self {
        let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
        let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (x0, x1) = (min(xs) - 0.5, max(xs) + 0.5);
        let (y0, y1) = (min(ys) - 0.5, max(ys) + 0.5);
        let scale = (WIDTH - 2.0 * MARGIN) / (x1 - x0).max(1e-6);
        let height = (y1 - y0) * scale + 2.0 * MARGIN;
        Self { x0, y1, scale, height }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) * self.scale
    }

    fn py(&self, y: f64) -> f64 {
        MARGIN + (self.y1 - y) * self.scale
    }
}

/// Deterministic SVG: fixed-precision coordinates, fixed draw order.
pub fn render(trace: &SimTrace, scenario: Option<&ScenarioConfig>, metrics: &Metrics) -> String {
    let world = scenario.map(|s| s.build_world());
    let mut xs: Vec<f64> = trace.rows.iter().map(|r| r.x).collect();
    let mut ys: Vec<f64> = trace.rows.iter().map(|r| r.y).collect();
    if let Some(w) = &world {
        for b in w.boxes() {
            xs.extend([b.min.x, b.max.x]);
            ys.extend([b.min.y, b.max.y]);
        }
    }
    if let Some(s) = scenario {
        xs.push(s.robot.goal[0]);
        ys.push(s.robot.goal[1]);
    }
    let v = View::fit(&xs, &ys);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH:.0}" height="{:.0}" viewBox="0 0 {WIDTH:.0} {:.0}">"#,
        v.height, v.height
    );
    let _ = writeln!(svg, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);

    if let Some(w) = &world {
        let robot_h = scenario.map_or(0.45, |s| s.robot.height);
        for b in w.boxes() {
            // Parts entirely above the robot are drawn hollow.
            let fill = if b.min.z < robot_h { "#7f7f7f" } else { "none" };
            let _ = writeln!(
                svg,
                r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{fill}" stroke="#404040" stroke-width="1"/>"##,
                v.px(b.min.x),
                v.py(b.max.y),
                (b.max.x - b.min.x) * v.scale,
                (b.max.y - b.min.y) * v.scale
            );
        }
        for p in &w.pedestrians {
            let pts: Vec<String> = p
                .waypoints
                .iter()
                .map(|q| format!("{:.2},{:.2}", v.px(q[0]), v.py(q[1])))
                .collect();
            let _ = writeln!(
                svg,
                r##"<polyline points="{}" fill="none" stroke="#d62728" stroke-dasharray="4 3"/>"##,
                pts.join(" ")
            );
        }
    }
    if let Some(s) = scenario {
        let _ = writeln!(
            svg,
            r##"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="none" stroke="#2ca02c" stroke-width="2"/>"##,
            v.px(s.robot.goal[0]),
            v.py(s.robot.goal[1]),
            s.robot.goal_tolerance * v.scale
        );
    }

    let first = &trace.rows[0];
    let moved = trace.rows.iter().any(|r| r.x != first.x || r.y != first.y);
    if moved {
        let pts: Vec<String> = trace
            .rows
            .iter()
            .map(|r| format!("{:.2},{:.2}", v.px(r.x), v.py(r.y)))
            .collect();
        let _ = writeln!(
            svg,
            r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
            pts.join(" ")
        );
    } else {
        let _ = writeln!(
            svg,
            r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="#1f77b4"/>"##,
            v.px(first.x),
            v.py(first.y)
        );
    }

    // Risk annotations: ticks where the static risk count grows.
    for w in trace.rows.windows(2) {
        if w[1].static_risks > w[0].static_risks {
            let _ = writeln!(
                svg,
                r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#ff7f0e"><title>{} static risk points</title></circle>"##,
                v.px(w[1].x),
                v.py(w[1].y),
                w[1].static_risks
            );
        }
    }

    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN:.0}" y="18" font-family="monospace" font-size="12">{} path {:.3} m, min clearance {:.3} m</text>"#,
        metrics.outcome.as_str(),
        metrics.path_length,
        metrics.mu_d
    );
    svg.push_str("</svg>\n");
    svg
}
