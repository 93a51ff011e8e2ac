//! Oblique 3D scatter of toy trajectories: the latent plane is drawn in
//! perspective and `t` runs vertically, data (`t = 1`) on top and the prior
//! (`t = 0`) below.

use std::fmt::Write;

use crate::data::toy::{nearest_center, CENTERS, HALF_WIDTH};
use crate::transport::{Phase, Trajectory};

pub const CLASS_COLORS: [&str; 4] = ["#1f77b4", "#e0a800", "#2ca02c", "#d62728"];

const WIDTH: f64 = 520.0;
const HEIGHT: f64 = 560.0;
const SCALE: f64 = 300.0;
const SHEAR: f64 = 0.45;
const DEPTH: f64 = 0.35;
const T_SPAN: f64 = 300.0;
/// Screen-space margin for points that leave the `[-0.5, 0.5]²` frame.
const LIMIT: f64 = 0.75;

fn project(x: f64, y: f64, t: f64) -> (f64, f64) {
    let (x, y) = (x.clamp(-LIMIT, LIMIT), y.clamp(-LIMIT, LIMIT));
    let sx = WIDTH / 2.0 + SCALE * (x + SHEAR * y);
    let sy = HEIGHT - 80.0 - SCALE * DEPTH * y - T_SPAN * t;
    (sx, sy)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn polygon(out: &mut String, corners: &[(f64, f64)], t: f64, style: &str) {
    let pts: Vec<String> = corners
        .iter()
        .map(|&(x, y)| {
            let (sx, sy) = project(x, y, t);
            format!("{sx:.2},{sy:.2}")
        })
        .collect();
    let _ = writeln!(out, r#"<polygon points="{}" {style}/>"#, pts.join(" "));
}

fn entry_class(label: Option<usize>, z: &[f64]) -> usize {
    label.filter(|&c| c < CENTERS.len()).unwrap_or_else(|| nearest_center(z))
}

/// Renders one panel. Sources are hollow circles, lifted and landed points
/// are filled; consecutive entries of a trajectory are joined by a dashed
/// line.
pub fn panel_svg(title: &str, trajectories: &[Trajectory]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let frame = [(-0.5, -0.5), (0.5, -0.5), (0.5, 0.5), (-0.5, 0.5)];
    for (t, name) in [(0.0, "t = 0"), (1.0, "t = 1")] {
        polygon(&mut out, &frame, t, r##"fill="none" stroke="#999" stroke-width="1""##);
        let (lx, ly) = project(0.5, -0.5, t);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="12">{name}</text>"#,
            lx + 6.0,
            ly
        );
    }
    for (c, ctr) in CENTERS.iter().enumerate() {
        let sq: Vec<(f64, f64)> = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)]
            .iter()
            .map(|&(dx, dy)| (ctr[0] + dx * HALF_WIDTH, ctr[1] + dy * HALF_WIDTH))
            .collect();
        polygon(&mut out, &sq, 1.0, &format!(r#"fill="{}" fill-opacity="0.12" stroke="none""#, CLASS_COLORS[c]));
    }
    for traj in trajectories {
        let pts: Vec<(f64, f64)> = traj
            .entries
            .iter()
            .filter(|e| e.z.len() >= 2 && e.phase != Phase::Pending)
            .map(|e| project(e.z[0], e.z[1], e.t))
            .collect();
        if pts.len() > 1 {
            let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
            let _ = writeln!(
                out,
                r##"<polyline points="{}" fill="none" stroke="#666" stroke-width="0.8" stroke-dasharray="3,3"/>"##,
                path.join(" ")
            );
        }
        for e in traj.entries.iter().filter(|e| e.z.len() >= 2) {
            let (sx, sy) = project(e.z[0], e.z[1], e.t);
            let color = CLASS_COLORS[entry_class(e.label, &e.z)];
            let _ = match e.phase {
                Phase::Source => writeln!(
                    out,
                    r#"<circle cx="{sx:.2}" cy="{sy:.2}" r="5" fill="none" stroke="{color}" stroke-width="2"/>"#
                ),
                Phase::Lift | Phase::Land => writeln!(
                    out,
                    r#"<circle cx="{sx:.2}" cy="{sy:.2}" r="3.5" fill="{color}" stroke="black" stroke-width="0.4"/>"#
                ),
                Phase::Pending => Ok(()),
            };
        }
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::TrajectoryEntry;

    #[test]
    fn points_are_drawn_per_phase() {
        let traj = Trajectory {
            entries: vec![
                TrajectoryEntry {
                    leap: 0,
                    phase: Phase::Source,
                    t: 1.0,
                    z: vec![-0.2, -0.2],
                    label: Some(0),
                    wall_ms: 0,
                },
                TrajectoryEntry {
                    leap: 0,
                    phase: Phase::Land,
                    t: 1.0,
                    z: vec![0.2, 0.2],
                    label: None,
                    wall_ms: 0,
                },
            ],
            final_label: None,
            stopped_early: false,
        };
        let svg = panel_svg("a < b", &[traj]);
        assert!(svg.contains("a &lt; b"));
        assert_eq!(svg.matches(r##"fill="none" stroke="#1f77b4""##).count(), 1);
        assert_eq!(svg.matches(r##"fill="#d62728" stroke="black""##).count(), 1);
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn data_plane_sits_above_the_prior() {
        assert!(project(0.0, 0.0, 1.0).1 < project(0.0, 0.0, 0.0).1);
        assert_eq!(project(0.0, 0.0, 0.0).0, WIDTH / 2.0);
    }
}
