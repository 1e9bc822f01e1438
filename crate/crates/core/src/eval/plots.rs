//! Deterministic SVG rendering of trajectories over the workspace, plus raw
//! CSV dumps. Byte output depends only on the inputs.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::env::{EnvironmentSpec, RegionRole, Trajectory};

const CANVAS: f64 = 520.0;
const MARGIN: f64 = 30.0;

fn fmt(v: f64) -> String {
    format!("{v:.3}")
}

/// Renders one trajectory: workspace frame, labeled goal regions, hatched
/// obstacles, the trajectory polyline, and start/end markers.
pub fn trajectory_svg(traj: &Trajectory, env: &EnvironmentSpec) -> String {
    let ws = env.workspace;
    let span_x = ws.x[1] - ws.x[0];
    let span_y = ws.y[1] - ws.y[0];
    let scale = (CANVAS - 2.0 * MARGIN) / span_x.max(span_y);
    let sx = |x: f64| MARGIN + (x - ws.x[0]) * scale;
    // SVG y grows downward; flip so the workspace reads north-up.
    let sy = |y: f64| MARGIN + (ws.y[1] - y) * scale;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#,
        w = fmt(CANVAS),
        h = fmt(CANVAS)
    );
    svg.push_str(concat!(
        "<defs><pattern id=\"hatch\" width=\"8\" height=\"8\" ",
        "patternTransform=\"rotate(45)\" patternUnits=\"userSpaceOnUse\">",
        "<line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"8\" stroke=\"#b91c1c\" stroke-width=\"2\"/>",
        "</pattern></defs>\n"
    ));
    let _ = writeln!(
        svg,
        r##"<rect x="{x}" y="{y}" width="{w}" height="{h}" fill="#ffffff" stroke="#374151" stroke-width="1.5"/>"##,
        x = fmt(sx(ws.x[0])),
        y = fmt(sy(ws.y[1])),
        w = fmt(span_x * scale),
        h = fmt(span_y * scale)
    );

    // Regions in name order (BTreeMap) for stable output.
    for (name, region) in &env.regions {
        let r = region.rect();
        let (fill, stroke) = match region.role {
            RegionRole::Goal => ("#dbeafe", "#1d4ed8"),
            RegionRole::Obstacle => ("url(#hatch)", "#b91c1c"),
        };
        let _ = writeln!(
            svg,
            r##"<rect x="{x}" y="{y}" width="{w}" height="{h}" fill="{fill}" stroke="{stroke}" stroke-width="1"/>"##,
            x = fmt(sx(r.x[0])),
            y = fmt(sy(r.y[1])),
            w = fmt((r.x[1] - r.x[0]) * scale),
            h = fmt((r.y[1] - r.y[0]) * scale),
        );
        let c = r.center();
        let _ = writeln!(
            svg,
            r##"<text x="{x}" y="{y}" font-family="monospace" font-size="14" text-anchor="middle" fill="#111827">{name}</text>"##,
            x = fmt(sx(c.0)),
            y = fmt(sy(c.1) + 5.0),
        );
    }

    if !traj.states.is_empty() {
        let points: Vec<String> =
            traj.states.iter().map(|s| format!("{},{}", fmt(sx(s.px)), fmt(sy(s.py)))).collect();
        let _ = writeln!(
            svg,
            r##"<polyline points="{}" fill="none" stroke="#047857" stroke-width="2"/>"##,
            points.join(" ")
        );
        let start = &traj.states[0];
        let end = traj.states.last().unwrap();
        let _ = writeln!(
            svg,
            r##"<circle cx="{x}" cy="{y}" r="5" fill="#047857"/>"##,
            x = fmt(sx(start.px)),
            y = fmt(sy(start.py)),
        );
        let _ = writeln!(
            svg,
            r##"<rect x="{x}" y="{y}" width="8" height="8" fill="#7c2d12"/>"##,
            x = fmt(sx(end.px) - 4.0),
            y = fmt(sy(end.py) - 4.0),
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Raw values: `t,px,py,vx,vy,ax,ay` (actions blank on the final row).
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::from("t,px,py,vx,vy,ax,ay\n");
    for (t, s) in traj.states.iter().enumerate() {
        let action = traj
            .actions
            .get(t)
            .map(|a| format!("{},{}", a.ax, a.ay))
            .unwrap_or_else(|| ",".to_string());
        let _ = writeln!(out, "{t},{},{},{},{},{action}", s.px, s.py, s.vx, s.vy);
    }
    out
}

/// One SVG + CSV pair per trajectory. An empty list succeeds with no files.
pub fn export_plots(
    trajectories: &[Trajectory],
    env: &EnvironmentSpec,
    out_dir: &Path,
) -> std::io::Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    if trajectories.is_empty() {
        return Ok(written);
    }
    std::fs::create_dir_all(out_dir)?;
    for (i, traj) in trajectories.iter().enumerate() {
        let stem = if traj.spec_id.is_empty() {
            format!("traj_{i:04}")
        } else {
            format!("{}_{i:04}", traj.spec_id)
        };
        let svg_path = out_dir.join(format!("{stem}.svg"));
        std::fs::write(&svg_path, trajectory_svg(traj, env))?;
        let csv_path = out_dir.join(format!("{stem}.csv"));
        std::fs::write(&csv_path, trajectory_csv(traj))?;
        written.push(svg_path);
        written.push(csv_path);
    }
    Ok(written)
}
