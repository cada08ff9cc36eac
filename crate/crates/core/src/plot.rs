//! Static SVG rendering of trajectory logs: an isometric 3D path, position
//! against time, and inputs against time. No external plotting dependency;
//! the output is plain vector markup.

use std::fs;
use std::path::Path;

use nalgebra::Vector3;

use crate::cost::BoxObstacle;
use crate::sim::TrajectoryLog;
use crate::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 52.0;
const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

struct Series<'a> {
    label: &'a str,
    points: Vec<(f64, f64)>,
}

fn bounds(series: &[Series]) -> (f64, f64, f64, f64) {
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for s in series {
        for &(x, y) in &s.points {
            x_min = x_min.min(x);
            x_max = x_max.max(x);
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        }
    }
    if !x_min.is_finite() {
        return (0.0, 1.0, 0.0, 1.0);
    }
    if x_max == x_min {
        x_max = x_min + 1.0;
    }
    if y_max == y_min {
        y_max = y_min + 1.0;
    }
    (x_min, x_max, y_min, y_max)
}

fn polyline(points: &[(f64, f64)], bounds: (f64, f64, f64, f64), color: &str) -> String {
    let (x_min, x_max, y_min, y_max) = bounds;
    let coords: Vec<String> = points
        .iter()
        .map(|&(x, y)| {
            let sx = MARGIN + (x - x_min) / (x_max - x_min) * (WIDTH - 2.0 * MARGIN);
            let sy = HEIGHT - MARGIN - (y - y_min) / (y_max - y_min) * (HEIGHT - 2.0 * MARGIN);
            format!("{sx:.2},{sy:.2}")
        })
        .collect();
    format!(
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.2\" points=\"{}\"/>\n",
        coords.join(" ")
    )
}

fn chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let b = bounds(series);
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    ));
    // axes
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b0}\" x2=\"{r}\" y2=\"{b0}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b0}\" stroke=\"black\"/>\n",
        m = MARGIN,
        r = WIDTH - MARGIN,
        t = MARGIN,
        b0 = HEIGHT - MARGIN
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"14\">{title}</text>\n",
        WIDTH / 2.0
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"11\">{x_label}</text>\n",
        WIDTH / 2.0,
        HEIGHT - 12.0
    ));
    svg.push_str(&format!(
        "<text x=\"14\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"11\" transform=\"rotate(-90 14 {y})\">{y_label}</text>\n",
        HEIGHT / 2.0,
        y = HEIGHT / 2.0
    ));
    // min/max tick labels
    let (x_min, x_max, y_min, y_max) = b;
    svg.push_str(&format!(
        "<text x=\"{m}\" y=\"{ty}\" font-family=\"sans-serif\" font-size=\"10\">{x_min:.3}</text>\n\
         <text x=\"{r}\" y=\"{ty}\" text-anchor=\"end\" font-family=\"sans-serif\" \
         font-size=\"10\">{x_max:.3}</text>\n\
         <text x=\"{lx}\" y=\"{b0}\" text-anchor=\"end\" font-family=\"sans-serif\" \
         font-size=\"10\">{y_min:.3}</text>\n\
         <text x=\"{lx}\" y=\"{t}\" text-anchor=\"end\" font-family=\"sans-serif\" \
         font-size=\"10\">{y_max:.3}</text>\n",
        m = MARGIN,
        r = WIDTH - MARGIN,
        ty = HEIGHT - MARGIN + 16.0,
        lx = MARGIN - 6.0,
        b0 = HEIGHT - MARGIN,
        t = MARGIN + 4.0
    ));
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        svg.push_str(&polyline(&s.points, b, color));
        svg.push_str(&format!(
            "<text x=\"{x}\" y=\"{y}\" font-family=\"sans-serif\" font-size=\"11\" \
             fill=\"{color}\">{}</text>\n",
            s.label,
            x = WIDTH - MARGIN + 4.0,
            y = MARGIN + 14.0 * i as f64
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Isometric projection used for the 3D path plot.
fn project(p: &Vector3<f64>) -> (f64, f64) {
    let c = 3.0f64.sqrt() / 2.0;
    ((p.x - p.y) * c, (p.x + p.y) * 0.5 + p.z)
}

fn box_edges(obstacle: &BoxObstacle) -> Vec<[Vector3<f64>; 2]> {
    let c = obstacle.center;
    let h = obstacle.half_extents;
    let corner = |sx: f64, sy: f64, sz: f64| c + Vector3::new(sx * h.x, sy * h.y, sz * h.z);
    let signs = [-1.0, 1.0];
    let mut edges = Vec::with_capacity(12);
    for &a in &signs {
        for &b in &signs {
            edges.push([corner(-1.0, a, b), corner(1.0, a, b)]);
            edges.push([corner(a, -1.0, b), corner(a, 1.0, b)]);
            edges.push([corner(a, b, -1.0), corner(a, b, 1.0)]);
        }
    }
    edges
}

fn trajectory_3d_svg(log: &TrajectoryLog, obstacles: &[BoxObstacle]) -> String {
    let path: Vec<(f64, f64)> = log.steps.iter().map(|r| project(&r.state.position)).collect();
    let mut series = vec![Series {
        label: "path",
        points: path,
    }];
    let edges: Vec<Vec<(f64, f64)>> = obstacles
        .iter()
        .flat_map(|o| {
            box_edges(o)
                .into_iter()
                .map(|[a, b]| vec![project(&a), project(&b)])
        })
        .collect();
    for e in &edges {
        series.push(Series {
            label: "",
            points: e.clone(),
        });
    }
    let b = bounds(&series);
    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"22\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"14\">Position, isometric projection</text>\n",
        WIDTH / 2.0
    ));
    svg.push_str(&polyline(&series[0].points, b, PALETTE[0]));
    for e in &edges {
        svg.push_str(&polyline(e, b, "#d62728"));
    }
    svg.push_str("</svg>\n");
    svg
}

/// Write the three standard plots (`trajectory_3d.svg`, `position.svg`,
/// `inputs.svg`) into `out_dir`.
pub fn export_plots(log: &TrajectoryLog, obstacles: &[BoxObstacle], out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let write = |name: &str, content: String| -> Result<()> {
        let path = out_dir.join(name);
        fs::write(&path, content).map_err(|e| Error::io(path, e))
    };

    write("trajectory_3d.svg", trajectory_3d_svg(log, obstacles))?;

    let axis = |f: fn(&crate::sim::StepRecord) -> f64| -> Vec<(f64, f64)> {
        log.steps.iter().map(|r| (r.t, f(r))).collect()
    };
    write(
        "position.svg",
        chart(
            "Position vs time",
            "t [s]",
            "position [m]",
            &[
                Series { label: "x", points: axis(|r| r.state.position.x) },
                Series { label: "y", points: axis(|r| r.state.position.y) },
                Series { label: "z", points: axis(|r| r.state.position.z) },
            ],
        ),
    )?;
    write(
        "inputs.svg",
        chart(
            "Applied inputs vs time",
            "t [s]",
            "input",
            &[
                Series { label: "thrust [N]", points: axis(|r| r.applied_input.thrust) },
                Series { label: "tx [N·m]", points: axis(|r| r.applied_input.torque.x) },
                Series { label: "ty [N·m]", points: axis(|r| r.applied_input.torque.y) },
                Series { label: "tz [N·m]", points: axis(|r| r.applied_input.torque.z) },
            ],
        ),
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_three_svg_files() {
        let dir = tempfile::tempdir().unwrap();
        let log = TrajectoryLog::default();
        export_plots(&log, &[], dir.path()).unwrap();
        for name in ["trajectory_3d.svg", "position.svg", "inputs.svg"] {
            let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
            assert!(text.starts_with("<svg"));
            assert!(text.trim_end().ends_with("</svg>"));
        }
    }
}
