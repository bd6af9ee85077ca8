//! Fixed-heading slice overlays: tube cells filled, learned-constraint
//! cells outlined, failure disk drawn on top.

use std::fmt::Write as _;

use reachkit::grid::{BoolMask, Grid3, State};
use reachkit::reachability::Obstacle;

const PIXELS: f64 = 480.0;

pub struct Layer<'a> {
    pub mask: &'a BoolMask,
    pub fill: &'a str,
    pub stroke: &'a str,
}

pub fn slice_svg(grid: &Grid3, theta: f64, obstacle: &Obstacle, layers: &[Layer]) -> String {
    let [ax, ay, _] = &grid.axes;
    let [hx, hy, _] = grid.spacing();
    let (x0, x1) = (ax.lo - hx / 2.0, ax.hi + hx / 2.0);
    let (y0, y1) = (ay.lo - hy / 2.0, ay.hi + hy / 2.0);
    let scale = PIXELS / (x1 - x0).max(y1 - y0);
    let px = |x: f64| (x - x0) * scale;
    let py = |y: f64| (y1 - y) * scale;
    let k = grid.axes[2].nearest(theta);

    let mut s = String::new();
    let (w, h) = ((x1 - x0) * scale, (y1 - y0) * scale);
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.1}" height="{h:.1}" viewBox="0 0 {w:.1} {h:.1}">"#);
    let _ = writeln!(s, r#"<title>theta = {:.4}</title>"#, grid.axes[2].coord(k));
    let _ = writeln!(s, r##"<rect x="0" y="0" width="{w:.1}" height="{h:.1}" fill="#ffffff"/>"##);
    for layer in layers {
        let _ = writeln!(s, r#"<g fill="{}" stroke="{}" stroke-width="1">"#, layer.fill, layer.stroke);
        for i in 0..ax.count {
            for j in 0..ay.count {
                if layer.mask.get(grid.flat(i, j, k)) {
                    let c: State = grid.center(grid.flat(i, j, k));
                    let _ = writeln!(
                        s,
                        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}"/>"#,
                        px(c.x - hx / 2.0),
                        py(c.y + hy / 2.0),
                        hx * scale,
                        hy * scale
                    );
                }
            }
        }
        let _ = writeln!(s, "</g>");
    }
    let _ = writeln!(
        s,
        r##"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="none" stroke="#000000" stroke-width="2"/>"##,
        px(obstacle.center[0]),
        py(obstacle.center[1]),
        obstacle.radius * scale
    );
    s.push_str("</svg>\n");
    s
}

/// File-name-safe rendering of a heading, e.g. `m1.5708`.
pub fn slice_name(prefix: &str, theta: f64) -> String {
    let t = format!("{:.4}", theta.abs());
    if theta < 0.0 {
        format!("{prefix}_m{t}.svg")
    } else {
        format!("{prefix}_{t}.svg")
    }
}
