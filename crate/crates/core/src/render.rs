//! SVG snapshot strips of a recorded trajectory.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::planner::PenaltyConfig;
use crate::primitives::NUM_JOINTS;
use crate::sim::{
    contact_decision, ee_derivatives, ee_normal, forward_kinematics, landing_distance, Contact,
    Phase, SimConfig, TrajectoryRow,
};

const SCALE: f64 = 400.0;
const MARGIN: f64 = 20.0;

/// Landing x (relative to the base) implied by a recorded trajectory, or
/// `None` if the object stays in the bowl or is released below the floor.
///
/// Uses the recorded landing if the object lands within the recording,
/// otherwise re-derives the release from the first ballistic row (or from
/// the final pose during the hold) and solves the ballistic flight.
pub fn landing_marker(rows: &[TrajectoryRow], sim: &SimConfig) -> Result<Option<f64>> {
    let base_x = sim.base_position[0];
    if let Some(r) = rows.iter().find(|r| r.phase == Phase::Landed) {
        return Ok(Some(r.object[0] - base_x));
    }
    let release = if let Some(k) = rows.iter().position(|r| r.phase == Phase::Ballistic) {
        if rows.len() < 4 {
            return Err(Error::format("trajectory csv", "too few rows to differentiate"));
        }
        let dt = (rows[rows.len() - 1].t - rows[0].t) / (rows.len() - 1) as f64;
        let points: Vec<_> = rows.iter().map(|r| forward_kinematics(&r.angles, sim)).collect();
        let (vel, _) = ee_derivatives(&points, k, rows.len(), dt);
        Some((points[k][NUM_JOINTS], vel))
    } else {
        rows.last().and_then(|last| {
            let n = ee_normal(&last.angles, sim);
            (sim.hold_duration >= sim.dt && contact_decision(n, [0.0, 0.0], sim.gravity) == Contact::Release)
                .then(|| (forward_kinematics(&last.angles, sim)[NUM_JOINTS], [0.0, 0.0]))
        })
    };
    Ok(release.and_then(|(p, v)| landing_distance(p, v, sim).ok().map(|x| x - base_x)))
}

/// Overlaid arm poses every `frame_interval` seconds with the object,
/// workspace limit lines and the landing marker.
pub fn render_svg(
    rows: &[TrajectoryRow],
    sim: &SimConfig,
    penalty: &PenaltyConfig,
    frame_interval: f64,
) -> Result<String> {
    if rows.is_empty() {
        return Err(Error::format("trajectory csv", "no rows"));
    }
    if !(frame_interval > 0.0) {
        return Err(Error::InvalidConfig("frame interval must be positive".into()));
    }
    let landing = landing_marker(rows, sim)?;
    let [bx, by] = sim.base_position;
    let reach = sim.reach();
    let mut x_lo = (bx - reach).min(bx + penalty.behind_limit) - 0.1;
    let mut x_hi = (bx + reach).max(bx + 1.5);
    for r in rows {
        x_lo = x_lo.min(r.object[0] - 0.05);
        x_hi = x_hi.max(r.object[0] + 0.05);
    }
    if let Some(l) = landing {
        x_hi = x_hi.max(bx + l + 0.1);
        x_lo = x_lo.min(bx + l - 0.1);
    }
    let y_lo = sim.floor_y - 0.05;
    let y_hi = (by + reach).max(rows.iter().map(|r| r.object[1]).fold(f64::MIN, f64::max)) + 0.05;
    let width = (x_hi - x_lo) * SCALE + 2.0 * MARGIN;
    let height = (y_hi - y_lo) * SCALE + 2.0 * MARGIN;
    let px = |x: f64| MARGIN + (x - x_lo) * SCALE;
    let py = |y: f64| MARGIN + (y_hi - y) * SCALE;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.1}" height="{height:.1}" viewBox="0 0 {width:.1} {height:.1}">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let hline = |s: &mut String, y: f64, id: &str, style: &str| {
        let _ = writeln!(
            s,
            r#"<line id="{id}" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" {style}/>"#,
            px(x_lo),
            py(y),
            px(x_hi),
            py(y)
        );
    };
    let vline = |s: &mut String, x: f64, id: &str| {
        let _ = writeln!(
            s,
            r#"<line id="{id}" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="gray" stroke-dasharray="6 4"/>"#,
            px(x),
            py(y_lo),
            px(x),
            py(y_hi)
        );
    };
    hline(&mut s, sim.floor_y, "floor", r#"stroke="black" stroke-width="2""#);
    hline(
        &mut s,
        sim.floor_y + penalty.floor_clearance,
        "floor-clearance",
        r#"stroke="gray" stroke-dasharray="6 4""#,
    );
    vline(&mut s, bx + penalty.behind_limit, "behind-limit");
    vline(&mut s, bx + penalty.front_limit, "front-limit");

    let t0 = rows[0].t;
    let t_end = rows[rows.len() - 1].t;
    let frames = ((t_end - t0) / frame_interval + 1e-9).floor() as usize + 1;
    for f in 0..frames {
        let t = t0 + f as f64 * frame_interval;
        let k = rows
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1.t - t).abs().total_cmp(&(b.1.t - t).abs()))
            .map(|(k, _)| k)
            .unwrap();
        let r = &rows[k];
        let opacity = 0.25 + 0.75 * (f as f64 + 1.0) / frames as f64;
        let pts = forward_kinematics(&r.angles, sim);
        let path: Vec<String> = pts.iter().map(|p| format!("{:.2},{:.2}", px(p[0]), py(p[1]))).collect();
        let _ = writeln!(
            s,
            r#"<polyline class="arm" data-t="{:.3}" points="{}" fill="none" stroke="steelblue" stroke-width="3" stroke-opacity="{opacity:.3}"/>"#,
            r.t,
            path.join(" ")
        );
        let _ = writeln!(
            s,
            r#"<circle class="object" cx="{:.2}" cy="{:.2}" r="4" fill="darkorange" fill-opacity="{opacity:.3}"/>"#,
            px(r.object[0]),
            py(r.object[1])
        );
    }
    if let Some(l) = landing {
        let (x, y) = (px(bx + l), py(sim.floor_y));
        let _ = writeln!(
            s,
            r#"<path id="landing" data-x="{l:.6}" d="M {:.2} {:.2} L {:.2} {:.2} L {:.2} {:.2} Z" fill="crimson"/>"#,
            x,
            y,
            x - 6.0,
            y + 12.0,
            x + 6.0,
            y + 12.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}
