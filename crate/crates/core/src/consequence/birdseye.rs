//! Bird's-eye rendering of instance outcomes: distance and bearing mapped to
//! ground-plane coordinates inside the camera wedge, written as SVG plus a
//! point list.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{ConsequenceReport, Outcome, HALF_FIELD_DEG};
use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 24.0;
const COLOR_A: &str = "#1f77b4";
const COLOR_B: &str = "#ff7f0e";
const COLOR_BOTH: &str = "#7f7f7f";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotLayout {
    /// Top-down wedge with the camera at the apex.
    Wedge,
    /// Distance-only strip plot, used when bearings are missing.
    Strip,
}

/// One drawn marker. Instances detected by both rules are not drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotPoint {
    pub image_id: String,
    pub instance_id: u16,
    pub outcome: Outcome,
    pub distance_m: f64,
    pub bearing_deg: Option<f64>,
    /// Lateral ground-plane offset, metres (wedge layout only).
    pub x_m: Option<f64>,
    /// Forward ground-plane offset, metres (wedge layout only).
    pub y_m: Option<f64>,
    pub svg_x: f64,
    pub svg_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BirdseyePlot {
    pub layout: PlotLayout,
    pub points: Vec<PlotPoint>,
    pub svg: String,
}

/// Ground-plane position of an instance at `distance_m` and `bearing_deg`
/// (positive to the right of the optical axis).
pub fn ground_position(distance_m: f64, bearing_deg: f64) -> (f64, f64) {
    let t = bearing_deg.to_radians();
    (distance_m * t.sin(), distance_m * t.cos())
}

/// Wedge plot; fails if a drawn instance lacks a bearing.
pub fn birdseye_wedge(report: &ConsequenceReport, labels: [&str; 2]) -> Result<BirdseyePlot> {
    if let Some(p) = drawn(report).find(|p| p.bearing_deg.is_none()) {
        return Err(Error::MissingBearing(format!(
            "{}/{}",
            p.image_id, p.instance_id
        )));
    }
    Ok(render_wedge(report, labels))
}

/// Wedge plot when every drawn instance has a bearing, strip plot otherwise.
pub fn birdseye_export(report: &ConsequenceReport, labels: [&str; 2]) -> BirdseyePlot {
    if drawn(report).all(|p| p.bearing_deg.is_some()) {
        render_wedge(report, labels)
    } else {
        render_strip(report, labels)
    }
}

fn drawn(report: &ConsequenceReport) -> impl Iterator<Item = &super::InstancePoint> {
    report
        .points
        .iter()
        .filter(|p| p.outcome != Outcome::DetectedBoth)
}

fn extent(report: &ConsequenceReport) -> f64 {
    let zone = report
        .zones
        .iter()
        .map(|z| z.max_distance_m)
        .fold(0.0, f64::max);
    let far = drawn(report).map(|p| p.distance_m).fold(0.0, f64::max);
    zone.max(far).max(1.0) * 1.05
}

fn marker(out: &mut String, outcome: Outcome, x: f64, y: f64) {
    const R: f64 = 4.0;
    match outcome {
        Outcome::OverlookedBoth => {
            let _ = writeln!(
                out,
                r#"<path class="cross" d="M{:.2} {:.2}L{:.2} {:.2}M{:.2} {:.2}L{:.2} {:.2}" stroke="{COLOR_BOTH}" stroke-width="2"/>"#,
                x - R,
                y - R,
                x + R,
                y + R,
                x - R,
                y + R,
                x + R,
                y - R
            );
        }
        Outcome::OnlyA | Outcome::OnlyB => {
            let (class, color) = if outcome == Outcome::OnlyA {
                ("only-a", COLOR_A)
            } else {
                ("only-b", COLOR_B)
            };
            let _ = writeln!(
                out,
                r#"<circle class="{class}" cx="{x:.2}" cy="{y:.2}" r="{R}" fill="{color}"/>"#
            );
        }
        Outcome::DetectedBoth => {}
    }
}

fn legend(out: &mut String, labels: [&str; 2]) {
    let entries = [
        (Outcome::OverlookedBoth, "overlooked by both".to_string()),
        (
            Outcome::OnlyA,
            format!("detected only by {}", escape(labels[0])),
        ),
        (
            Outcome::OnlyB,
            format!("detected only by {}", escape(labels[1])),
        ),
    ];
    for (i, (outcome, text)) in entries.into_iter().enumerate() {
        let y = MARGIN + 16.0 * i as f64;
        marker(out, outcome, MARGIN, y);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="11" font-family="sans-serif">{text}</text>"#,
            MARGIN + 10.0,
            y + 4.0
        );
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn header(out: &mut String) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        out,
        r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
}

fn render_wedge(report: &ConsequenceReport, labels: [&str; 2]) -> BirdseyePlot {
    let range = extent(report);
    let half = HALF_FIELD_DEG.to_radians();
    // fit both the wedge height and its half-width
    let scale =
        ((HEIGHT - 2.0 * MARGIN) / range).min((WIDTH / 2.0 - MARGIN) / (range * half.sin()));
    let (ox, oy) = (WIDTH / 2.0, HEIGHT - MARGIN);
    let to_svg = |x_m: f64, y_m: f64| (ox + scale * x_m, oy - scale * y_m);
    let sector = |r: f64| {
        let (lx, ly) = to_svg(-r * half.sin(), r * half.cos());
        let (rx, ry) = to_svg(r * half.sin(), r * half.cos());
        let rad = r * scale;
        format!("M{ox:.2} {oy:.2}L{lx:.2} {ly:.2}A{rad:.2} {rad:.2} 0 0 1 {rx:.2} {ry:.2}Z")
    };

    let mut svg = String::new();
    header(&mut svg);
    let _ = writeln!(
        svg,
        r##"<path class="fov" d="{}" fill="#f4f4f4" stroke="#999"/>"##,
        sector(range)
    );
    let n = report.zones.len();
    for (i, z) in report.zones.iter().enumerate().rev() {
        let opacity = 0.12 + 0.18 * (n - i) as f64 / n as f64;
        let _ = writeln!(
            svg,
            r##"<path class="zone" data-zone="{}" d="{}" fill="#d62728" fill-opacity="{opacity:.2}" stroke="#d62728"/>"##,
            escape(&z.name),
            sector(z.max_distance_m)
        );
        let (lx, ly) = to_svg(0.0, z.max_distance_m);
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" font-size="10" font-family="sans-serif">{} ({} m)</text>"#,
            lx + 3.0,
            ly - 3.0,
            escape(&z.name),
            z.max_distance_m
        );
    }

    let mut points = Vec::new();
    for p in drawn(report) {
        let bearing = p.bearing_deg.unwrap_or(0.0);
        let (x_m, y_m) = ground_position(p.distance_m, bearing);
        let (sx, sy) = to_svg(x_m, y_m);
        marker(&mut svg, p.outcome, sx, sy);
        points.push(PlotPoint {
            image_id: p.image_id.clone(),
            instance_id: p.instance_id,
            outcome: p.outcome,
            distance_m: p.distance_m,
            bearing_deg: p.bearing_deg,
            x_m: Some(x_m),
            y_m: Some(y_m),
            svg_x: sx,
            svg_y: sy,
        });
    }
    legend(&mut svg, labels);
    svg.push_str("</svg>\n");
    BirdseyePlot {
        layout: PlotLayout::Wedge,
        points,
        svg,
    }
}

fn render_strip(report: &ConsequenceReport, labels: [&str; 2]) -> BirdseyePlot {
    let range = extent(report);
    let scale = (WIDTH - 2.0 * MARGIN) / range;
    let row_y = |o: Outcome| match o {
        Outcome::OverlookedBoth => HEIGHT * 0.45,
        Outcome::OnlyA => HEIGHT * 0.6,
        _ => HEIGHT * 0.75,
    };

    let mut svg = String::new();
    header(&mut svg);
    let base = HEIGHT * 0.85;
    let _ = writeln!(
        svg,
        r##"<line class="axis" x1="{MARGIN}" y1="{base:.2}" x2="{:.2}" y2="{base:.2}" stroke="#999"/>"##,
        WIDTH - MARGIN
    );
    for z in report.zones.iter().rev() {
        let _ = writeln!(
            svg,
            r##"<rect class="zone" data-zone="{}" x="{MARGIN}" y="{:.2}" width="{:.2}" height="{:.2}" fill="#d62728" fill-opacity="0.12"/>"##,
            escape(&z.name),
            HEIGHT * 0.35,
            z.max_distance_m * scale,
            base - HEIGHT * 0.35
        );
    }
    let mut points = Vec::new();
    for p in drawn(report) {
        let (sx, sy) = (MARGIN + p.distance_m * scale, row_y(p.outcome));
        marker(&mut svg, p.outcome, sx, sy);
        points.push(PlotPoint {
            image_id: p.image_id.clone(),
            instance_id: p.instance_id,
            outcome: p.outcome,
            distance_m: p.distance_m,
            bearing_deg: p.bearing_deg,
            x_m: None,
            y_m: None,
            svg_x: sx,
            svg_y: sy,
        });
    }
    legend(&mut svg, labels);
    svg.push_str("</svg>\n");
    BirdseyePlot {
        layout: PlotLayout::Strip,
        points,
        svg,
    }
}
