//! Deterministic SVG output: line charts and heatmap panels.

use std::fmt::Write as _;

use pseudoheat_core::HeatmapSet;

use crate::error::{Error, Result};

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];
const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 48.0;

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LineChart {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

/// Data extent padded by 5%; a flat range is widened to one unit.
fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Shortest of a few fixed precisions that keeps the tick distinct.
fn tick_label(v: f64, step: f64) -> String {
    let digits = if step >= 1.0 { 0 } else { (-step.log10()).ceil() as usize + 1 };
    format!("{v:.digits$}")
}

impl LineChart {
    /// Axis ranges `(x_min, x_max, y_min, y_max)` the chart is drawn with.
    pub fn ranges(&self) -> Option<(f64, f64, f64, f64)> {
        let pts = || self.series.iter().flat_map(|s| s.points.iter());
        pts().next()?;
        let (x0, x1) = extent(pts().map(|p| p.0));
        let (y0, y1) = extent(pts().map(|p| p.1));
        Some((x0, x1, y0, y1))
    }

    pub fn to_svg(&self) -> Result<String> {
        if self.series.is_empty() {
            return Err(Error::Usage("chart has no series".into()));
        }
        if let Some(p) = self.series.iter().flat_map(|s| &s.points).find(|p| !p.0.is_finite() || !p.1.is_finite()) {
            return Err(Error::Usage(format!("chart point ({}, {}) is not finite", p.0, p.1)));
        }
        let (x0, x1, y0, y1) = self.ranges().ok_or_else(|| Error::Usage("chart has no points".into()))?;
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );
        let _ = writeln!(s, r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>"##);
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
            let (px, py) = (sx(xv), sy(yv));
            let _ = writeln!(
                s,
                r##"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="#444"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                TOP + ph,
                TOP + ph + 4.0,
                TOP + ph + 18.0,
                tick_label(xv, (x1 - x0) / 4.0)
            );
            let _ = writeln!(
                s,
                r##"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="#444"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                LEFT - 4.0,
                LEFT - 6.0,
                py + 4.0,
                tick_label(yv, (y1 - y0) / 4.0)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 10.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        for (i, series) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let pts: Vec<String> = series.points.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
            let _ = writeln!(
                s,
                r#"<polyline class="series" data-name="{}" fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
                escape(&series.name),
                pts.join(" ")
            );
            for &(x, y) in &series.points {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, sx(x), sy(y));
            }
            let ly = TOP + 12.0 + 18.0 * i as f64;
            let lx = WIDTH - RIGHT + 12.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                lx + 18.0,
                lx + 24.0,
                ly + 4.0,
                escape(&series.name)
            );
        }
        s.push_str("</svg>\n");
        Ok(s)
    }
}

/// One grayscale panel per joint, laid out in a row; `scale` pixels per cell.
pub fn heatmap_svg(set: &HeatmapSet, scale: usize) -> Result<String> {
    if scale == 0 {
        return Err(Error::Usage("render scale must be at least 1".into()));
    }
    let dims = set.dims();
    let (pw, ph) = (dims.width * scale, dims.height * scale);
    let gap = 8;
    let total_w = set.num_joints() * (pw + gap) + gap;
    let total_h = ph + 2 * gap + 16;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total_w}" height="{total_h}" viewBox="0 0 {total_w} {total_h}" font-family="sans-serif" font-size="12" shape-rendering="crispEdges">"#
    );
    let _ = writeln!(s, r#"<rect width="{total_w}" height="{total_h}" fill="white"/>"#);
    for (j, hm) in set.joints().iter().enumerate() {
        let ox = gap + j * (pw + gap);
        let oy = gap + 16;
        let _ = writeln!(s, r#"<text x="{ox}" y="{}">joint {j}</text>"#, gap + 10);
        let _ = writeln!(s, r#"<g class="joint" data-joint="{j}">"#);
        let _ = writeln!(s, r#"<rect x="{ox}" y="{oy}" width="{pw}" height="{ph}" fill="black"/>"#);
        for y in 0..dims.height {
            // Runs of equal shade become one rect.
            let mut x = 0;
            while x < dims.width {
                let level = (hm.get(x, y) * 255.0).round() as u8;
                let mut end = x + 1;
                while end < dims.width && (hm.get(end, y) * 255.0).round() as u8 == level {
                    end += 1;
                }
                if level > 0 {
                    let _ = writeln!(
                        s,
                        r#"<rect x="{}" y="{}" width="{}" height="{scale}" fill="rgb({level},{level},{level})"/>"#,
                        ox + x * scale,
                        oy + y * scale,
                        (end - x) * scale
                    );
                }
                x = end;
            }
        }
        s.push_str("</g>\n");
    }
    s.push_str("</svg>\n");
    Ok(s)
}
