//! Minimal SVG scatter plots.

use std::collections::BTreeMap;
use std::fmt::Write;

use ndarray::Array2;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 0.05;
const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22",
    "#17becf",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Marker {
    Solid,
    Hollow,
    Landmark,
}

/// Maps labels to palette slots in first-seen order.
pub fn color_indices(labels: Option<&[String]>, n: usize) -> Vec<usize> {
    match labels {
        None => vec![0; n],
        Some(labels) => {
            let mut seen = BTreeMap::new();
            let mut order = Vec::with_capacity(n);
            for l in labels {
                let next = seen.len();
                order.push(*seen.entry(l.as_str()).or_insert(next));
            }
            order
        }
    }
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| (l.min(v), h.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    (lo - MARGIN * span, hi + MARGIN * span)
}

/// One marker element per row of `points`; the first two columns are
/// plotted (a single column is drawn on a horizontal line).
pub fn scatter(points: &Array2<f64>, colors: &[usize], markers: &[Marker]) -> String {
    let x = |i: usize| points[[i, 0]];
    let y = |i: usize| if points.ncols() > 1 { points[[i, 1]] } else { 0.0 };
    let n = points.nrows();
    let (x0, x1) = bounds((0..n).map(x));
    let (y0, y1) = bounds((0..n).map(y));
    let px = |v: f64| (v - x0) / (x1 - x0) * WIDTH;
    let py = |v: f64| HEIGHT - (v - y0) / (y1 - y0) * HEIGHT;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r##"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white" stroke="#333333"/>"##);
    for i in 0..n {
        let color = PALETTE[colors[i] % PALETTE.len()];
        let (cx, cy) = (px(x(i)), py(y(i)));
        let _ = match markers[i] {
            Marker::Solid => writeln!(svg, r#"<circle cx="{cx:.3}" cy="{cy:.3}" r="3" fill="{color}"/>"#),
            Marker::Hollow => writeln!(
                svg,
                r#"<circle cx="{cx:.3}" cy="{cy:.3}" r="3.5" fill="none" stroke="{color}" stroke-width="1.5"/>"#
            ),
            Marker::Landmark => writeln!(
                svg,
                r#"<circle cx="{cx:.3}" cy="{cy:.3}" r="5" fill="{color}" stroke="black" stroke-width="1.5"/>"#
            ),
        };
    }
    svg.push_str("</svg>\n");
    svg
}
