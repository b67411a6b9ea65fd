//! Standalone SVG learning-curve plots: one line per series for the mean,
//! a translucent band for mean ± std.

use std::fmt::Write as _;
use std::path::Path;

use super::curves::Aggregate;
use crate::{Error, Result};

pub const PLOT_WIDTH: f64 = 800.0;
pub const PLOT_HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_TOP: f64 = 20.0;
const MARGIN_BOTTOM: f64 = 50.0;
/// Points drawn per series at most; longer series are strided.
const MAX_POINTS: usize = 1000;
const COLOURS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

/// Map between data coordinates (episode, value) and SVG pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisTransform {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl AxisTransform {
    /// Ranges covering every band of `series`, with episodes from 1.
    pub fn fit(series: &[&Aggregate]) -> Self {
        let len = series.iter().map(|a| a.len()).max().unwrap_or(1).max(2);
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for agg in series {
            for (m, s) in agg.mean.iter().zip(&agg.std) {
                lo = lo.min(m - s);
                hi = hi.max(m + s);
            }
        }
        if !lo.is_finite() || !hi.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo < 1e-9 {
            lo -= 0.5;
            hi += 0.5;
        }
        let pad = 0.05 * (hi - lo);
        Self {
            x_min: 1.0,
            x_max: len as f64,
            y_min: lo - pad,
            y_max: hi + pad,
        }
    }

    fn plot_width() -> f64 {
        PLOT_WIDTH - MARGIN_LEFT - MARGIN_RIGHT
    }

    fn plot_height() -> f64 {
        PLOT_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM
    }

    pub fn to_px(&self, x: f64, y: f64) -> (f64, f64) {
        let px = MARGIN_LEFT + (x - self.x_min) / (self.x_max - self.x_min) * Self::plot_width();
        let py = MARGIN_TOP + (self.y_max - y) / (self.y_max - self.y_min) * Self::plot_height();
        (px, py)
    }

    pub fn from_px(&self, px: f64, py: f64) -> (f64, f64) {
        let x = self.x_min + (px - MARGIN_LEFT) / Self::plot_width() * (self.x_max - self.x_min);
        let y = self.y_max - (py - MARGIN_TOP) / Self::plot_height() * (self.y_max - self.y_min);
        (x, y)
    }
}

/// Legend label for a curve file: its stem, or the parent directory name
/// for files called `aggregate.csv`.
pub fn series_label(path: &Path) -> String {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    if stem == "aggregate" {
        if let Some(parent) = path.parent().and_then(Path::file_name) {
            return parent.to_string_lossy().into_owned();
        }
    }
    stem
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Indices drawn for a series of `len` points: a fixed stride plus the
/// last point.
fn sample_indices(len: usize) -> Vec<usize> {
    let stride = len.div_ceil(MAX_POINTS).max(1);
    let mut idx: Vec<usize> = (0..len).step_by(stride).collect();
    if len > 0 && idx.last() != Some(&(len - 1)) {
        idx.push(len - 1);
    }
    idx
}

fn point(out: &mut String, (px, py): (f64, f64)) {
    let _ = write!(out, "{px:.4},{py:.4} ");
}

/// Renders labelled aggregates into one SVG document.
pub fn emit_plot(series: &[(String, Aggregate)]) -> Result<String> {
    if series.is_empty() {
        return Err(Error::InvalidInput("nothing to plot".into()));
    }
    if let Some((label, _)) = series.iter().find(|(_, a)| a.is_empty()) {
        return Err(Error::InvalidInput(format!("series `{label}` is empty")));
    }
    let aggs: Vec<&Aggregate> = series.iter().map(|(_, a)| a).collect();
    let tf = AxisTransform::fit(&aggs);
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{PLOT_WIDTH}" height="{PLOT_HEIGHT}" viewBox="0 0 {PLOT_WIDTH} {PLOT_HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        svg,
        r#"<desc>x {} {} y {} {}</desc>"#,
        tf.x_min, tf.x_max, tf.y_min, tf.y_max
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);

    let (x0, y0) = tf.to_px(tf.x_min, tf.y_min);
    let (x1, y1) = tf.to_px(tf.x_max, tf.y_max);
    let _ = writeln!(
        svg,
        r#"<path class="axes" d="M{x0:.1},{y1:.1} L{x0:.1},{y0:.1} L{x1:.1},{y0:.1}" stroke="black" fill="none"/>"#
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let x = tf.x_min + f * (tf.x_max - tf.x_min);
        let (px, _) = tf.to_px(x, tf.y_min);
        let _ = writeln!(
            svg,
            r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            y0 + 18.0,
            x.round()
        );
        let y = tf.y_min + f * (tf.y_max - tf.y_min);
        let (_, py) = tf.to_px(tf.x_min, y);
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{y:.2}</text>"#,
            x0 - 6.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">Episode</text>"#,
        (x0 + x1) / 2.0,
        PLOT_HEIGHT - 8.0
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(16,{:.1}) rotate(-90)" text-anchor="middle">Score (moving average)</text>"#,
        (y0 + y1) / 2.0
    );

    for (k, (label, agg)) in series.iter().enumerate() {
        let colour = COLOURS[k % COLOURS.len()];
        let label = escape(label);
        let idx = sample_indices(agg.len());
        let mut band = String::new();
        for &i in &idx {
            point(&mut band, tf.to_px((i + 1) as f64, agg.mean[i] + agg.std[i]));
        }
        for &i in idx.iter().rev() {
            point(&mut band, tf.to_px((i + 1) as f64, agg.mean[i] - agg.std[i]));
        }
        let mut line = String::new();
        for &i in &idx {
            point(&mut line, tf.to_px((i + 1) as f64, agg.mean[i]));
        }
        let _ = writeln!(
            svg,
            r#"<polygon class="band" data-series="{label}" points="{}" fill="{colour}" fill-opacity="0.2" stroke="none"/>"#,
            band.trim_end()
        );
        let _ = writeln!(
            svg,
            r#"<polyline class="mean" data-series="{label}" points="{}" fill="none" stroke="{colour}" stroke-width="1.5"/>"#,
            line.trim_end()
        );
        let ly = MARGIN_TOP + 10.0 + 20.0 * k as f64;
        let lx = PLOT_WIDTH - MARGIN_RIGHT + 15.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{colour}" stroke-width="3"/>"#,
            lx + 20.0
        );
        let _ = writeln!(
            svg,
            r#"<text class="legend" x="{:.1}" y="{:.1}">{label}</text>"#,
            lx + 26.0,
            ly + 4.0
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn agg(n: usize, offset: f64) -> Aggregate {
        Aggregate {
            mean: (0..n).map(|i| offset + (i as f64 / 10.0).sin()).collect(),
            std: (0..n).map(|i| 0.1 + 0.01 * (i % 7) as f64).collect(),
        }
    }

    #[test]
    fn transform_inverts() {
        let tf = AxisTransform::fit(&[&agg(50, 0.0)]);
        let (px, py) = tf.to_px(17.0, 0.3);
        let (x, y) = tf.from_px(px, py);
        assert!((x - 17.0).abs() < 1e-9 && (y - 0.3).abs() < 1e-9);
    }

    #[test]
    fn one_labelled_series_per_input() {
        let series: Vec<(String, Aggregate)> =
            (0..3).map(|k| (format!("m{k}"), agg(40, k as f64))).collect();
        let svg = emit_plot(&series).unwrap();
        assert_eq!(svg.matches(r#"class="mean""#).count(), 3);
        assert_eq!(svg.matches(r#"class="band""#).count(), 3);
        for k in 0..3 {
            assert!(svg.contains(&format!(">m{k}</text>")));
        }
        assert_eq!(svg, emit_plot(&series).unwrap());
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(emit_plot(&[]).is_err());
        let empty = Aggregate { mean: vec![], std: vec![] };
        assert!(emit_plot(&[("e".into(), empty)]).is_err());
    }

    #[test]
    fn long_series_are_strided_but_keep_the_last_point() {
        let idx = sample_indices(2500);
        assert!(idx.len() <= MAX_POINTS + 1);
        assert_eq!(*idx.last().unwrap(), 2499);
        assert_eq!(sample_indices(3), vec![0, 1, 2]);
    }

    #[test]
    fn labels_come_from_file_names() {
        assert_eq!(series_label(Path::new("out/ql-ccr/aggregate.csv")), "ql-ccr");
        assert_eq!(series_label(Path::new("curves/dqn.csv")), "dqn");
    }
}
