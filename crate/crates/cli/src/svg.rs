//! Static SVG line plots: one polyline per series, linear axes with ticks
//! and a legend.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 600.0;

const MARGIN_L: f64 = 80.0;
const MARGIN_R: f64 = 30.0;
const MARGIN_T: f64 = 40.0;
const MARGIN_B: f64 = 60.0;
const COLORS: &[&str] = &["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("plot has no series")]
    NoSeries,
    #[error("series `{0}` is empty")]
    EmptySeries(String),
    #[error("series `{0}` has mismatched x and y lengths")]
    Mismatch(String),
    #[error("series `{0}` contains a non-finite value")]
    NonFinite(String),
    #[error("axis range does not enclose the data")]
    BadRange,
    #[error("cannot write plot: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Line,
    /// Circles at the points, no connecting line.
    Markers,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub style: Style,
}

impl Series {
    pub fn line(label: &str, x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { label: label.into(), x, y, style: Style::Line }
    }

    pub fn markers(label: &str, x: Vec<f64>, y: Vec<f64>) -> Self {
        Self { label: label.into(), x, y, style: Style::Markers }
    }
}

#[derive(Debug, Clone)]
pub struct PlotSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Axis ranges; `None` fits the data with a small margin.
    pub x_range: Option<(f64, f64)>,
    pub y_range: Option<(f64, f64)>,
}

impl PlotSpec {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: Vec::new(),
            x_range: None,
            y_range: None,
        }
    }

    pub fn with(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }

    fn validate(&self) -> Result<(), PlotError> {
        if self.series.is_empty() {
            return Err(PlotError::NoSeries);
        }
        for s in &self.series {
            if s.x.is_empty() {
                return Err(PlotError::EmptySeries(s.label.clone()));
            }
            if s.x.len() != s.y.len() {
                return Err(PlotError::Mismatch(s.label.clone()));
            }
            if s.x.iter().chain(&s.y).any(|v| !v.is_finite()) {
                return Err(PlotError::NonFinite(s.label.clone()));
            }
        }
        Ok(())
    }

    fn ranges(&self) -> Result<((f64, f64), (f64, f64)), PlotError> {
        let fit = |vals: Vec<f64>| {
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let pad = if hi > lo { 0.05 * (hi - lo) } else { lo.abs().max(1.0) * 0.5 };
            (lo - pad, hi + pad)
        };
        let xs: Vec<f64> = self.series.iter().flat_map(|s| s.x.iter().cloned()).collect();
        let ys: Vec<f64> = self.series.iter().flat_map(|s| s.y.iter().cloned()).collect();
        let xr = self.x_range.unwrap_or_else(|| fit(xs.clone()));
        let yr = self.y_range.unwrap_or_else(|| fit(ys.clone()));
        let encloses = |r: (f64, f64), v: &[f64]| r.1 > r.0 && v.iter().all(|&t| t >= r.0 && t <= r.1);
        if !encloses(xr, &xs) || !encloses(yr, &ys) {
            return Err(PlotError::BadRange);
        }
        Ok((xr, yr))
    }
}

/// Tick positions from the 1-2-5 sequence, about `target` of them.
pub fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = hi - lo;
    if !(span > 0.0) {
        return vec![lo];
    }
    let raw = span / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|&s| s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    let a = v.abs();
    if a == 0.0 {
        "0".into()
    } else if !(1e-3..1e5).contains(&a) {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn render_svg(spec: &PlotSpec) -> Result<String, PlotError> {
    spec.validate()?;
    let ((x0, x1), (y0, y1)) = spec.ranges()?;
    let pw = WIDTH - MARGIN_L - MARGIN_R;
    let ph = HEIGHT - MARGIN_T - MARGIN_B;
    let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| MARGIN_T + (y1 - y) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="24" font-family="sans-serif" font-size="16" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        escape(&spec.title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw}" height="{ph}" fill="none" stroke="black" stroke-width="1"/>"#
    );

    let _ = writeln!(s, r#"<g font-family="sans-serif" font-size="12">"#);
    for t in nice_ticks(x0, x1, 8) {
        let x = sx(t);
        let yb = MARGIN_T + ph;
        let _ = writeln!(s, r#"<line x1="{x:.2}" y1="{yb:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"#, yb + 5.0);
        let _ = writeln!(s, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, yb + 20.0, fmt_tick(t));
    }
    for t in nice_ticks(y0, y1, 6) {
        let y = sy(t);
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{y:.2}" x2="{MARGIN_L:.2}" y2="{y:.2}" stroke="black"/>"#, MARGIN_L - 5.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, MARGIN_L - 8.0, y + 4.0, fmt_tick(t));
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        MARGIN_L + pw / 2.0,
        HEIGHT - 15.0,
        escape(&spec.x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        MARGIN_T + ph / 2.0,
        MARGIN_T + ph / 2.0,
        escape(&spec.y_label)
    );
    let _ = writeln!(s, "</g>");

    for (k, ser) in spec.series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        match ser.style {
            Style::Line => {
                let pts: Vec<String> = ser.x.iter().zip(&ser.y).map(|(&x, &y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                let _ = writeln!(
                    s,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
                    pts.join(" ")
                );
            }
            Style::Markers => {
                let _ = writeln!(s, r#"<g fill="none" stroke="{color}" stroke-width="1.5">"#);
                for (&x, &y) in ser.x.iter().zip(&ser.y) {
                    let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="5"/>"#, sx(x), sy(y));
                }
                let _ = writeln!(s, "</g>");
            }
        }
    }

    let lx = MARGIN_L + pw - 180.0;
    let ly = MARGIN_T + 12.0;
    let _ = writeln!(s, r#"<g font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(
        s,
        r##"<rect x="{:.2}" y="{:.2}" width="170" height="{:.2}" fill="white" stroke="#888"/>"##,
        lx - 6.0,
        ly - 10.0,
        18.0 * spec.series.len() as f64 + 6.0
    );
    for (k, ser) in spec.series.iter().enumerate() {
        let color = COLORS[k % COLORS.len()];
        let y = ly + 18.0 * k as f64 + 4.0;
        match ser.style {
            Style::Line => {
                let _ = writeln!(s, r#"<line x1="{lx:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="{color}" stroke-width="2"/>"#, lx + 24.0);
            }
            Style::Markers => {
                let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{y:.2}" r="5" fill="none" stroke="{color}"/>"#, lx + 12.0);
            }
        }
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, lx + 30.0, y + 4.0, escape(&ser.label));
    }
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, "</svg>");
    Ok(s)
}

pub fn emit_svg(spec: &PlotSpec, path: &Path) -> Result<(), PlotError> {
    let text = render_svg(spec)?;
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_line_has_one_polyline() {
        let x: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let spec = PlotSpec::new("y = x", "x", "y").with(Series::line("y=x", x.clone(), x));
        let svg = render_svg(&spec).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.contains(r#"version="1.1""#));
        assert!(svg.contains(r#"width="800" height="600""#));
        assert!(svg.contains(">y=x</text>"));
    }

    #[test]
    fn empty_series_rejected() {
        let spec = PlotSpec::new("t", "x", "y").with(Series::line("none", vec![], vec![]));
        assert!(matches!(render_svg(&spec), Err(PlotError::EmptySeries(_))));
        assert!(matches!(render_svg(&PlotSpec::new("t", "x", "y")), Err(PlotError::NoSeries)));
    }

    #[test]
    fn range_must_enclose_data() {
        let mut spec = PlotSpec::new("t", "x", "y").with(Series::line("a", vec![0.0, 2.0], vec![0.0, 1.0]));
        spec.x_range = Some((0.0, 1.0));
        assert!(matches!(render_svg(&spec), Err(PlotError::BadRange)));
    }

    #[test]
    fn ticks_are_round() {
        let t = nice_ticks(0.0, 1.0, 5);
        assert_eq!(t.len(), 6);
        assert!(t.iter().enumerate().all(|(k, v)| (v - 0.2 * k as f64).abs() < 1e-12));
        let t = nice_ticks(-3.3, 7.1, 6);
        assert!(t.windows(2).all(|w| (w[1] - w[0] - 2.0).abs() < 1e-12));
    }
}
