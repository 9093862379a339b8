//! Minimal SVG line plots with optional log axes.

use std::fmt::Write as _;

const PALETTE: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd"];

pub struct Series {
    pub name: String,
    pub points: Vec<(f64, f64)>,
}

impl Series {
    pub fn new(name: &str, x: &[f64], y: &[f64]) -> Self {
        Series {
            name: name.to_string(),
            points: x.iter().copied().zip(y.iter().copied()).collect(),
        }
    }
}

#[derive(Default)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
    /// Vertical markers `(x, label)`.
    pub markers: Vec<(f64, String)>,
    pub note: Option<String>,
}

const W: f64 = 720.0;
const H: f64 = 360.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 50.0;

struct Axis {
    lo: f64,
    hi: f64,
    log: bool,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, log: bool) -> Axis {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            let v = if log { v.log10() } else { v };
            if v.is_finite() {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if hi - lo <= f64::EPSILON * (1.0 + lo.abs()) {
            let pad = if lo == 0.0 { 1.0 } else { 0.05 * lo.abs() };
            lo -= pad;
            hi += pad;
        }
        Axis { lo, hi, log }
    }

    fn coord(&self, v: f64) -> Option<f64> {
        let v = if self.log { v.log10() } else { v };
        v.is_finite().then(|| (v - self.lo) / (self.hi - self.lo))
    }

    fn ticks(&self) -> Vec<(f64, String)> {
        (0..=4)
            .map(|k| {
                let t = self.lo + (self.hi - self.lo) * k as f64 / 4.0;
                let label = if self.log {
                    format!("1e{t:.1}")
                } else {
                    format_number(t)
                };
                (k as f64 / 4.0, label)
            })
            .collect()
    }
}

fn format_number(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-2..1e4).contains(&a) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

impl Panel {
    fn render(&self, out: &mut String, y0: f64) {
        let pw = W - LEFT - RIGHT;
        let ph = H - TOP - BOTTOM;
        let xa = Axis::fit(
            self.series
                .iter()
                .flat_map(|s| s.points.iter().map(|p| p.0)),
            self.log_x,
        );
        let ya = Axis::fit(
            self.series
                .iter()
                .flat_map(|s| s.points.iter().map(|p| p.1)),
            self.log_y,
        );
        let px = |f: f64| LEFT + f * pw;
        let py = |f: f64| y0 + TOP + (1.0 - f) * ph;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="15">{}</text>"#,
            W / 2.0,
            y0 + 22.0,
            escape(&self.title)
        );
        let _ = writeln!(
            out,
            r##"<rect x="{LEFT}" y="{}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##,
            y0 + TOP
        );
        for (f, label) in xa.ticks() {
            let _ = writeln!(
                out,
                r##"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="#ddd"/><text x="{0}" y="{3}" text-anchor="middle" font-size="11">{4}</text>"##,
                px(f),
                py(0.0),
                py(1.0),
                py(0.0) + 16.0,
                label
            );
        }
        for (f, label) in ya.ticks() {
            let _ = writeln!(
                out,
                r##"<line x1="{1}" y1="{0}" x2="{2}" y2="{0}" stroke="#ddd"/><text x="{3}" y="{4}" text-anchor="end" font-size="11">{5}</text>"##,
                py(f),
                px(0.0),
                px(1.0),
                px(0.0) - 6.0,
                py(f) + 4.0,
                label
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="12">{}</text>"#,
            LEFT + pw / 2.0,
            y0 + H - 10.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="16" y="{0}" text-anchor="middle" font-size="12" transform="rotate(-90 16 {0})">{1}</text>"#,
            y0 + TOP + ph / 2.0,
            escape(&self.y_label)
        );
        for (k, s) in self.series.iter().enumerate() {
            let color = PALETTE[k % PALETTE.len()];
            let pts: Vec<String> = s
                .points
                .iter()
                .filter_map(|&(x, y)| {
                    Some(format!("{:.2},{:.2}", px(xa.coord(x)?), py(ya.coord(y)?)))
                })
                .collect();
            if !pts.is_empty() {
                let _ = writeln!(
                    out,
                    r#"<polyline fill="none" stroke="{color}" stroke-width="1.6" points="{}"/>"#,
                    pts.join(" ")
                );
            }
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" font-size="12" fill="{color}">{}</text>"#,
                LEFT + 10.0,
                y0 + TOP + 16.0 + 15.0 * k as f64,
                escape(&s.name)
            );
        }
        for (x, label) in &self.markers {
            if let Some(f) = xa.coord(*x).filter(|f| (0.0..=1.0).contains(f)) {
                let _ = writeln!(
                    out,
                    r##"<line x1="{0}" y1="{1}" x2="{0}" y2="{2}" stroke="#ff7f0e" stroke-dasharray="5,4"/><text x="{3}" y="{4}" font-size="12" fill="#ff7f0e">{5}</text>"##,
                    px(f),
                    py(0.0),
                    py(1.0),
                    px(f) + 4.0,
                    py(1.0) + 14.0,
                    escape(label)
                );
            }
        }
        if let Some(note) = &self.note {
            let _ = writeln!(
                out,
                r##"<text x="{}" y="{}" text-anchor="end" font-size="12" fill="#a00">{}</text>"##,
                px(1.0) - 8.0,
                py(0.0) - 10.0,
                escape(note)
            );
        }
    }
}

/// Stacks panels vertically into one SVG document.
pub fn figure(panels: &[Panel]) -> String {
    let height = H * panels.len() as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{height}" viewBox="0 0 {W} {height}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (k, p) in panels.iter().enumerate() {
        p.render(&mut out, H * k as f64);
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_axis_drops_non_positive_points() {
        let panel = Panel {
            title: "t".into(),
            log_y: true,
            series: vec![Series::new("a", &[0.0, 1.0, 2.0], &[1.0, 0.0, 0.1])],
            ..Panel::default()
        };
        let svg = figure(&[panel]);
        let line = svg.lines().find(|l| l.starts_with("<polyline")).unwrap();
        assert_eq!(line.matches(',').count(), 2);
    }

    #[test]
    fn marker_and_note_are_emitted() {
        let panel = Panel {
            series: vec![Series::new("a", &[1.0, 2.0], &[1.0, 2.0])],
            markers: vec![(1.5, "eps*".into())],
            note: Some("a < b".into()),
            ..Panel::default()
        };
        let svg = figure(&[panel]);
        assert!(svg.contains("eps*"));
        assert!(svg.contains("a &lt; b"));
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
}
