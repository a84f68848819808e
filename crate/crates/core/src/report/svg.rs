//! Minimal SVG charts. Every chart is also written as CSV, so these only
//! need to be legible, not configurable.

use std::fmt::Write;

const WIDTH: f64 = 760.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 52.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

pub(crate) fn color(i: usize) -> &'static str {
    PALETTE[i % PALETTE.len()]
}

pub(crate) fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// A plotting area with linear axes.
pub(crate) struct Canvas {
    body: String,
    x: (f64, f64),
    y: (f64, f64),
    legend: usize,
}

impl Canvas {
    pub fn new(title: &str, x_label: &str, y_label: &str, x: (f64, f64), y: (f64, f64)) -> Self {
        let mut c = Canvas {
            body: String::new(),
            x,
            y,
            legend: 0,
        };
        let _ = write!(
            c.body,
            r#"<text x="{}" y="22" font-size="15" text-anchor="middle">{}</text>"#,
            WIDTH / 2.0,
            escape(title)
        );
        let _ = write!(
            c.body,
            r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text>"#,
            LEFT + (WIDTH - LEFT - RIGHT) / 2.0,
            HEIGHT - 12.0,
            escape(x_label)
        );
        let _ = write!(
            c.body,
            r#"<text x="16" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            TOP + (HEIGHT - TOP - BOTTOM) / 2.0,
            TOP + (HEIGHT - TOP - BOTTOM) / 2.0,
            escape(y_label)
        );
        c.axes();
        c
    }

    pub fn px(&self, x: f64) -> f64 {
        let (lo, hi) = self.x;
        LEFT + (x - lo) / (hi - lo).max(f64::MIN_POSITIVE) * (WIDTH - LEFT - RIGHT)
    }

    pub fn py(&self, y: f64) -> f64 {
        let (lo, hi) = self.y;
        HEIGHT - BOTTOM - (y - lo) / (hi - lo).max(f64::MIN_POSITIVE) * (HEIGHT - TOP - BOTTOM)
    }

    fn axes(&mut self) {
        let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
        let _ = write!(
            self.body,
            r##"<path d="M{x0} {y0}V{y1}H{x1}" fill="none" stroke="#333"/>"##
        );
        for i in 0..=5 {
            let v = self.y.0 + (self.y.1 - self.y.0) * i as f64 / 5.0;
            let y = self.py(v);
            let _ = write!(
                self.body,
                r##"<line x1="{}" y1="{y}" x2="{x0}" y2="{y}" stroke="#333"/><text x="{}" y="{}" font-size="10" text-anchor="end">{}</text>"##,
                x0 - 4.0,
                x0 - 6.0,
                y + 3.0,
                tick(v)
            );
        }
    }

    /// Numeric ticks along x.
    pub fn x_ticks(&mut self, n: usize) {
        for i in 0..=n {
            let v = self.x.0 + (self.x.1 - self.x.0) * i as f64 / n as f64;
            self.x_label_at(v, &tick(v));
        }
    }

    pub fn x_label_at(&mut self, v: f64, label: &str) {
        let x = self.px(v);
        let y = HEIGHT - BOTTOM;
        let _ = write!(
            self.body,
            r##"<line x1="{x}" y1="{y}" x2="{x}" y2="{}" stroke="#333"/><text x="{x}" y="{}" font-size="10" text-anchor="middle">{}</text>"##,
            y + 4.0,
            y + 16.0,
            escape(label)
        );
    }

    pub fn polyline(&mut self, points: &[(f64, f64)], color: &str) {
        let d: Vec<String> = points
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", self.px(*x), self.py(*y)))
            .collect();
        let _ = write!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.6"/>"#,
            d.join(" ")
        );
    }

    /// Shaded band between `lower` and `upper` over shared x values.
    pub fn band(&mut self, xs: &[f64], lower: &[f64], upper: &[f64], color: &str) {
        let mut d: Vec<String> = xs
            .iter()
            .zip(upper)
            .map(|(x, y)| format!("{:.2},{:.2}", self.px(*x), self.py(*y)))
            .collect();
        d.extend(
            xs.iter()
                .zip(lower)
                .rev()
                .map(|(x, y)| format!("{:.2},{:.2}", self.px(*x), self.py(*y))),
        );
        let _ = write!(
            self.body,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#,
            d.join(" ")
        );
    }

    pub fn point(&mut self, x: f64, y: f64, color: &str) {
        let _ = write!(
            self.body,
            r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
            self.px(x),
            self.py(y)
        );
    }

    pub fn error_bar(&mut self, x: f64, lo: f64, hi: f64, color: &str) {
        let px = self.px(x);
        let _ = write!(
            self.body,
            r#"<path d="M{px:.2} {:.2}V{:.2}M{:.2} {:.2}h8M{:.2} {:.2}h8" stroke="{color}"/>"#,
            self.py(lo),
            self.py(hi),
            px - 4.0,
            self.py(lo),
            px - 4.0,
            self.py(hi)
        );
    }

    pub fn legend(&mut self, label: &str, color: &str) {
        let y = TOP + 8.0 + self.legend as f64 * 16.0;
        let x = WIDTH - RIGHT + 12.0;
        let _ = write!(
            self.body,
            r#"<rect x="{x}" y="{}" width="10" height="10" fill="{color}"/><text x="{}" y="{}" font-size="11">{}</text>"#,
            y - 8.0,
            x + 14.0,
            y + 1.0,
            escape(label)
        );
        self.legend += 1;
    }

    pub fn finish(self) -> String {
        format!(
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif"><rect width="100%" height="100%" fill="white"/>{}</svg>
"#,
            self.body
        )
    }
}

fn tick(v: f64) -> String {
    if (v - v.round()).abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        format!("{v:.2}")
    }
}

/// Range padded by 5% on each side; a flat range is widened by one unit.
pub(crate) fn padded(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.into_iter().filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 1.0, hi + 1.0);
    }
    let pad = (hi - lo) * 0.05;
    (lo - pad, hi + pad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn maps_corners_and_escapes() {
        let mut c = Canvas::new("a & b", "x", "y", (0.0, 10.0), (0.0, 1.0));
        assert_eq!(c.px(0.0), LEFT);
        assert_eq!(c.px(10.0), WIDTH - RIGHT);
        assert_eq!(c.py(0.0), HEIGHT - BOTTOM);
        assert_eq!(c.py(1.0), TOP);
        c.legend("<g>", color(0));
        let svg = c.finish();
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
        assert!(svg.contains("a &amp; b") && svg.contains("&lt;g&gt;"));
    }

    #[test]
    fn padding() {
        assert_eq!(padded([2.0, 2.0]), (1.0, 3.0));
        assert_eq!(padded(Vec::<f64>::new()), (0.0, 1.0));
        let (lo, hi) = padded([0.0, 10.0]);
        assert!((lo + 0.5).abs() < 1e-12 && (hi - 10.5).abs() < 1e-12);
    }
}
