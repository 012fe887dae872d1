//! Minimal static SVG charts. Decorative only; the CSV files are the data.

use std::fmt::Write as _;

const W: f64 = 480.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(xs: impl Iterator<Item = f64> + Clone, ys: impl Iterator<Item = f64> + Clone) -> Self {
        let span = |it: &mut dyn Iterator<Item = f64>| {
            let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if lo == hi {
                (lo - 1.0, hi + 1.0)
            } else {
                let m = (hi - lo) * 0.05;
                (lo - m, hi + m)
            }
        };
        let (x0, x1) = span(&mut xs.clone());
        let (y0, y1) = span(&mut ys.clone());
        Self { x0, x1, y0, y1 }
    }

    fn x(&self, v: f64) -> f64 {
        PAD + (v - self.x0) / (self.x1 - self.x0) * (W - 2.0 * PAD)
    }

    fn y(&self, v: f64) -> f64 {
        H - PAD - (v - self.y0) / (self.y1 - self.y0) * (H - 2.0 * PAD)
    }
}

fn open(title: &str, xlabel: &str, ylabel: &str, f: &Frame) -> String {
    let mut s = String::new();
    let _ = write!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>
<line x1="{PAD}" y1="{}" x2="{}" y2="{}" stroke="black"/>
<line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{}" stroke="black"/>
<text x="{}" y="{}" text-anchor="middle">{}</text>
<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>
<text x="{PAD}" y="{}" text-anchor="middle">{:.2}</text>
<text x="{}" y="{}" text-anchor="middle">{:.2}</text>
<text x="{}" y="{}" text-anchor="end">{:.2}</text>
<text x="{}" y="{}" text-anchor="end">{:.2}</text>
"#,
        W / 2.0,
        esc(title),
        H - PAD,
        W - PAD,
        H - PAD,
        H - PAD,
        W / 2.0,
        H - 10.0,
        esc(xlabel),
        H / 2.0,
        H / 2.0,
        esc(ylabel),
        H - PAD + 14.0,
        f.x0,
        W - PAD,
        H - PAD + 14.0,
        f.x1,
        PAD - 4.0,
        H - PAD,
        f.y0,
        PAD - 4.0,
        PAD + 4.0,
        f.y1,
    );
    s
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Scatter plot with optional horizontal reference lines.
pub fn scatter(title: &str, xlabel: &str, ylabel: &str, points: &[(f64, f64)], hlines: &[(f64, &str)]) -> String {
    let f = Frame::new(
        points.iter().map(|p| p.0),
        points.iter().map(|p| p.1).chain(hlines.iter().map(|h| h.0)),
    );
    let mut s = open(title, xlabel, ylabel, &f);
    for (y, label) in hlines {
        let _ = writeln!(
            s,
            r#"<line x1="{PAD}" y1="{0:.2}" x2="{1}" y2="{0:.2}" stroke="gray" stroke-dasharray="4 3"/><text x="{1}" y="{2:.2}" text-anchor="end" fill="gray">{3}</text>"#,
            f.y(*y),
            W - PAD,
            f.y(*y) - 3.0,
            esc(label)
        );
    }
    for &(x, y) in points {
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="steelblue" fill-opacity="0.7"/>"#, f.x(x), f.y(y));
    }
    s.push_str("</svg>\n");
    s
}

/// Bar chart of `(center, count)` with unit-width bars.
pub fn histogram(title: &str, xlabel: &str, bins: &[(i64, usize)]) -> String {
    let f = Frame::new(
        bins.iter().flat_map(|b| [b.0 as f64 - 0.5, b.0 as f64 + 0.5]),
        bins.iter().map(|b| b.1 as f64).chain([0.0]),
    );
    let mut s = open(title, xlabel, "count", &f);
    for &(c, n) in bins {
        let (x0, x1) = (f.x(c as f64 - 0.45), f.x(c as f64 + 0.45));
        let (y0, y1) = (f.y(n as f64), f.y(0.0));
        let _ = writeln!(
            s,
            r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="steelblue"/>"#,
            x1 - x0,
            y1 - y0
        );
    }
    s.push_str("</svg>\n");
    s
}
