//! Static SVG line plots with shaded standard-error bands.

use std::fmt::Write as _;

use super::aggregate::CurvePoint;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

/// Which curve of an aggregate to draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Quantity {
    Return,
    Decisions,
}

impl Quantity {
    fn get(self, p: &CurvePoint) -> (f64, f64) {
        match self {
            Quantity::Return => (p.return_mean, p.return_stderr),
            Quantity::Decisions => (p.decisions_mean, p.decisions_stderr),
        }
    }

    fn label(self) -> &'static str {
        match self {
            Quantity::Return => "average return",
            Quantity::Decisions => "decisions per episode",
        }
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Round tick spacing giving about `n` ticks over `span`.
fn tick_step(span: f64, n: f64) -> f64 {
    let raw = span / n;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let nice = if f < 1.5 {
        1.0
    } else if f < 3.5 {
        2.0
    } else if f < 7.5 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

/// Renders one plot, one line per labelled series. A band of ±1 standard
/// error is shaded wherever a series aggregates more than one seed.
pub fn line_plot(title: &str, x_label: &str, quantity: Quantity, series: &[(String, Vec<CurvePoint>)]) -> String {
    let points = series.iter().flat_map(|(_, c)| c.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        let (m, se) = quantity.get(p);
        x0 = x0.min(p.step as f64);
        x1 = x1.max(p.step as f64);
        y0 = y0.min(m - se);
        y1 = y1.max(m + se);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y0 -= 1.0;
        y1 += 1.0;
    }
    let pad = (y1 - y0) * 0.05;
    let (y0, y1) = (y0 - pad, y1 + pad);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, LEFT + pw / 2.0, escape(title));
    let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);

    let xs = tick_step(x1 - x0, 6.0);
    let mut t = (x0 / xs).ceil() * xs;
    while t <= x1 + 1e-9 * xs {
        let x = sx(t);
        let _ = writeln!(s, r##"<line x1="{x:.1}" y1="{}" x2="{x:.1}" y2="{}" stroke="#ddd"/>"##, TOP, TOP + ph);
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{}" text-anchor="middle">{t}</text>"#, TOP + ph + 16.0);
        t += xs;
    }
    let ys = tick_step(y1 - y0, 6.0);
    let mut t = (y0 / ys).ceil() * ys;
    while t <= y1 + 1e-9 * ys {
        let y = sy(t);
        let _ = writeln!(s, r##"<line x1="{LEFT}" y1="{y:.1}" x2="{}" y2="{y:.1}" stroke="#ddd"/>"##, LEFT + pw);
        let _ = writeln!(s, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, LEFT - 6.0, y + 4.0, (t / ys).round() * ys);
        t += ys;
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, LEFT + pw / 2.0, HEIGHT - 12.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        TOP + ph / 2.0,
        quantity.label()
    );

    for (i, (label, curve)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        if curve.iter().any(|p| p.seeds > 1) {
            let upper = curve.iter().map(|p| {
                let (m, se) = quantity.get(p);
                format!("{:.2},{:.2}", sx(p.step as f64), sy(m + se))
            });
            let lower = curve.iter().rev().map(|p| {
                let (m, se) = quantity.get(p);
                format!("{:.2},{:.2}", sx(p.step as f64), sy(m - se))
            });
            let pts: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(s, r#"<polygon class="band" points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, pts.join(" "));
        }
        let pts: Vec<String> = curve
            .iter()
            .map(|p| format!("{:.2},{:.2}", sx(p.step as f64), sy(quantity.get(p).0)))
            .collect();
        let _ = writeln!(s, r#"<polyline class="line" points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, pts.join(" "));
        let ly = TOP + 14.0 + 20.0 * i as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(s, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="3"/>"#, lx + 20.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(label));
    }
    s.push_str("</svg>\n");
    s
}
