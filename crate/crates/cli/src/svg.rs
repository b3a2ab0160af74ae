//! Minimal log-log scatter plots.

use std::fmt::Write;

const W: f64 = 480.0;
const H: f64 = 360.0;
const PAD: f64 = 48.0;

/// Scatter of the positive `(x, y)` pairs on log-log axes, with an optional
/// line `log y = slope·log x + intercept` drawn across `window`.
pub fn loglog(title: &str, points: &[(f64, f64)], line: Option<(f64, f64, (f64, f64))>) -> String {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.log10(), y.log10()))
        .collect();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(x, y) in &pts {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if pts.is_empty() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-9 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-9 {
        y1 = y0 + 1.0;
    }
    let sx = |x: f64| PAD + (x - x0) / (x1 - x0) * (W - 2.0 * PAD);
    let sy = |y: f64| H - PAD - (y - y0) / (y1 - y0) * (H - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{PAD},{PAD} V{} H{}" fill="none" stroke="black"/>"#,
        H - PAD,
        W - PAD
    );
    let _ = writeln!(s, r#"<text x="{PAD}" y="20">{}</text>"#, escape(title));
    let _ = writeln!(
        s,
        r#"<text x="{PAD}" y="{}">log10 x: {x0:.2} .. {x1:.2}</text>"#,
        H - 16.0
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}">log10 y: {y0:.2} .. {y1:.2}</text>"#,
        W / 2.0,
        H - 16.0
    );
    for &(x, y) in &pts {
        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="steelblue"/>"#, sx(x), sy(y));
    }
    if let Some((slope, intercept, (lo, hi))) = line {
        let (a, b) = (lo.log10(), hi.log10());
        let ln10 = std::f64::consts::LN_10;
        // the fit is in natural logs; convert the intercept
        let y = |x: f64| slope * x + intercept / ln10;
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="firebrick" stroke-width="1.5"/>"#,
            sx(a),
            sy(y(a)),
            sx(b),
            sy(y(b))
        );
        let _ = writeln!(s, r#"<text x="{}" y="20">slope {slope:.4}</text>"#, W - 140.0);
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
