//! Minimal deterministic SVG plots: heatmaps on a diverging scale centred at
//! zero, line plots and trajectory overlays.

use std::fmt::Write;

const W: f64 = 480.0;
const H: f64 = 480.0;
const MARGIN: f64 = 60.0;

fn header(w: f64, h: f64, title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        w / 2.0,
        escape(title)
    );
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Blue below zero, white at zero, red above; `t` in `[-1, 1]`.
pub fn diverging(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(-1.0, 1.0) } else { 0.0 };
    let fade = |c: f64| (255.0 - (255.0 - c) * t.abs()).round() as u8;
    let (r, g, b) = if t >= 0.0 {
        (fade(178.0), fade(24.0), fade(43.0))
    } else {
        (fade(33.0), fade(102.0), fade(172.0))
    };
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Axis-aligned plotting window in data coordinates.
#[derive(Debug, Clone, Copy)]
struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x0) / (self.x1 - self.x0) * (W - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        H - MARGIN - (y - self.y0) / (self.y1 - self.y0) * (H - 2.0 * MARGIN)
    }

    fn axes(&self, s: &mut String, xlabel: &str, ylabel: &str) {
        let (l, r, t, b) = (MARGIN, W - MARGIN, MARGIN, H - MARGIN);
        let _ = writeln!(
            s,
            r#"<rect x="{l}" y="{t}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
            r - l,
            b - t
        );
        for k in 0..=4 {
            let f = k as f64 / 4.0;
            let xv = self.x0 + f * (self.x1 - self.x0);
            let yv = self.y0 + f * (self.y1 - self.y0);
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{:.3}</text>"#,
                self.px(xv),
                b + 16.0,
                xv
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{:.3}</text>"#,
                l - 4.0,
                self.py(yv) + 4.0,
                yv
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            W / 2.0,
            H - 16.0,
            escape(xlabel)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            escape(ylabel)
        );
    }
}

fn polyline(s: &mut String, f: &Frame, pts: &[(f64, f64)], color: &str, width: f64) {
    if pts.is_empty() {
        return;
    }
    let mut d = String::new();
    for (k, (x, y)) in pts.iter().enumerate() {
        let _ = write!(d, "{}{:.2},{:.2}", if k == 0 { "" } else { " " }, f.px(*x), f.py(*y));
    }
    let _ = writeln!(
        s,
        r#"<polyline points="{d}" fill="none" stroke="{color}" stroke-width="{width}"/>"#
    );
}

/// Square lattice heatmap. `values` are row-major with the first index along
/// `w1`; invalid cells are drawn grey. Optional paths are overlaid in black.
pub struct Heatmap<'a> {
    pub title: &'a str,
    pub side: usize,
    pub extent: f64,
    pub values: &'a [f64],
    pub valid: &'a [bool],
    pub paths: &'a [Vec<(f64, f64)>],
}

impl Heatmap<'_> {
    pub fn render(&self) -> String {
        let f = Frame {
            x0: -self.extent,
            x1: self.extent,
            y0: -self.extent,
            y1: self.extent,
        };
        let mut s = header(W, H, self.title);
        let scale = self
            .values
            .iter()
            .zip(self.valid)
            .filter(|(v, ok)| **ok && v.is_finite())
            .fold(0.0_f64, |m, (v, _)| m.max(v.abs()));
        let n = self.side.max(2) - 1;
        let step = 2.0 * self.extent / n as f64;
        for i in 0..self.side {
            for j in 0..self.side {
                let idx = i * self.side + j;
                let x = -self.extent + i as f64 * step;
                let y = -self.extent + j as f64 * step;
                let color = if self.valid.get(idx).copied().unwrap_or(false) {
                    diverging(if scale > 0.0 { self.values[idx] / scale } else { 0.0 })
                } else {
                    "#bbbbbb".to_string()
                };
                let x0 = f.px(x - step / 2.0).max(MARGIN);
                let x1 = f.px(x + step / 2.0).min(W - MARGIN);
                let y0 = f.py(y + step / 2.0).max(MARGIN);
                let y1 = f.py(y - step / 2.0).min(H - MARGIN);
                let _ = writeln!(
                    s,
                    r#"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="{color}"/>"#,
                    x1 - x0,
                    y1 - y0
                );
            }
        }
        for p in self.paths {
            polyline(&mut s, &f, p, "black", 2.0);
        }
        f.axes(&mut s, "w1", "w2");
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="44" text-anchor="middle">color scale +/-{:.4e}</text>"#,
            W / 2.0,
            scale
        );
        s.push_str("</svg>\n");
        s
    }
}

const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// Line plot of named series.
pub fn lineplot(title: &str, xlabel: &str, ylabel: &str, series: &[(&str, Vec<(f64, f64)>)]) -> String {
    let pts = series
        .iter()
        .flat_map(|(_, p)| p.iter())
        .filter(|(x, y)| x.is_finite() && y.is_finite());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (x, y) in pts {
        x0 = x0.min(*x);
        x1 = x1.max(*x);
        y0 = y0.min(*y);
        y1 = y1.max(*y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 <= x0 {
        x1 = x0 + 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 1.0;
    }
    let pad = 0.05 * (y1 - y0);
    let f = Frame {
        x0,
        x1,
        y0: y0 - pad,
        y1: y1 + pad,
    };
    let mut s = header(W, H, title);
    for (k, (name, p)) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        polyline(&mut s, &f, p, color, 1.5);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" fill="{color}">{}</text>"#,
            MARGIN + 8.0,
            MARGIN + 16.0 * (k + 1) as f64,
            escape(name)
        );
    }
    f.axes(&mut s, xlabel, ylabel);
    s.push_str("</svg>\n");
    s
}

/// World-frame view of circles and polylines (obstacles and body outlines).
pub fn world(title: &str, circles: &[(f64, f64, f64)], lines: &[Vec<(f64, f64)>], walls: Option<f64>) -> String {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for l in lines {
        for (x, y) in l {
            x0 = x0.min(*x);
            x1 = x1.max(*x);
            y0 = y0.min(*y);
            y1 = y1.max(*y);
        }
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (-1.0, 1.0, -1.0, 1.0);
    }
    // square window around the body motion with some margin
    let half = 0.5 * (x1 - x0).max(y1 - y0) + 0.3;
    let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
    let f = Frame {
        x0: cx - half,
        x1: cx + half,
        y0: cy - half,
        y1: cy + half,
    };
    let mut s = header(W, H, title);
    let k = (W - 2.0 * MARGIN) / (2.0 * half);
    for &(x, y, r) in circles {
        if (x - cx).abs() > half + r || (y - cy).abs() > half + r {
            continue;
        }
        let _ = writeln!(
            s,
            r##"<circle cx="{:.2}" cy="{:.2}" r="{:.2}" fill="#555555"/>"##,
            f.px(x),
            f.py(y),
            (r * k).max(1.0)
        );
    }
    if let Some(gap) = walls {
        for y in [gap / 2.0, -gap / 2.0] {
            polyline(&mut s, &f, &[(f.x0, y), (f.x1, y)], "#555555", 3.0);
        }
    }
    for (i, l) in lines.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        polyline(&mut s, &f, l, color, 1.0);
    }
    f.axes(&mut s, "x (BL)", "y (BL)");
    s.push_str("</svg>\n");
    s
}
