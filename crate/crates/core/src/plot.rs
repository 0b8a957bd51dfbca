//! Figure output as PNG and PDF from one display list.
//!
//! Coordinates are in points with the origin at the top-left corner. The PNG
//! backend rasterizes at one pixel per point with a built-in 3×5 bitmap font;
//! the PDF backend emits vector paths and the standard Helvetica font. Neither
//! backend embeds timestamps, so output bytes depend only on the input.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use crate::dataset::Frame;
use crate::latent_ode::LatentTrajectory;
use crate::metrics::{MeanStd, NormBreakdown};

pub type Rgb = [u8; 3];

pub const BLACK: Rgb = [0, 0, 0];
pub const WHITE: Rgb = [255, 255, 255];
pub const GREY: Rgb = [200, 200, 200];
pub const BLUE: Rgb = [31, 119, 180];
pub const LIGHT_BLUE: Rgb = [174, 199, 232];
pub const ORANGE: Rgb = [255, 127, 14];
pub const LIGHT_ORANGE: Rgb = [255, 187, 120];
pub const EVENT: Rgb = [250, 225, 225];

#[derive(Clone, Debug, PartialEq)]
pub enum Item {
    Rect { x: f64, y: f64, w: f64, h: f64, fill: Rgb },
    Polyline { points: Vec<(f64, f64)>, color: Rgb, width: f64 },
    Polygon { points: Vec<(f64, f64)>, fill: Rgb },
    Text { x: f64, y: f64, size: f64, text: String, color: Rgb },
    /// Row-major grayscale values in `[0, 1]` drawn into a box.
    Gray { x: f64, y: f64, w: f64, h: f64, cols: usize, values: Vec<f64> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Figure {
    pub width: usize,
    pub height: usize,
    pub items: Vec<Item>,
}

impl Figure {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, items: vec![Item::Rect { x: 0.0, y: 0.0, w: width as f64, h: height as f64, fill: WHITE }] }
    }

    pub fn text(&mut self, x: f64, y: f64, size: f64, text: impl Into<String>) {
        self.items.push(Item::Text { x, y, size, text: text.into(), color: BLACK });
    }
}

/// Maps data coordinates into a plot box.
#[derive(Clone, Copy, Debug)]
struct Axes {
    x: f64,
    y: f64,
    w: f64,
    h: f64,
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Axes {
    fn px(&self, v: f64) -> f64 {
        self.x + (v - self.x0) / (self.x1 - self.x0) * self.w
    }

    fn py(&self, v: f64) -> f64 {
        self.y + self.h - (v - self.y0) / (self.y1 - self.y0) * self.h
    }

    fn frame(&self, fig: &mut Figure, y_label: &str) {
        let (l, r, t, b) = (self.x, self.x + self.w, self.y, self.y + self.h);
        fig.items.push(Item::Polyline { points: vec![(l, t), (l, b), (r, b)], color: BLACK, width: 1.0 });
        fig.text(l - 34.0, t + 4.0, 8.0, fmt_tick(self.y1));
        fig.text(l - 34.0, b, 8.0, fmt_tick(self.y0));
        fig.text(l + 2.0, t - 6.0, 9.0, y_label);
    }

    fn time_ticks(&self, fig: &mut Figure, n: usize) {
        for t in 0..n {
            let x = self.px(t as f64);
            let b = self.y + self.h;
            fig.items.push(Item::Polyline { points: vec![(x, b), (x, b + 3.0)], color: BLACK, width: 1.0 });
            fig.text(x - 2.0, b + 13.0, 8.0, t.to_string());
        }
    }
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn y_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn band(fig: &mut Figure, ax: &Axes, series: &[MeanStd], fill: Rgb, line: Rgb) {
    let n = series.len();
    let mut pts: Vec<(f64, f64)> = (0..n).map(|t| (ax.px(t as f64), ax.py(series[t].mean + series[t].std))).collect();
    pts.extend((0..n).rev().map(|t| (ax.px(t as f64), ax.py(series[t].mean - series[t].std))));
    fig.items.push(Item::Polygon { points: pts, fill });
    let mean: Vec<(f64, f64)> = (0..n).map(|t| (ax.px(t as f64), ax.py(series[t].mean))).collect();
    fig.items.push(Item::Polyline { points: mean, color: line, width: 1.5 });
}

/// Latent-norm bands over time with highlighted event windows, above the
/// reconstruction and ground-truth strips.
pub fn norm_overlay(
    title: &str,
    velocity: &[MeanStd],
    accel: &[MeanStd],
    windows: &[usize],
    recon: &[Vec<f64>],
    truth: &[Frame],
) -> Figure {
    let n = velocity.len().max(1);
    let mut fig = Figure::new(640, 480);
    fig.text(20.0, 20.0, 11.0, title);
    let (x0, x1) = (-0.5, n as f64 - 0.5);
    let plots = [("|v_t|", velocity, LIGHT_BLUE, BLUE, 40.0), ("|f_W(s_t,v_t)|", accel, LIGHT_ORANGE, ORANGE, 170.0)];
    for (label, series, light, dark, top) in plots {
        let (y0, y1) = y_range(series.iter().flat_map(|m| [m.mean - m.std, m.mean + m.std]));
        let ax = Axes { x: 60.0, y: top, w: 560.0, h: 100.0, x0, x1, y0, y1 };
        for &t in windows {
            fig.items.push(Item::Rect { x: ax.px(t as f64 - 0.5), y: ax.y, w: ax.w / n as f64, h: ax.h, fill: EVENT });
        }
        band(&mut fig, &ax, series, light, dark);
        ax.frame(&mut fig, label);
        ax.time_ticks(&mut fig, n);
    }
    let cell = (560.0 / n as f64).min(60.0);
    let rows = [("model", recon.to_vec(), 310.0), ("data", truth.iter().map(|f| f.pixels.iter().map(|&p| p as f64).collect()).collect(), 310.0 + cell + 10.0)];
    for (label, frames, top) in rows {
        fig.text(8.0, top + cell / 2.0, 8.0, label);
        for (t, f) in frames.iter().enumerate() {
            let cols = (f.len() as f64).sqrt() as usize;
            fig.items.push(Item::Gray { x: 60.0 + t as f64 * (560.0 / n as f64), y: top, w: cell - 2.0, h: cell - 2.0, cols, values: f.clone() });
        }
    }
    fig
}

/// Event versus other-time mean±std bars for both latent norms.
pub fn breakdown_bars(title: &str, velocity: &NormBreakdown, accel: &NormBreakdown) -> Figure {
    let mut fig = Figure::new(480, 360);
    fig.text(20.0, 20.0, 11.0, title);
    let groups = [("|v|", velocity), ("|f_W|", accel)];
    for (g, (label, bd)) in groups.iter().enumerate() {
        let stats = [bd.event.stats, bd.non_event.stats];
        let hi = stats.iter().flatten().map(|s| s.mean + s.std).fold(0.0, f64::max).max(1e-9) * 1.1;
        let ax = Axes { x: 60.0 + g as f64 * 220.0, y: 60.0, w: 180.0, h: 240.0, x0: 0.0, x1: 2.0, y0: 0.0, y1: hi };
        for (k, (stat, color, name)) in [(stats[0], ORANGE, "event"), (stats[1], BLUE, "other")].into_iter().enumerate() {
            let xl = ax.px(k as f64 + 0.2);
            let xr = ax.px(k as f64 + 0.8);
            match stat {
                Some(s) => {
                    fig.items.push(Item::Rect { x: xl, y: ax.py(s.mean), w: xr - xl, h: ax.py(0.0) - ax.py(s.mean), fill: color });
                    let xm = (xl + xr) / 2.0;
                    fig.items.push(Item::Polyline {
                        points: vec![(xm, ax.py((s.mean - s.std).max(0.0))), (xm, ax.py(s.mean + s.std))],
                        color: BLACK,
                        width: 1.0,
                    });
                }
                None => fig.text(xl, ax.py(0.0) - 10.0, 8.0, "empty"),
            }
            fig.text(xl, ax.y + ax.h + 14.0, 9.0, name);
        }
        ax.frame(&mut fig, label);
    }
    fig
}

/// One small panel per latent dimension with every sampled trajectory of `s`.
pub fn latent_panel(title: &str, trajectories: &[LatentTrajectory<f64>]) -> Figure {
    let a = trajectories.first().map_or(0, |t| t.states.first().map_or(0, |s| s.s.len()));
    let n = trajectories.first().map_or(0, |t| t.states.len());
    let cols = a.clamp(1, 3);
    let rows = a.div_ceil(cols).max(1);
    let mut fig = Figure::new(640, 40 + rows * 150);
    fig.text(20.0, 20.0, 11.0, title);
    let pw = 600.0 / cols as f64;
    for d in 0..a {
        let (r, c) = (d / cols, d % cols);
        let (y0, y1) = y_range(trajectories.iter().flat_map(|tr| tr.states.iter().map(move |s| s.s[d])));
        let ax = Axes {
            x: 50.0 + c as f64 * pw,
            y: 50.0 + r as f64 * 150.0,
            w: pw - 60.0,
            h: 100.0,
            x0: 0.0,
            x1: (n.max(2) - 1) as f64,
            y0,
            y1,
        };
        for tr in trajectories {
            let pts = tr.states.iter().enumerate().map(|(t, s)| (ax.px(t as f64), ax.py(s.s[d]))).collect();
            fig.items.push(Item::Polyline { points: pts, color: BLUE, width: 1.0 });
        }
        ax.frame(&mut fig, &format!("s[{d}]"));
        ax.time_ticks(&mut fig, n);
    }
    fig
}

// ---- PNG backend ----

const GLYPHS: &[(char, [u8; 5])] = &[
    ('0', [7, 5, 5, 5, 7]),
    ('1', [2, 6, 2, 2, 7]),
    ('2', [7, 1, 7, 4, 7]),
    ('3', [7, 1, 7, 1, 7]),
    ('4', [5, 5, 7, 1, 1]),
    ('5', [7, 4, 7, 1, 7]),
    ('6', [7, 4, 7, 5, 7]),
    ('7', [7, 1, 1, 1, 1]),
    ('8', [7, 5, 7, 5, 7]),
    ('9', [7, 5, 7, 1, 7]),
    ('A', [2, 5, 7, 5, 5]),
    ('B', [6, 5, 6, 5, 6]),
    ('C', [3, 4, 4, 4, 3]),
    ('D', [6, 5, 5, 5, 6]),
    ('E', [7, 4, 6, 4, 7]),
    ('F', [7, 4, 6, 4, 4]),
    ('G', [3, 4, 5, 5, 3]),
    ('H', [5, 5, 7, 5, 5]),
    ('I', [7, 2, 2, 2, 7]),
    ('J', [1, 1, 1, 5, 2]),
    ('K', [5, 5, 6, 5, 5]),
    ('L', [4, 4, 4, 4, 7]),
    ('M', [5, 7, 7, 5, 5]),
    ('N', [6, 5, 5, 5, 5]),
    ('O', [2, 5, 5, 5, 2]),
    ('P', [6, 5, 6, 4, 4]),
    ('Q', [2, 5, 5, 6, 3]),
    ('R', [6, 5, 6, 5, 5]),
    ('S', [3, 4, 2, 1, 6]),
    ('T', [7, 2, 2, 2, 2]),
    ('U', [5, 5, 5, 5, 7]),
    ('V', [5, 5, 5, 5, 2]),
    ('W', [5, 5, 7, 7, 5]),
    ('X', [5, 5, 2, 5, 5]),
    ('Y', [5, 5, 2, 2, 2]),
    ('Z', [7, 1, 2, 4, 7]),
    ('.', [0, 0, 0, 0, 2]),
    (',', [0, 0, 0, 2, 4]),
    ('-', [0, 0, 7, 0, 0]),
    ('+', [0, 2, 7, 2, 0]),
    ('=', [0, 7, 0, 7, 0]),
    (':', [0, 2, 0, 2, 0]),
    ('|', [2, 2, 2, 2, 2]),
    ('(', [1, 2, 2, 2, 1]),
    (')', [4, 2, 2, 2, 4]),
    ('[', [3, 2, 2, 2, 3]),
    (']', [6, 2, 2, 2, 6]),
    ('/', [1, 1, 2, 4, 4]),
    ('_', [0, 0, 0, 0, 7]),
    ('±', [2, 7, 2, 0, 7]),
];

fn glyph(c: char) -> [u8; 5] {
    let c = c.to_ascii_uppercase();
    GLYPHS.iter().find(|(g, _)| *g == c).map_or([0; 5], |(_, b)| *b)
}

struct Raster {
    w: usize,
    h: usize,
    px: Vec<u8>,
}

impl Raster {
    fn set(&mut self, x: i64, y: i64, c: Rgb) {
        if x >= 0 && y >= 0 && (x as usize) < self.w && (y as usize) < self.h {
            let i = 3 * (y as usize * self.w + x as usize);
            self.px[i..i + 3].copy_from_slice(&c);
        }
    }

    fn rect(&mut self, x: f64, y: f64, w: f64, h: f64, c: Rgb) {
        let (x0, y0) = (x.round() as i64, y.round() as i64);
        let (x1, y1) = ((x + w).round() as i64, (y + h).round() as i64);
        for yy in y0..y1 {
            for xx in x0..x1 {
                self.set(xx, yy, c);
            }
        }
    }

    fn line(&mut self, (ax, ay): (f64, f64), (bx, by): (f64, f64), width: f64, c: Rgb) {
        let steps = ((bx - ax).abs().max((by - ay).abs()).ceil() as usize).max(1);
        let r = ((width - 1.0) / 2.0).max(0.0).round() as i64;
        for k in 0..=steps {
            let t = k as f64 / steps as f64;
            let (x, y) = ((ax + t * (bx - ax)).round() as i64, (ay + t * (by - ay)).round() as i64);
            for dy in -r..=r {
                for dx in -r..=r {
                    self.set(x + dx, y + dy, c);
                }
            }
        }
    }

    /// Even-odd scanline fill sampled at pixel centers.
    fn polygon(&mut self, pts: &[(f64, f64)], c: Rgb) {
        if pts.len() < 3 {
            return;
        }
        let (ymin, ymax) = pts.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.1), hi.max(p.1)));
        for y in ymin.floor().max(0.0) as i64..=ymax.ceil().min(self.h as f64) as i64 {
            let yc = y as f64 + 0.5;
            let mut xs = Vec::new();
            for i in 0..pts.len() {
                let (p, q) = (pts[i], pts[(i + 1) % pts.len()]);
                if (p.1 <= yc) != (q.1 <= yc) {
                    xs.push(p.0 + (yc - p.1) / (q.1 - p.1) * (q.0 - p.0));
                }
            }
            xs.sort_by(|a, b| a.total_cmp(b));
            for pair in xs.chunks_exact(2) {
                for x in (pair[0] - 0.5).ceil() as i64..=(pair[1] - 0.5).floor() as i64 {
                    self.set(x, y, c);
                }
            }
        }
    }

    fn text(&mut self, x: f64, y: f64, size: f64, text: &str, c: Rgb) {
        let scale = ((size / 6.0).round() as i64).max(1);
        let top = y.round() as i64 - 5 * scale;
        let mut cx = x.round() as i64;
        for ch in text.chars() {
            let g = glyph(ch);
            for (row, bits) in g.iter().enumerate() {
                for col in 0..3 {
                    if bits & (4 >> col) != 0 {
                        for dy in 0..scale {
                            for dx in 0..scale {
                                self.set(cx + col * scale + dx, top + row as i64 * scale + dy, c);
                            }
                        }
                    }
                }
            }
            cx += 4 * scale;
        }
    }
}

pub fn render_png(fig: &Figure) -> Vec<u8> {
    let mut r = Raster { w: fig.width, h: fig.height, px: vec![255; 3 * fig.width * fig.height] };
    for item in &fig.items {
        match item {
            Item::Rect { x, y, w, h, fill } => r.rect(*x, *y, *w, *h, *fill),
            Item::Polyline { points, color, width } => {
                for seg in points.windows(2) {
                    r.line(seg[0], seg[1], *width, *color);
                }
            }
            Item::Polygon { points, fill } => r.polygon(points, *fill),
            Item::Text { x, y, size, text, color } => r.text(*x, *y, *size, text, *color),
            Item::Gray { x, y, w, h, cols, values } => {
                let rows = values.len() / (*cols).max(1);
                let (cw, ch) = (w / *cols as f64, h / rows.max(1) as f64);
                for (i, v) in values.iter().enumerate() {
                    let g = 255 - (v.clamp(0.0, 1.0) * 255.0).round() as u8;
                    let (row, col) = (i / cols, i % cols);
                    r.rect(x + col as f64 * cw, y + row as f64 * ch, cw, ch, [g, g, g]);
                }
            }
        }
    }
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(BufWriter::new(&mut out), fig.width as u32, fig.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header().expect("png header");
        writer.write_image_data(&r.px).expect("png data");
    }
    out
}

// ---- PDF backend ----

fn pdf_color(c: Rgb) -> String {
    format!("{:.3} {:.3} {:.3}", c[0] as f64 / 255.0, c[1] as f64 / 255.0, c[2] as f64 / 255.0)
}

fn pdf_text(s: &str) -> String {
    s.chars()
        .map(|c| match c {
            '(' | ')' | '\\' => format!("\\{c}"),
            '±' => "\\261".into(),
            c if c.is_ascii() && !c.is_ascii_control() => c.to_string(),
            _ => "?".into(),
        })
        .collect()
}

pub fn render_pdf(fig: &Figure) -> Vec<u8> {
    let h = fig.height as f64;
    let mut cs = String::new();
    for item in &fig.items {
        match item {
            Item::Rect { x, y, w, h: rh, fill } => {
                let _ = writeln!(cs, "{} rg {:.2} {:.2} {:.2} {:.2} re f", pdf_color(*fill), x, h - y - rh, w, rh);
            }
            Item::Polyline { points, color, width } => {
                if let Some((first, rest)) = points.split_first() {
                    let _ = write!(cs, "{} RG {:.2} w {:.2} {:.2} m", pdf_color(*color), width, first.0, h - first.1);
                    for p in rest {
                        let _ = write!(cs, " {:.2} {:.2} l", p.0, h - p.1);
                    }
                    cs.push_str(" S\n");
                }
            }
            Item::Polygon { points, fill } => {
                if let Some((first, rest)) = points.split_first() {
                    let _ = write!(cs, "{} rg {:.2} {:.2} m", pdf_color(*fill), first.0, h - first.1);
                    for p in rest {
                        let _ = write!(cs, " {:.2} {:.2} l", p.0, h - p.1);
                    }
                    cs.push_str(" h f\n");
                }
            }
            Item::Text { x, y, size, text, color } => {
                let _ = writeln!(cs, "{} rg BT /F1 {:.1} Tf {:.2} {:.2} Td ({}) Tj ET", pdf_color(*color), size, x, h - y, pdf_text(text));
            }
            Item::Gray { x, y, w, h: gh, cols, values } => {
                let rows = values.len() / (*cols).max(1);
                let (cw, ch) = (w / *cols as f64, gh / rows.max(1) as f64);
                for (i, v) in values.iter().enumerate() {
                    let g = 1.0 - v.clamp(0.0, 1.0);
                    let (row, col) = (i / cols, i % cols);
                    let _ = writeln!(cs, "{g:.3} g {:.2} {:.2} {:.2} {:.2} re f", x + col as f64 * cw, h - (y + (row + 1) as f64 * ch), cw, ch);
                }
            }
        }
    }
    let objects = [
        "<< /Type /Catalog /Pages 2 0 R >>".to_string(),
        "<< /Type /Pages /Kids [3 0 R] /Count 1 >>".to_string(),
        format!(
            "<< /Type /Page /Parent 2 0 R /MediaBox [0 0 {} {}] /Contents 4 0 R /Resources << /Font << /F1 5 0 R >> >> >>",
            fig.width, fig.height
        ),
        format!("<< /Length {} >>\nstream\n{}endstream", cs.len(), cs),
        "<< /Type /Font /Subtype /Type1 /BaseFont /Helvetica /Encoding /WinAnsiEncoding >>".to_string(),
    ];
    let mut out = b"%PDF-1.4\n".to_vec();
    let mut offsets = Vec::new();
    for (i, obj) in objects.iter().enumerate() {
        offsets.push(out.len());
        out.extend_from_slice(format!("{} 0 obj\n{}\nendobj\n", i + 1, obj).as_bytes());
    }
    let xref = out.len();
    let mut tail = format!("xref\n0 {}\n0000000000 65535 f \n", objects.len() + 1);
    for o in offsets {
        let _ = writeln!(tail, "{o:010} 00000 n ");
    }
    let _ = write!(tail, "trailer\n<< /Size {} /Root 1 0 R >>\nstartxref\n{}\n%%EOF\n", objects.len() + 1, xref);
    out.extend_from_slice(tail.as_bytes());
    out
}

/// Writes `<stem>.pdf` and `<stem>.png` into `dir`.
pub fn write_figure(fig: &Figure, dir: &Path, stem: &str) -> std::io::Result<[PathBuf; 2]> {
    fs::create_dir_all(dir)?;
    let pdf = dir.join(format!("{stem}.pdf"));
    let png = dir.join(format!("{stem}.png"));
    fs::write(&pdf, render_pdf(fig))?;
    fs::write(&png, render_png(fig))?;
    Ok([pdf, png])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::GroupStats;

    fn sample_figure() -> Figure {
        let v: Vec<MeanStd> = (0..10).map(|t| MeanStd { mean: t as f64 * 0.1, std: 0.05 }).collect();
        let f: Vec<MeanStd> = (0..10).map(|t| MeanStd { mean: if t == 4 { 2.0 } else { 0.3 }, std: 0.1 }).collect();
        let frames: Vec<Frame> = (0..10).map(|_| Frame::zeros(8)).collect();
        let recon: Vec<Vec<f64>> = (0..10).map(|t| vec![t as f64 / 10.0; 64]).collect();
        norm_overlay("bouncing1 case 0", &v, &f, &[3, 4, 5], &recon, &frames)
    }

    #[test]
    fn outputs_are_deterministic_and_well_formed() {
        let fig = sample_figure();
        let (a, b) = (render_png(&fig), render_png(&fig));
        assert_eq!(a, b);
        assert_eq!(&a[1..4], b"PNG");
        let pdf = render_pdf(&fig);
        assert_eq!(pdf, render_pdf(&fig));
        assert!(pdf.starts_with(b"%PDF-1.4"));
        assert!(pdf.ends_with(b"%%EOF\n"));
        let text = String::from_utf8_lossy(&pdf);
        let startxref: usize = text.rsplit("startxref\n").next().unwrap().lines().next().unwrap().parse().unwrap();
        assert_eq!(&pdf[startxref..startxref + 4], b"xref");
    }

    #[test]
    fn empty_group_still_renders() {
        let empty = GroupStats { count: 0, stats: None, empty: true };
        let full = GroupStats { count: 3, stats: Some(MeanStd { mean: 1.0, std: 0.2 }), empty: false };
        let bd = NormBreakdown { event: full.clone(), non_event: empty };
        let fig = breakdown_bars("t", &bd, &bd);
        assert!(!render_png(&fig).is_empty());
        assert!(fig.items.iter().any(|i| matches!(i, Item::Text { text, .. } if text == "empty")));
    }

    #[test]
    fn polygon_fill_covers_interior() {
        let mut r = Raster { w: 10, h: 10, px: vec![255; 300] };
        r.polygon(&[(1.0, 1.0), (9.0, 1.0), (9.0, 9.0), (1.0, 9.0)], BLACK);
        assert_eq!(r.px[3 * (5 * 10 + 5)], 0);
        assert_eq!(r.px[0], 255);
    }
}
