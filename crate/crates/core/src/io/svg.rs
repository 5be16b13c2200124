use std::fmt::Write;
use std::path::Path;

use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinePlot {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub title: String,
    pub x_label: String,
    pub values: Vec<f64>,
    pub bins: usize,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn new(x: (f64, f64), y: (f64, f64)) -> Self {
        let widen = |(lo, hi): (f64, f64)| if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        Frame { x: widen(x), y: widen(y) }
    }

    fn px(&self, x: f64) -> f64 {
        MARGIN + (x - self.x.0) / (self.x.1 - self.x.0) * (WIDTH - 2.0 * MARGIN)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - MARGIN - (y - self.y.0) / (self.y.1 - self.y.0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn open(out: &mut String, title: &str, x_label: &str, y_label: &str, frame: &Frame) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(out, r#"<path d="M{l},{t} L{l},{b} L{r},{b}" fill="none" stroke="black"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, WIDTH / 2.0, HEIGHT - 14.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    for (v, anchor) in [(frame.x.0, "start"), (frame.x.1, "end")] {
        let _ = writeln!(out, r#"<text x="{:.2}" y="{}" text-anchor="{anchor}">{v:.3}</text>"#, frame.px(v), b + 16.0);
    }
    for v in [frame.y.0, frame.y.1] {
        let _ = writeln!(out, r#"<text x="{}" y="{:.2}" text-anchor="end">{v:.3}</text>"#, l - 4.0, frame.py(v) + 4.0);
    }
}

fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.filter(|v| v.is_finite()).fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)))
}

impl LinePlot {
    pub fn render(&self) -> Result<String> {
        let all = || self.series.iter().flat_map(|s| s.points.iter());
        if all().next().is_none() {
            return Err(Error::config("output", format!("plot `{}` has no points", self.title)));
        }
        let frame = Frame::new(range(all().map(|p| p.0)), range(all().map(|p| p.1)));
        let mut out = String::new();
        open(&mut out, &self.title, &self.x_label, &self.y_label, &frame);
        for (k, s) in self.series.iter().enumerate() {
            let colour = PALETTE[k % PALETTE.len()];
            let pts: Vec<String> = s
                .points
                .iter()
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .map(|&(x, y)| format!("{:.2},{:.2}", frame.px(x), frame.py(y)))
                .collect();
            let _ = writeln!(
                out,
                r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="1.2" stroke-opacity="0.8"><title>{}</title></polyline>"#,
                pts.join(" "),
                escape(&s.label)
            );
        }
        if self.series.len() <= PALETTE.len() {
            for (k, s) in self.series.iter().enumerate() {
                let y = MARGIN + 14.0 * k as f64;
                let _ = writeln!(
                    out,
                    r#"<text x="{}" y="{y}" text-anchor="end" fill="{}">{}</text>"#,
                    WIDTH - MARGIN,
                    PALETTE[k],
                    escape(&s.label)
                );
            }
        }
        out.push_str("</svg>\n");
        Ok(out)
    }
}

impl Histogram {
    pub fn counts(&self) -> (f64, f64, Vec<usize>) {
        let (lo, hi) = range(self.values.iter().copied());
        let bins = self.bins.max(1);
        let mut counts = vec![0; bins];
        let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
        for v in self.values.iter().filter(|v| v.is_finite()) {
            let k = (((v - lo) / width) as usize).min(bins - 1);
            counts[k] += 1;
        }
        (lo, lo + width * bins as f64, counts)
    }

    pub fn render(&self) -> Result<String> {
        if !self.values.iter().any(|v| v.is_finite()) {
            return Err(Error::config("output", format!("histogram `{}` has no finite values", self.title)));
        }
        let (lo, hi, counts) = self.counts();
        let top = *counts.iter().max().expect("at least one bin") as f64;
        let frame = Frame::new((lo, hi), (0.0, top));
        let mut out = String::new();
        open(&mut out, &self.title, &self.x_label, "count", &frame);
        let w = (hi - lo) / counts.len() as f64;
        for (k, &c) in counts.iter().enumerate() {
            let x0 = frame.px(lo + w * k as f64);
            let x1 = frame.px(lo + w * (k + 1) as f64);
            let y = frame.py(c as f64);
            let _ = writeln!(
                out,
                r##"<rect x="{x0:.2}" y="{y:.2}" width="{:.2}" height="{:.2}" fill="#1f77b4" stroke="white"/>"##,
                x1 - x0,
                frame.py(0.0) - y
            );
        }
        out.push_str("</svg>\n");
        Ok(out)
    }
}

pub fn write_svg(path: &Path, svg: &str) -> Result<()> {
    std::fs::write(path, svg).map_err(|e| Error::io(path, e))
}
