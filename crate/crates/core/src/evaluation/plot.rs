//! Minimal PNG charts: grouped bars and lines with a built-in 5×7 font.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::{Error, Result};

const WHITE: Rgb<u8> = Rgb([255, 255, 255]);
const BLACK: Rgb<u8> = Rgb([0, 0, 0]);
const GRID: Rgb<u8> = Rgb([225, 225, 225]);
const PALETTE: [Rgb<u8>; 6] = [
    Rgb([31, 119, 180]),
    Rgb([255, 127, 14]),
    Rgb([44, 160, 44]),
    Rgb([214, 39, 40]),
    Rgb([148, 103, 189]),
    Rgb([140, 86, 75]),
];

/// A named sequence of values: one per group (bars) or per x position (lines).
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub values: Vec<f64>,
}

fn glyph(c: char) -> [u8; 7] {
    match c.to_ascii_uppercase() {
        '0' => [0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E],
        '1' => [0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E],
        '2' => [0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F],
        '3' => [0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E],
        '4' => [0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02],
        '5' => [0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E],
        '6' => [0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E],
        '7' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08],
        '8' => [0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E],
        '9' => [0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C],
        'A' => [0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'B' => [0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E],
        'C' => [0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E],
        'D' => [0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C],
        'E' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F],
        'F' => [0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10],
        'G' => [0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F],
        'H' => [0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11],
        'I' => [0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E],
        'J' => [0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C],
        'K' => [0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11],
        'L' => [0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F],
        'M' => [0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11],
        'N' => [0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11],
        'O' => [0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'P' => [0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10],
        'Q' => [0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D],
        'R' => [0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11],
        'S' => [0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E],
        'T' => [0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04],
        'U' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E],
        'V' => [0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04],
        'W' => [0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A],
        'X' => [0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11],
        'Y' => [0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04],
        'Z' => [0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F],
        '.' => [0, 0, 0, 0, 0, 0x0C, 0x0C],
        '-' => [0, 0, 0, 0x1F, 0, 0, 0],
        '=' => [0, 0, 0x1F, 0, 0x1F, 0, 0],
        '(' => [0x02, 0x04, 0x08, 0x08, 0x08, 0x04, 0x02],
        ')' => [0x08, 0x04, 0x02, 0x02, 0x02, 0x04, 0x08],
        ',' => [0, 0, 0, 0, 0x0C, 0x04, 0x08],
        '/' => [0, 0x01, 0x02, 0x04, 0x08, 0x10, 0],
        ':' => [0, 0x0C, 0x0C, 0, 0x0C, 0x0C, 0],
        '_' => [0, 0, 0, 0, 0, 0, 0x1F],
        '+' => [0, 0x04, 0x04, 0x1F, 0x04, 0x04, 0],
        _ => [0; 7],
    }
}

struct Canvas {
    img: RgbImage,
}

impl Canvas {
    fn new(w: u32, h: u32) -> Self {
        Self { img: RgbImage::from_pixel(w, h, WHITE) }
    }

    fn put(&mut self, x: i64, y: i64, c: Rgb<u8>) {
        if x >= 0 && y >= 0 && (x as u32) < self.img.width() && (y as u32) < self.img.height() {
            self.img.put_pixel(x as u32, y as u32, c);
        }
    }

    fn rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, c: Rgb<u8>) {
        for y in y0.min(y1)..=y0.max(y1) {
            for x in x0.min(x1)..=x0.max(x1) {
                self.put(x, y, c);
            }
        }
    }

    fn line(&mut self, (x0, y0): (i64, i64), (x1, y1): (i64, i64), c: Rgb<u8>, width: i64) {
        let steps = (x1 - x0).abs().max((y1 - y0).abs()).max(1);
        for s in 0..=steps {
            let x = x0 + (x1 - x0) * s / steps;
            let y = y0 + (y1 - y0) * s / steps;
            self.rect(x - width / 2, y - width / 2, x + (width - 1) / 2, y + (width - 1) / 2, c);
        }
    }

    fn char_at(&mut self, ch: char, x: i64, y: i64, scale: i64, c: Rgb<u8>) {
        for (row, bits) in glyph(ch).iter().enumerate() {
            for col in 0..5 {
                if bits & (0x10 >> col) != 0 {
                    let (px, py) = (x + col * scale, y + row as i64 * scale);
                    self.rect(px, py, px + scale - 1, py + scale - 1, c);
                }
            }
        }
    }

    fn text(&mut self, s: &str, x: i64, y: i64, scale: i64, c: Rgb<u8>) {
        for (i, ch) in s.chars().enumerate() {
            self.char_at(ch, x + i as i64 * 6 * scale, y, scale, c);
        }
    }

    /// Characters stacked top to bottom.
    fn text_vertical(&mut self, s: &str, x: i64, y: i64, scale: i64, c: Rgb<u8>) {
        for (i, ch) in s.chars().enumerate() {
            self.char_at(ch, x, y + i as i64 * 8 * scale, scale, c);
        }
    }

    fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        self.img
            .save_with_format(path, image::ImageFormat::Png)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))
    }
}

fn text_width(s: &str, scale: i64) -> i64 {
    s.chars().count() as i64 * 6 * scale
}

/// Value range rounded outward to multiples of 5.
fn axis_range(series: &[Series], floor_at_zero: bool) -> (f64, f64) {
    let finite = series.iter().flat_map(|s| &s.values).copied().filter(|v| v.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 5.0);
    }
    let lo = if floor_at_zero { lo.min(0.0) } else { lo };
    let (lo, hi) = ((lo / 5.0).floor() * 5.0, (hi / 5.0).ceil() * 5.0);
    if hi > lo {
        (lo, hi)
    } else {
        (lo, lo + 5.0)
    }
}

struct Frame {
    left: i64,
    top: i64,
    right: i64,
    bottom: i64,
    lo: f64,
    hi: f64,
}

impl Frame {
    fn y(&self, v: f64) -> i64 {
        let t = ((v - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0);
        self.bottom - (t * (self.bottom - self.top) as f64).round() as i64
    }

    fn draw_axes(&self, canvas: &mut Canvas, y_label: &str) {
        let step = if self.hi - self.lo > 40.0 { 10.0 } else { 5.0 };
        let mut v = self.lo;
        while v <= self.hi + 1e-9 {
            let y = self.y(v);
            canvas.line((self.left, y), (self.right, y), GRID, 1);
            let label = format!("{v}");
            canvas.text(&label, self.left - 8 - text_width(&label, 1), y - 3, 1, BLACK);
            v += step;
        }
        canvas.line((self.left, self.top), (self.left, self.bottom), BLACK, 1);
        canvas.line((self.left, self.bottom), (self.right, self.bottom), BLACK, 1);
        canvas.text_vertical(y_label, 6, self.top, 1, BLACK);
    }
}

fn draw_legend(canvas: &mut Canvas, series: &[Series], right: i64, top: i64) {
    let widest = series.iter().map(|s| text_width(&s.label, 1)).max().unwrap_or(0);
    let x = right - widest - 20;
    for (i, s) in series.iter().enumerate() {
        let y = top + 4 + i as i64 * 12;
        canvas.rect(x, y, x + 7, y + 6, PALETTE[i % PALETTE.len()]);
        canvas.text(&s.label, x + 12, y, 1, BLACK);
    }
}

fn check(series: &[Series], points: usize) -> Result<()> {
    if series.is_empty() || points == 0 {
        return Err(Error::Config("nothing to plot".into()));
    }
    if let Some(s) = series.iter().find(|s| s.values.len() != points) {
        return Err(Error::Shape(format!(
            "series {:?} has {} values for {points} positions",
            s.label,
            s.values.len()
        )));
    }
    Ok(())
}

/// Grouped bar chart, one group per label with one bar per series.
pub fn bar_chart(path: &Path, title: &str, y_label: &str, groups: &[String], series: &[Series]) -> Result<()> {
    check(series, groups.len())?;
    let bar = 10i64;
    let group_w = bar * series.len() as i64 + 14;
    let label_h = groups.iter().map(|g| g.chars().count()).max().unwrap_or(0) as i64 * 8;
    let legend_h = series.len() as i64 * 12 + 8;
    let (left, top) = (60i64, 30 + legend_h);
    let width = (left + group_w * groups.len() as i64 + 30).max(text_width(title, 2) + 2 * left);
    let height = top + 260 + 16 + label_h;
    let (lo, hi) = axis_range(series, true);
    let frame = Frame { left, top, right: width - 20, bottom: top + 260, lo, hi };
    let mut canvas = Canvas::new(width as u32, height as u32);
    canvas.text(title, left, 8, 2, BLACK);
    frame.draw_axes(&mut canvas, y_label);
    for (g, name) in groups.iter().enumerate() {
        let x0 = left + 8 + g as i64 * group_w;
        for (k, s) in series.iter().enumerate() {
            let v = s.values[g];
            if v.is_finite() {
                let x = x0 + k as i64 * bar;
                canvas.rect(x, frame.y(v), x + bar - 2, frame.bottom - 1, PALETTE[k % PALETTE.len()]);
            }
        }
        canvas.text_vertical(name, x0 + (group_w - 14) / 2 - 2, frame.bottom + 8, 1, BLACK);
    }
    draw_legend(&mut canvas, series, width - 10, 28);
    canvas.save(path)
}

/// Line chart over shared numeric x positions.
pub fn line_chart(path: &Path, title: &str, x_label: &str, y_label: &str, x: &[f64], series: &[Series]) -> Result<()> {
    check(series, x.len())?;
    let legend_h = series.len() as i64 * 12 + 8;
    let (left, top, width) = (60i64, 30 + legend_h, 640i64);
    let height = top + 300 + 40;
    let (lo, hi) = axis_range(series, false);
    let frame = Frame { left, top, right: width - 30, bottom: top + 300, lo, hi };
    let (x_lo, x_hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    let span = if x_hi > x_lo { x_hi - x_lo } else { 1.0 };
    let px = |v: f64| frame.left + 20 + ((v - x_lo) / span * (frame.right - frame.left - 40) as f64).round() as i64;
    let mut canvas = Canvas::new(width as u32, height as u32);
    canvas.text(title, left, 8, 2, BLACK);
    frame.draw_axes(&mut canvas, y_label);
    for &v in x {
        let label = format!("{v}");
        canvas.line((px(v), frame.bottom), (px(v), frame.bottom + 4), BLACK, 1);
        canvas.text(&label, px(v) - text_width(&label, 1) / 2, frame.bottom + 8, 1, BLACK);
    }
    canvas.text(x_label, (frame.left + frame.right - text_width(x_label, 1)) / 2, frame.bottom + 24, 1, BLACK);
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let points: Vec<(i64, i64)> = x
            .iter()
            .zip(&s.values)
            .filter(|(_, v)| v.is_finite())
            .map(|(&xv, &yv)| (px(xv), frame.y(yv)))
            .collect();
        for w in points.windows(2) {
            canvas.line(w[0], w[1], color, 2);
        }
        for &(cx, cy) in &points {
            canvas.rect(cx - 3, cy - 3, cx + 3, cy + 3, color);
        }
    }
    draw_legend(&mut canvas, series, width - 10, 28);
    canvas.save(path)
}
