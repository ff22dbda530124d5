//! Minimal line charts for training curves, drawn directly into an RGB
//! canvas and saved as PNG.

use std::path::Path;

use ndarray::Array3;

use super::font::{draw_text, text_width, GLYPH_H};
use crate::scenegen::{save_rgb, SceneError};
use crate::RgbImage;

pub struct Series<'a> {
    pub label: &'a str,
    pub color: [u8; 3],
    pub values: &'a [f64],
}

const CANVAS_W: usize = 640;
const CANVAS_H: usize = 420;
const MARGIN_L: usize = 58;
const MARGIN_R: usize = 16;
const MARGIN_T: usize = 30;
const MARGIN_B: usize = 36;

const BG: [u8; 3] = [252, 252, 253];
const AXIS: [u8; 3] = [90, 90, 96];
const GRID: [u8; 3] = [222, 224, 228];
const TEXT: [u8; 3] = [40, 40, 46];

fn put(canvas: &mut RgbImage, x: i64, y: i64, color: [u8; 3]) {
    let (h, w, _) = canvas.dim();
    if x >= 0 && y >= 0 && (x as usize) < w && (y as usize) < h {
        for c in 0..3 {
            canvas[(y as usize, x as usize, c)] = color[c];
        }
    }
}

fn draw_line(canvas: &mut RgbImage, x0: f64, y0: f64, x1: f64, y1: f64, color: [u8; 3]) {
    let steps = (x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize + 1;
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let x = x0 + (x1 - x0) * t;
        let y = y0 + (y1 - y0) * t;
        put(canvas, x.round() as i64, y.round() as i64, color);
    }
}

/// Plots one or more series against their 1-based index (epoch number) and
/// writes the chart to `path`.
pub fn line_chart(
    path: &Path,
    title: &str,
    y_label: &str,
    series: &[Series],
) -> Result<(), SceneError> {
    let mut canvas = Array3::from_elem((CANVAS_H, CANVAS_W, 3), 0u8);
    for (px, &c) in canvas.iter_mut().zip(BG.iter().cycle()) {
        *px = c;
    }

    let n = series.iter().map(|s| s.values.len()).max().unwrap_or(0);
    let finite: Vec<f64> = series
        .iter()
        .flat_map(|s| s.values.iter().copied())
        .filter(|v| v.is_finite())
        .collect();
    let (mut y_min, mut y_max) = finite
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if !y_min.is_finite() || !y_max.is_finite() {
        y_min = 0.0;
        y_max = 1.0;
    }
    if (y_max - y_min).abs() < 1e-12 {
        y_min -= 0.5;
        y_max += 0.5;
    }
    let pad = (y_max - y_min) * 0.05;
    y_min -= pad;
    y_max += pad;

    let plot_w = (CANVAS_W - MARGIN_L - MARGIN_R) as f64;
    let plot_h = (CANVAS_H - MARGIN_T - MARGIN_B) as f64;
    let x_of = |i: usize| {
        let frac = if n > 1 { i as f64 / (n - 1) as f64 } else { 0.5 };
        MARGIN_L as f64 + frac * plot_w
    };
    let y_of = |v: f64| MARGIN_T as f64 + (1.0 - (v - y_min) / (y_max - y_min)) * plot_h;

    // horizontal gridlines and y tick labels
    for tick in 0..=4 {
        let v = y_min + (y_max - y_min) * f64::from(tick) / 4.0;
        let y = y_of(v);
        if tick > 0 && tick < 4 {
            draw_line(&mut canvas, MARGIN_L as f64, y, (CANVAS_W - MARGIN_R) as f64, y, GRID);
        }
        let label = format!("{v:.3}");
        draw_text(
            &mut canvas,
            (MARGIN_L as i64) - (text_width(&label) as i64) - 4,
            y.round() as i64 - (GLYPH_H / 2) as i64,
            &label,
            TEXT,
        );
    }
    // x ticks: up to six integer epoch labels
    if n > 0 {
        let ticks = n.min(6);
        for t in 0..ticks {
            let i = if ticks == 1 { 0 } else { t * (n - 1) / (ticks - 1) };
            let x = x_of(i);
            draw_line(
                &mut canvas,
                x,
                (CANVAS_H - MARGIN_B) as f64,
                x,
                (CANVAS_H - MARGIN_B + 4) as f64,
                AXIS,
            );
            let label = (i + 1).to_string();
            draw_text(
                &mut canvas,
                x.round() as i64 - (text_width(&label) / 2) as i64,
                (CANVAS_H - MARGIN_B + 7) as i64,
                &label,
                TEXT,
            );
        }
    }

    // frame
    let (x0, x1) = (MARGIN_L as f64, (CANVAS_W - MARGIN_R) as f64);
    let (fy0, fy1) = (MARGIN_T as f64, (CANVAS_H - MARGIN_B) as f64);
    draw_line(&mut canvas, x0, fy0, x1, fy0, AXIS);
    draw_line(&mut canvas, x0, fy1, x1, fy1, AXIS);
    draw_line(&mut canvas, x0, fy0, x0, fy1, AXIS);
    draw_line(&mut canvas, x1, fy0, x1, fy1, AXIS);

    for s in series {
        let mut prev: Option<(f64, f64)> = None;
        for (i, &v) in s.values.iter().enumerate() {
            if !v.is_finite() {
                prev = None;
                continue;
            }
            let pt = (x_of(i), y_of(v));
            if let Some(p) = prev {
                draw_line(&mut canvas, p.0, p.1, pt.0, pt.1, s.color);
                draw_line(&mut canvas, p.0, p.1 + 1.0, pt.0, pt.1 + 1.0, s.color);
            }
            prev = Some(pt);
        }
    }

    draw_text(
        &mut canvas,
        ((CANVAS_W - text_width(title)) / 2) as i64,
        8,
        title,
        TEXT,
    );
    draw_text(&mut canvas, 6, 8, y_label, TEXT);
    draw_text(
        &mut canvas,
        ((CANVAS_W - text_width("epoch")) / 2) as i64,
        (CANVAS_H - GLYPH_H - 4) as i64,
        "epoch",
        TEXT,
    );

    // legend, top-right inside the frame
    let mut ly = MARGIN_T as i64 + 6;
    for s in series {
        let lx = (CANVAS_W - MARGIN_R) as i64 - 90;
        draw_line(
            &mut canvas,
            lx as f64,
            ly as f64 + 3.0,
            lx as f64 + 14.0,
            ly as f64 + 3.0,
            s.color,
        );
        draw_text(&mut canvas, lx + 18, ly, s.label, TEXT);
        ly += (GLYPH_H + 4) as i64;
    }

    save_rgb(path, &canvas)
}
