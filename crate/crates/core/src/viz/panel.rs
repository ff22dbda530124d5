//! Side-by-side prediction panels: input image, optional ground truth and
//! the predicted mask, with a legend of the classes that appear.

use std::collections::BTreeSet;

use ndarray::Array3;

use super::font::{draw_text, text_width, GLYPH_H};
use super::palette::class_palette;
use crate::label::LabelSpace;
use crate::{Mask, RgbImage};

const PAD: usize = 8;
const CAPTION_H: usize = GLYPH_H + 6;
const SWATCH: usize = 9;
const PANEL_BG: [u8; 3] = [246, 246, 248];
const TEXT: [u8; 3] = [40, 40, 46];

fn colorize(mask: &Mask, palette: &[[u8; 3]]) -> RgbImage {
    let (h, w) = mask.dim();
    Array3::from_shape_fn((h, w, 3), |(y, x, c)| {
        let v = mask[(y, x)] as usize;
        palette.get(v).map_or(255, |rgb| rgb[c])
    })
}

fn blit(canvas: &mut RgbImage, x0: usize, y0: usize, src: &RgbImage) {
    let (h, w, _) = src.dim();
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                canvas[(y0 + y, x0 + x, c)] = src[(y, x, c)];
            }
        }
    }
}

fn legend_entries(space: &LabelSpace, masks: &[&Mask]) -> Vec<usize> {
    let mut present: BTreeSet<usize> = BTreeSet::new();
    for m in masks {
        present.extend(m.iter().map(|&v| v as usize));
    }
    present
        .into_iter()
        .filter(|&v| v < space.num_classes)
        .collect()
}

/// Builds the composite panel image. The image and the masks must share
/// their height and width; `truth` may be absent, giving a two-panel layout.
pub fn prediction_panel(
    image: &RgbImage,
    truth: Option<&Mask>,
    pred: &Mask,
    space: &LabelSpace,
) -> RgbImage {
    let (h, w, _) = image.dim();
    assert_eq!(pred.dim(), (h, w), "prediction mask size mismatch");
    if let Some(t) = truth {
        assert_eq!(t.dim(), (h, w), "truth mask size mismatch");
    }
    let palette = class_palette(space.num_classes);

    let mut panels: Vec<(&str, RgbImage)> = vec![("input", image.clone())];
    if let Some(t) = truth {
        panels.push(("truth", colorize(t, &palette)));
    }
    panels.push(("prediction", colorize(pred, &palette)));

    let masks: Vec<&Mask> = truth.into_iter().chain(std::iter::once(pred)).collect();
    let entries = legend_entries(space, &masks);

    let total_w = PAD + panels.len() * (w + PAD);
    // simulate legend flow to get its height
    let entry_w = |class: usize| SWATCH + 4 + text_width(&space.class_names[class]) + 14;
    let mut legend_rows = 1usize;
    let mut x = PAD;
    for &e in &entries {
        if x + entry_w(e) > total_w && x > PAD {
            legend_rows += 1;
            x = PAD;
        }
        x += entry_w(e);
    }
    let legend_h = if entries.is_empty() {
        0
    } else {
        legend_rows * (SWATCH + 6) + PAD
    };
    let total_h = CAPTION_H + h + PAD + legend_h;

    let mut canvas = Array3::from_elem((total_h, total_w, 3), 0u8);
    for (px, &c) in canvas.iter_mut().zip(PANEL_BG.iter().cycle()) {
        *px = c;
    }

    for (n, (caption, panel)) in panels.iter().enumerate() {
        let x0 = PAD + n * (w + PAD);
        draw_text(&mut canvas, x0 as i64, 3, caption, TEXT);
        blit(&mut canvas, x0, CAPTION_H, panel);
    }

    let mut x = PAD;
    let mut y = CAPTION_H + h + PAD;
    for &e in &entries {
        if x + entry_w(e) > total_w && x > PAD {
            x = PAD;
            y += SWATCH + 6;
        }
        for sy in 0..SWATCH {
            for sx in 0..SWATCH {
                for c in 0..3 {
                    canvas[(y + sy, x + sx, c)] = palette[e][c];
                }
            }
        }
        draw_text(
            &mut canvas,
            (x + SWATCH + 4) as i64,
            (y + SWATCH / 2) as i64 - (GLYPH_H / 2) as i64 + 1,
            &space.class_names[e],
            TEXT,
        );
        x += entry_w(e);
    }

    canvas
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn sample() -> (RgbImage, Mask, Mask) {
        let image = Array3::from_elem((32, 40, 3), 200u8);
        let truth = Array2::from_shape_fn((32, 40), |(y, _)| if y < 16 { 0 } else { 2 });
        let pred = Array2::from_shape_fn((32, 40), |(y, _)| if y < 14 { 0 } else { 2 });
        (image, truth, pred)
    }

    #[test]
    fn three_panel_layout_with_legend() {
        let (image, truth, pred) = sample();
        let space = LabelSpace::semantic4();
        let panel = prediction_panel(&image, Some(&truth), &pred, &space);
        let (h, w, _) = panel.dim();
        assert_eq!(w, PAD + 3 * (40 + PAD));
        assert!(h > CAPTION_H + 32 + PAD);
        // the walls color appears (legend swatch and colored panels)
        let walls = class_palette(4)[2];
        assert!(panel.outer_iter().any(|row| {
            row.outer_iter()
                .any(|p| p[0] == walls[0] && p[1] == walls[1] && p[2] == walls[2])
        }));
    }

    #[test]
    fn two_panel_layout_without_truth() {
        let (image, _, pred) = sample();
        let space = LabelSpace::semantic4();
        let panel = prediction_panel(&image, None, &pred, &space);
        assert_eq!(panel.dim().1, PAD + 2 * (40 + PAD));
    }

    #[test]
    fn percube_legend_wraps_many_classes() {
        let image = Array3::from_elem((44, 44, 3), 180u8);
        let pred = Array2::from_shape_fn((44, 44), |(y, _)| y as u8);
        let space = LabelSpace::percube44();
        let panel = prediction_panel(&image, None, &pred, &space);
        // all 44 classes present -> legend adds multiple rows
        assert!(panel.dim().0 > CAPTION_H + 44 + PAD + 2 * (SWATCH + 6));
    }
}
