//! Fixed class palettes. Entry `v` is the display color of class `v`, and
//! mask PNGs embed the palette so label files are directly viewable.

/// Curated colors for the four-class space: dark background, orange
/// foundation, blue walls, red roof.
const SEMANTIC_COLORS: [[u8; 3]; 4] = [
    [33, 36, 41],
    [224, 122, 40],
    [66, 133, 244],
    [219, 68, 85],
];

/// Palette for `num_classes` classes. Up to four classes get the curated
/// semantic colors; larger spaces use golden-angle hue stepping combined
/// with saturation and value cycles of coprime periods, so ids whose hues
/// happen to land close together still get separated by tone.
pub fn class_palette(num_classes: usize) -> Vec<[u8; 3]> {
    if num_classes <= SEMANTIC_COLORS.len() {
        return SEMANTIC_COLORS[..num_classes].to_vec();
    }
    let mut colors = Vec::with_capacity(num_classes);
    colors.push(SEMANTIC_COLORS[0]);
    for i in 1..num_classes {
        let hue = ((i - 1) as f64 * 137.507_764) % 360.0;
        let sat = [0.72, 0.95][(i - 1) % 2];
        let value = [0.95, 0.68, 0.50][(i - 1) % 3];
        colors.push(hsv_to_rgb(hue, sat, value));
    }
    colors
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let c = v * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = v - c;
    [
        ((r + m) * 255.0).round() as u8,
        ((g + m) * 255.0).round() as u8,
        ((b + m) * 255.0).round() as u8,
    ]
}
