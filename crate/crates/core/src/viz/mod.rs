//! Rendering of reports: class palettes, a small bitmap font, line charts
//! and prediction panels. Everything draws into plain RGB arrays and goes to
//! disk as PNG, with no plotting dependencies.

pub mod font;
pub mod palette;
pub mod panel;
pub mod plot;

pub use palette::class_palette;
pub use panel::prediction_panel;
pub use plot::{line_chart, Series};
