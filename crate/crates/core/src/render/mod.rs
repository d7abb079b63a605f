//! Image production: the built-in reference renderer plus 2D plots.

use thiserror::Error;

use crate::analysis::{Histogram, SliceImage};

mod camera;
mod external;
mod image;
mod raycast;

pub use camera::{CameraAngle, CANONICAL_ELEVATION_DEG};
pub use external::{ExternalRenderer, IsosurfaceRenderer, ReferenceRenderer};
pub use image::{ImageBuffer, ImageError};
pub use raycast::render_isosurface;

pub const DEFAULT_RENDER_SIZE: (usize, usize) = (256, 256);
pub const HISTOGRAM_FILE_NAME: &str = "histogram_plot.png";
pub const HISTOGRAM_PLOT_SIZE: (usize, usize) = (512, 256);

const BAR_RGB: [u8; 3] = [31, 119, 180];
const PLOT_BACKGROUND: [u8; 3] = [255, 255, 255];

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("volume too thin to raycast (every dim must be >= 2): {0:?}")]
    DegenerateVolume([usize; 3]),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error("external renderer: {0}")]
    External(String),
}

/// File name for one sweep frame: `sweep_<dataset>_<isovalue>_<anglelabel>.png`.
pub fn sweep_file_name(dataset: &str, isovalue: f64, angle_label: &str) -> String {
    format!("sweep_{dataset}_{isovalue}_{angle_label}.png")
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Colormap {
    #[default]
    Gray,
}

impl Colormap {
    /// Unknown names fall back to gray.
    pub fn from_name(name: &str) -> Self {
        match name.to_ascii_lowercase().as_str() {
            "gray" | "grey" | "greys" => Colormap::Gray,
            other => {
                log::warn!("unknown colormap {other:?}; using gray");
                Colormap::Gray
            }
        }
    }

    fn map(self, t: f64) -> [u8; 3] {
        match self {
            Colormap::Gray => {
                let g = (t.clamp(0.0, 1.0) * 255.0).round() as u8;
                [g; 3]
            }
        }
    }
}

/// Linearly maps slice values over their own min..max. A constant slice maps
/// to mid-gray.
pub fn render_slice_image(slice: &SliceImage, colormap: Colormap) -> ImageBuffer {
    let (lo, hi) = slice
        .values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let mut img = ImageBuffer::new(slice.width, slice.height);
    for row in 0..slice.height {
        for col in 0..slice.width {
            let v = slice.at(col, row);
            let rgb = if hi > lo {
                colormap.map((v - lo) / (hi - lo))
            } else {
                [128; 3]
            };
            img.set(col, row, rgb);
        }
    }
    img
}

/// Bar chart of a histogram on a white background. Bar heights scale so the
/// tallest bin spans the full plot height; non-empty bins get at least one
/// pixel.
pub fn render_histogram_image(hist: &Histogram) -> ImageBuffer {
    let (w, h) = HISTOGRAM_PLOT_SIZE;
    let mut img = ImageBuffer::filled(w, h, PLOT_BACKGROUND);
    let bins = hist.bins();
    let max = hist.counts.iter().copied().max().unwrap_or(0);
    if bins == 0 || max == 0 {
        return img;
    }
    for (k, &count) in hist.counts.iter().enumerate() {
        let x0 = k * w / bins;
        let x1 = ((k + 1) * w / bins).max(x0 + 1).min(w);
        let mut bar = ((count as f64 / max as f64) * h as f64).round() as usize;
        if count > 0 {
            bar = bar.max(1);
        }
        for x in x0..x1 {
            for y in (h - bar)..h {
                img.set(x, y, BAR_RGB);
            }
        }
    }
    img
}
