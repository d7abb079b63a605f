use std::io::BufWriter;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("png encode/decode failed: {0}")]
    Png(String),
    #[error("unsupported png layout: {0}")]
    Layout(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// 8-bit RGB image, row-major, row 0 at the top.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageBuffer {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl ImageBuffer {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; 3 * width * height],
        }
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let mut img = Self::new(width, height);
        for px in img.pixels.chunks_exact_mut(3) {
            px.copy_from_slice(&rgb);
        }
        img
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = 3 * (y * self.width + x);
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Pixels that are not pure black.
    pub fn lit_pixel_count(&self) -> usize {
        self.pixels
            .chunks_exact(3)
            .filter(|p| p.iter().any(|&c| c > 0))
            .count()
    }

    pub fn lit_fraction(&self) -> f64 {
        let n = self.width * self.height;
        if n == 0 {
            0.0
        } else {
            self.lit_pixel_count() as f64 / n as f64
        }
    }

    /// Mean (x, y) of lit pixels normalized to [0, 1], or `None` when dark.
    pub fn lit_centroid(&self) -> Option<(f64, f64)> {
        let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
        for y in 0..self.height {
            for x in 0..self.width {
                if self.get(x, y).iter().any(|&c| c > 0) {
                    sx += (x as f64 + 0.5) / self.width as f64;
                    sy += (y as f64 + 0.5) / self.height as f64;
                    n += 1;
                }
            }
        }
        (n > 0).then(|| (sx / n as f64, sy / n as f64))
    }

    pub fn mean_luminance(&self) -> f64 {
        if self.pixels.is_empty() {
            return 0.0;
        }
        self.pixels.iter().map(|&c| c as f64).sum::<f64>() / self.pixels.len() as f64
    }

    pub fn encode_png(&self) -> Result<Vec<u8>, ImageError> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(
                BufWriter::new(&mut out),
                self.width as u32,
                self.height as u32,
            );
            enc.set_color(png::ColorType::Rgb);
            enc.set_depth(png::BitDepth::Eight);
            let mut w = enc
                .write_header()
                .map_err(|e| ImageError::Png(e.to_string()))?;
            w.write_image_data(&self.pixels)
                .map_err(|e| ImageError::Png(e.to_string()))?;
        }
        Ok(out)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<(), ImageError> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, self.encode_png()?)?;
        Ok(())
    }

    /// Decodes 8-bit RGB / RGBA / grayscale PNGs.
    pub fn decode_png(bytes: &[u8]) -> Result<Self, ImageError> {
        let mut decoder = png::Decoder::new(std::io::Cursor::new(bytes));
        decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
        let mut reader = decoder
            .read_info()
            .map_err(|e| ImageError::Png(e.to_string()))?;
        let size = reader
            .output_buffer_size()
            .ok_or_else(|| ImageError::Layout("image too large".into()))?;
        let mut buf = vec![0; size];
        let info = reader
            .next_frame(&mut buf)
            .map_err(|e| ImageError::Png(e.to_string()))?;
        let (w, h) = (info.width as usize, info.height as usize);
        let data = &buf[..info.buffer_size()];
        let channels = match info.color_type {
            png::ColorType::Rgb => 3,
            png::ColorType::Rgba => 4,
            png::ColorType::Grayscale => 1,
            png::ColorType::GrayscaleAlpha => 2,
            other => return Err(ImageError::Layout(format!("{other:?}"))),
        };
        let mut img = Self::new(w, h);
        for (i, px) in data.chunks_exact(channels).take(w * h).enumerate() {
            let rgb = if channels >= 3 {
                [px[0], px[1], px[2]]
            } else {
                [px[0]; 3]
            };
            img.pixels[3 * i..3 * i + 3].copy_from_slice(&rgb);
        }
        Ok(img)
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self, ImageError> {
        Self::decode_png(&std::fs::read(path)?)
    }
}
