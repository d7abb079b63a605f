//! Deterministic pre-existing analysis tools: slicing, histograms, summary
//! statistics and threshold filtering.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::volume::{Axis, VolumeDataset};

pub const DEFAULT_HISTOGRAM_BINS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error("slice index {index} out of range for axis {axis} (size {size})")]
    IndexOutOfRange { axis: Axis, index: usize, size: usize },
    #[error("bin count must be at least 1")]
    ZeroBins,
    #[error("inverted threshold range: lo {lo} > hi {hi}")]
    InvertedRange { lo: f64, hi: f64 },
}

/// A 2D cut through a volume. `values` is row-major, `width * height` long.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceImage {
    pub axis: Axis,
    pub index: usize,
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl SliceImage {
    pub fn at(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// Conventional file name, e.g. `screenshot_z_slice_50.png`.
    pub fn file_name(&self) -> String {
        format!("screenshot_{}_slice_{}.png", self.axis, self.index)
    }
}

/// Extracts the slice perpendicular to `axis`. The in-plane layout is
/// (cols, rows) = (x, y) for z, (x, z) for y and (y, z) for x.
pub fn extract_slice(
    vol: &VolumeDataset,
    axis: Axis,
    index: Option<usize>,
) -> Result<SliceImage, AnalysisError> {
    let [nx, ny, nz] = vol.dims();
    let size = vol.dims()[axis.index()];
    let index = index.unwrap_or(size / 2);
    if index >= size {
        return Err(AnalysisError::IndexOutOfRange { axis, index, size });
    }
    let (width, height) = match axis {
        Axis::X => (ny, nz),
        Axis::Y => (nx, nz),
        Axis::Z => (nx, ny),
    };
    let mut values = Vec::with_capacity(width * height);
    for row in 0..height {
        for col in 0..width {
            let (x, y, z) = match axis {
                Axis::X => (index, col, row),
                Axis::Y => (col, index, row),
                Axis::Z => (col, row, index),
            };
            values.push(vol.value(x, y, z));
        }
    }
    Ok(SliceImage {
        axis,
        index,
        width,
        height,
        values,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` increasing edges; the last bin is closed on the right.
    pub bin_edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn bin_center(&self, i: usize) -> f64 {
        0.5 * (self.bin_edges[i] + self.bin_edges[i + 1])
    }
}

/// Equal-width histogram over the scalar range. A constant volume gets the
/// unit range `[v - 0.5, v + 0.5]` so edges stay strictly increasing.
pub fn compute_histogram(vol: &VolumeDataset, bins: usize) -> Result<Histogram, AnalysisError> {
    histogram_of(vol.scalars(), vol.scalar_range(), bins)
}

pub(crate) fn histogram_of(
    values: &[f64],
    range: (f64, f64),
    bins: usize,
) -> Result<Histogram, AnalysisError> {
    if bins == 0 {
        return Err(AnalysisError::ZeroBins);
    }
    let (mut lo, mut hi) = range;
    if hi <= lo {
        lo -= 0.5;
        hi += 0.5;
    }
    let width = hi - lo;
    let mut counts = vec![0u64; bins];
    for &v in values {
        let t = ((v - lo) / width * bins as f64).floor();
        let i = if t < 0.0 { 0 } else { (t as usize).min(bins - 1) };
        counts[i] += 1;
    }
    let mut bin_edges: Vec<f64> = (0..bins)
        .map(|i| lo + width * i as f64 / bins as f64)
        .collect();
    bin_edges.push(hi);
    Ok(Histogram { bin_edges, counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsSummary {
    pub mean: f64,
    /// Population standard deviation.
    pub stddev: f64,
    pub min: f64,
    pub max: f64,
    pub median: f64,
    pub voxel_count: usize,
}

pub fn summary_stats(vol: &VolumeDataset) -> StatsSummary {
    let v = vol.scalars();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let mut sorted = v.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    let (min, max) = vol.scalar_range();
    StatsSummary {
        mean,
        stddev: var.sqrt(),
        min,
        max,
        median,
        voxel_count: v.len(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSelection {
    pub selected_count: usize,
    pub fraction: f64,
}

/// Counts voxels with `lo <= v <= hi`.
pub fn threshold_filter(
    vol: &VolumeDataset,
    lo: f64,
    hi: f64,
) -> Result<ThresholdSelection, AnalysisError> {
    if lo > hi {
        return Err(AnalysisError::InvertedRange { lo, hi });
    }
    let selected_count = vol
        .scalars()
        .iter()
        .filter(|&&v| lo <= v && v <= hi)
        .count();
    Ok(ThresholdSelection {
        selected_count,
        fraction: selected_count as f64 / vol.voxel_count() as f64,
    })
}
