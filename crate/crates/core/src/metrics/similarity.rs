//! Isosurface similarity via normalized mutual information of distance fields.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::distance::{distance_field, DistanceField};
use super::MetricsError;
use crate::render::ImageBuffer;
use crate::volume::VolumeDataset;

pub const DEFAULT_NMI_BINS: usize = 64;

/// Equal-width bin index of each value over the slice's own range. Bin `i`
/// holds `lo + i*w <= v < lo + (i+1)*w`, the last bin also takes `hi`; the
/// guess from division is corrected against those edges so values sitting on
/// an edge land deterministically. A constant input maps entirely to bin 0.
fn quantize(values: &[f64], bins: usize) -> Vec<usize> {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    if !(hi > lo) {
        return vec![0; values.len()];
    }
    let w = (hi - lo) / bins as f64;
    let edge = |i: usize| if i == bins { hi } else { lo + i as f64 * w };
    values
        .iter()
        .map(|&v| {
            let mut i = (((v - lo) / w).floor() as usize).min(bins - 1);
            while i > 0 && v < edge(i) {
                i -= 1;
            }
            while i + 1 < bins && v >= edge(i + 1) {
                i += 1;
            }
            i
        })
        .collect()
}

/// Shannon entropy (nats) of a count table. Counts are summed in sorted order
/// so the result depends only on the multiset of counts.
fn entropy(mut counts: Vec<u64>, total: f64) -> f64 {
    counts.retain(|&c| c > 0);
    counts.sort_unstable();
    counts
        .iter()
        .map(|&c| {
            let p = c as f64 / total;
            -p * p.ln()
        })
        .sum()
}

/// NMI = 2 I(A;B) / (H(A) + H(B)); two constant inputs give 1.
pub fn nmi_of(a: &[f64], b: &[f64], bins: usize) -> Result<f64, MetricsError> {
    if bins == 0 {
        return Err(MetricsError::InvalidParameter("bins must be >= 1".into()));
    }
    if a.len() != b.len() {
        return Err(MetricsError::DimMismatch(format!(
            "{} vs {} samples",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(MetricsError::InvalidParameter("empty fields".into()));
    }
    let qa = quantize(a, bins);
    let qb = quantize(b, bins);
    let total = a.len() as f64;
    let mut ca = vec![0u64; bins];
    let mut cb = vec![0u64; bins];
    let mut joint = vec![0u64; bins * bins];
    for (&i, &j) in qa.iter().zip(&qb) {
        ca[i] += 1;
        cb[j] += 1;
        joint[i * bins + j] += 1;
    }
    let ha = entropy(ca, total);
    let hb = entropy(cb, total);
    let hab = entropy(joint, total);
    let marginal = ha + hb;
    if marginal <= 0.0 {
        return Ok(1.0);
    }
    let mi = marginal - hab;
    Ok((2.0 * mi / marginal).clamp(0.0, 1.0))
}

pub fn nmi(a: &DistanceField, b: &DistanceField, bins: usize) -> Result<f64, MetricsError> {
    if a.dims != b.dims {
        return Err(MetricsError::DimMismatch(format!("{:?} vs {:?}", a.dims, b.dims)));
    }
    nmi_of(&a.values, &b.values, bins)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMap {
    pub isovalues: Vec<f64>,
    pub matrix: Vec<Vec<f64>>,
}

impl SimilarityMap {
    pub fn len(&self) -> usize {
        self.isovalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.isovalues.is_empty()
    }

    /// Header row of isovalues then one row per isovalue, 6 decimals.
    pub fn to_csv(&self) -> String {
        let fmt_row = |row: &[f64]| {
            row.iter()
                .map(|v| format!("{v:.6}"))
                .collect::<Vec<_>>()
                .join(",")
        };
        let mut out = fmt_row(&self.isovalues);
        out.push('\n');
        for row in &self.matrix {
            let _ = writeln!(out, "{}", fmt_row(row));
        }
        out
    }

    /// Grayscale heat map; row 0 (lowest isovalue) at the top.
    pub fn to_image(&self, cell_px: usize) -> ImageBuffer {
        let k = self.len();
        let c = cell_px.max(1);
        let mut img = ImageBuffer::new(k * c, k * c);
        for (i, row) in self.matrix.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                let g = (v.clamp(0.0, 1.0) * 255.0).round() as u8;
                for y in i * c..(i + 1) * c {
                    for x in j * c..(j + 1) * c {
                        img.set(x, y, [g, g, g]);
                    }
                }
            }
        }
        img
    }
}

/// Pairwise NMI matrix over precomputed fields, in the given order. Each
/// unordered pair is computed once; the diagonal is exactly 1.
pub fn similarity_matrix(
    fields: &[DistanceField],
    bins: usize,
) -> Result<Vec<Vec<f64>>, MetricsError> {
    let k = fields.len();
    let pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|i| ((i + 1)..k).map(move |j| (i, j)))
        .collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| nmi(&fields[i], &fields[j], bins))
        .collect::<Result<_, _>>()?;
    let mut m = vec![vec![1.0; k]; k];
    for (&(i, j), &v) in pairs.iter().zip(&values) {
        m[i][j] = v;
        m[j][i] = v;
    }
    Ok(m)
}

/// Builds the similarity map over `isovalues` (sorted ascending internally).
pub fn similarity_map(
    vol: &VolumeDataset,
    isovalues: &[f64],
    bins: usize,
    downsample: usize,
) -> Result<SimilarityMap, MetricsError> {
    if isovalues.len() < 2 {
        return Err(MetricsError::InvalidParameter(
            "similarity map needs at least 2 isovalues".into(),
        ));
    }
    if isovalues.iter().any(|v| !v.is_finite()) {
        return Err(MetricsError::InvalidParameter("non-finite isovalue".into()));
    }
    let mut iso = isovalues.to_vec();
    iso.sort_by(f64::total_cmp);
    let fields: Vec<DistanceField> = iso
        .par_iter()
        .map(|&v| distance_field(vol, v, downsample))
        .collect::<Result<_, _>>()?;
    let matrix = similarity_matrix(&fields, bins)?;
    Ok(SimilarityMap {
        isovalues: iso,
        matrix,
    })
}

/// Parses `a:b:step` into an inclusive ascending isovalue list.
pub fn parse_isovalue_range(spec: &str) -> Result<Vec<f64>, MetricsError> {
    let parts: Vec<f64> = spec
        .split(':')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| MetricsError::InvalidParameter(format!("bad isovalue range {spec:?}")))?;
    let [a, b, step] = parts[..] else {
        return Err(MetricsError::InvalidParameter(format!(
            "isovalue range must be a:b:step, got {spec:?}"
        )));
    };
    if !(step > 0.0) || !(b >= a) || !a.is_finite() || !b.is_finite() {
        return Err(MetricsError::InvalidParameter(format!(
            "bad isovalue range {spec:?}"
        )));
    }
    let n = ((b - a) / step + 1e-9).floor() as usize;
    if n > 100_000 {
        return Err(MetricsError::InvalidParameter("isovalue range too long".into()));
    }
    let out: Vec<f64> = (0..=n).map(|i| a + step * i as f64).collect();
    if out.windows(2).any(|w| w[1] <= w[0]) {
        return Err(MetricsError::InvalidParameter(format!("step below float resolution in {spec:?}")));
    }
    Ok(out)
}
