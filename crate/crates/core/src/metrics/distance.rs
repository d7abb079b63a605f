use std::cmp::Reverse;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::MetricsError;
use crate::volume::VolumeDataset;

/// Unsigned distance (voxel units of the possibly downsampled grid) from
/// every voxel to the nearest voxel that straddles the isosurface.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceField {
    pub dims: [usize; 3],
    pub values: Vec<f64>,
    pub isovalue: f64,
}

impl DistanceField {
    pub fn get(&self, x: usize, y: usize, z: usize) -> f64 {
        self.values[x + self.dims[0] * (y + self.dims[1] * z)]
    }

    /// Length of the grid diagonal; the saturation value when no voxel
    /// straddles the isovalue.
    pub fn saturation(dims: [usize; 3]) -> f64 {
        dims.iter()
            .map(|&d| ((d - 1) as f64).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

pub const DEFAULT_DOWNSAMPLE: usize = 2;

const W1: f64 = 1.0;
const W2: f64 = std::f64::consts::SQRT_2;
// sqrt(3)
const W3: f64 = 1.732_050_807_568_877_2;

/// Subsamples every `step`-th voxel along each axis.
pub fn downsample(vol: &VolumeDataset, step: usize) -> (Vec<f64>, [usize; 3]) {
    let src = vol.dims();
    if step <= 1 {
        return (vol.scalars().to_vec(), src);
    }
    let dims = src.map(|n| (n - 1) / step + 1);
    let mut out = Vec::with_capacity(dims.iter().product());
    for z in 0..dims[2] {
        for y in 0..dims[1] {
            for x in 0..dims[0] {
                out.push(vol.value(x * step, y * step, z * step));
            }
        }
    }
    (out, dims)
}

/// Seeds are voxels whose `(f - isovalue)` sign differs from any 6-neighbor
/// (`f >= isovalue` counts as non-negative). Distances are shortest paths on
/// the 26-connected grid with chamfer weights 1, sqrt(2), sqrt(3), computed
/// by multi-source Dijkstra.
pub fn distance_field(
    vol: &VolumeDataset,
    isovalue: f64,
    downsample_step: usize,
) -> Result<DistanceField, MetricsError> {
    if downsample_step == 0 {
        return Err(MetricsError::InvalidParameter("downsample must be >= 1".into()));
    }
    let (values, dims) = downsample(vol, downsample_step);
    if dims.iter().any(|&d| d < 2) {
        return Err(MetricsError::DegenerateVolume(dims));
    }
    Ok(distance_field_of(&values, dims, isovalue))
}

pub(crate) fn distance_field_of(values: &[f64], dims: [usize; 3], isovalue: f64) -> DistanceField {
    let [nx, ny, nz] = dims;
    let n = values.len();
    let idx = |x: usize, y: usize, z: usize| x + nx * (y + ny * z);
    let above: Vec<bool> = values.iter().map(|&v| v >= isovalue).collect();

    let mut dist = vec![f64::INFINITY; n];
    let mut heap = BinaryHeap::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = idx(x, y, z);
                let s = above[i];
                let straddles = (x > 0 && above[i - 1] != s)
                    || (x + 1 < nx && above[i + 1] != s)
                    || (y > 0 && above[i - nx] != s)
                    || (y + 1 < ny && above[i + nx] != s)
                    || (z > 0 && above[i - nx * ny] != s)
                    || (z + 1 < nz && above[i + nx * ny] != s);
                if straddles {
                    dist[i] = 0.0;
                    heap.push(Reverse((0u64, i)));
                }
            }
        }
    }
    if heap.is_empty() {
        return DistanceField {
            dims,
            values: vec![DistanceField::saturation(dims); n],
            isovalue,
        };
    }

    let mut offsets = Vec::with_capacity(26);
    for dz in -1i64..=1 {
        for dy in -1i64..=1 {
            for dx in -1i64..=1 {
                let k = dx.abs() + dy.abs() + dz.abs();
                if k == 0 {
                    continue;
                }
                let w = [0.0, W1, W2, W3][k as usize];
                offsets.push((dx, dy, dz, w));
            }
        }
    }

    // non-negative f64 bit patterns order like the values themselves
    while let Some(Reverse((bits, i))) = heap.pop() {
        let d = f64::from_bits(bits);
        if d > dist[i] {
            continue;
        }
        let x = (i % nx) as i64;
        let y = ((i / nx) % ny) as i64;
        let z = (i / (nx * ny)) as i64;
        for &(dx, dy, dz, w) in &offsets {
            let (xx, yy, zz) = (x + dx, y + dy, z + dz);
            if xx < 0 || yy < 0 || zz < 0 || xx >= nx as i64 || yy >= ny as i64 || zz >= nz as i64
            {
                continue;
            }
            let j = idx(xx as usize, yy as usize, zz as usize);
            let nd = d + w;
            if nd < dist[j] {
                dist[j] = nd;
                heap.push(Reverse((nd.to_bits(), j)));
            }
        }
    }
    DistanceField {
        dims,
        values: dist,
        isovalue,
    }
}
