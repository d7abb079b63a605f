//! Regular 3D scalar grids.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VolumeError {
    #[error("dimensions must be positive, got {0:?}")]
    BadDims([usize; 3]),
    #[error("spacing components must be positive and finite, got {0:?}")]
    BadSpacing([f64; 3]),
    #[error("expected {expected} scalars for dims {dims:?}, got {actual}")]
    LengthMismatch {
        dims: [usize; 3],
        expected: usize,
        actual: usize,
    },
    #[error("scalar field contains a non-finite value at index {0}")]
    NonFinite(usize),
}

/// Slice axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "x" => Some(Axis::X),
            "y" => Some(Axis::Y),
            "z" => Some(Axis::Z),
            _ => None,
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

/// A scalar field sampled on a regular grid.
///
/// Scalars are stored flat in x-fastest order: the voxel `(x, y, z)` lives at
/// `x + nx * (y + ny * z)`. The struct is immutable once built; all
/// constructors check the length and spacing invariants and compute
/// `scalar_range` from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolumeDataset {
    id: String,
    dims: [usize; 3],
    spacing: [f64; 3],
    origin: [f64; 3],
    field_name: String,
    scalars: Vec<f64>,
    scalar_range: (f64, f64),
}

impl VolumeDataset {
    pub fn new(
        id: impl Into<String>,
        dims: [usize; 3],
        spacing: [f64; 3],
        origin: [f64; 3],
        field_name: impl Into<String>,
        scalars: Vec<f64>,
    ) -> Result<Self, VolumeError> {
        if dims.contains(&0) {
            return Err(VolumeError::BadDims(dims));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(VolumeError::BadSpacing(spacing));
        }
        let expected = dims[0]
            .checked_mul(dims[1])
            .and_then(|v| v.checked_mul(dims[2]))
            .ok_or(VolumeError::BadDims(dims))?;
        if scalars.len() != expected {
            return Err(VolumeError::LengthMismatch {
                dims,
                expected,
                actual: scalars.len(),
            });
        }
        if let Some(i) = scalars.iter().position(|v| !v.is_finite()) {
            return Err(VolumeError::NonFinite(i));
        }
        let (lo, hi) = scalars
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        Ok(Self {
            id: id.into(),
            dims,
            spacing,
            origin,
            field_name: field_name.into(),
            scalars,
            scalar_range: (lo, hi),
        })
    }

    /// Unit spacing, zero origin, scalars from `f(x, y, z)` in voxel coordinates.
    pub fn from_fn(
        id: impl Into<String>,
        dims: [usize; 3],
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self, VolumeError> {
        let mut scalars = Vec::with_capacity(dims.iter().product());
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    scalars.push(f(x, y, z));
                }
            }
        }
        Self::new(id, dims, [1.0; 3], [0.0; 3], "scalars", scalars)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn origin(&self) -> [f64; 3] {
        self.origin
    }

    pub fn field_name(&self) -> &str {
        &self.field_name
    }

    pub fn scalars(&self) -> &[f64] {
        &self.scalars
    }

    pub fn scalar_range(&self) -> (f64, f64) {
        self.scalar_range
    }

    pub fn voxel_count(&self) -> usize {
        self.scalars.len()
    }

    #[inline]
    pub fn linear_index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn value(&self, x: usize, y: usize, z: usize) -> f64 {
        self.scalars[self.linear_index(x, y, z)]
    }

    /// World-space position of the far corner (`origin + (dims - 1) * spacing`).
    pub fn world_max(&self) -> [f64; 3] {
        let mut out = self.origin;
        for (a, o) in out.iter_mut().enumerate() {
            *o += (self.dims[a].saturating_sub(1)) as f64 * self.spacing[a];
        }
        out
    }

    /// Returns a copy with a different id.
    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.id = id.into();
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_length_mismatch() {
        let err = VolumeDataset::new("v", [2, 2, 2], [1.0; 3], [0.0; 3], "f", vec![0.0; 7])
            .unwrap_err();
        assert!(matches!(err, VolumeError::LengthMismatch { expected: 8, .. }));
    }

    #[test]
    fn rejects_nonpositive_spacing() {
        let err = VolumeDataset::new("v", [1, 1, 1], [1.0, 0.0, 1.0], [0.0; 3], "f", vec![0.0])
            .unwrap_err();
        assert!(matches!(err, VolumeError::BadSpacing(_)));
    }

    #[test]
    fn single_voxel_range() {
        let v = VolumeDataset::new("v", [1, 1, 1], [1.0; 3], [0.0; 3], "f", vec![0.0]).unwrap();
        assert_eq!(v.scalar_range(), (0.0, 0.0));
    }

    #[test]
    fn x_fastest_layout() {
        let v = VolumeDataset::from_fn("v", [3, 4, 5], |x, y, z| (x + 10 * y + 100 * z) as f64)
            .unwrap();
        assert_eq!(v.scalars()[1], 1.0);
        assert_eq!(v.scalars()[3], 10.0);
        assert_eq!(v.scalars()[12], 100.0);
        assert_eq!(v.value(2, 3, 4), 432.0);
        assert_eq!(v.scalar_range(), (0.0, 432.0));
    }
}
