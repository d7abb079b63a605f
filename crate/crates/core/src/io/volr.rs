//! `.volr`: one ASCII header line `nx ny nz sx sy sz x0 y0 z0 field_name`
//! followed by `nx*ny*nz` little-endian `f32` scalars.

use super::LoadError;
use crate::volume::VolumeDataset;

pub fn parse_volr(bytes: &[u8], id: &str) -> Result<VolumeDataset, LoadError> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| LoadError::MalformedVolume("missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..nl])
        .map_err(|_| LoadError::MalformedVolume("header is not UTF-8".into()))?;
    let mut parts = header.split_whitespace();
    let mut dims = [0usize; 3];
    for d in dims.iter_mut() {
        *d = parts
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| LoadError::MalformedVolume(format!("bad dims in header {header:?}")))?;
    }
    let mut reals = [0f64; 6];
    for r in reals.iter_mut() {
        *r = parts.next().and_then(|t| t.parse().ok()).ok_or_else(|| {
            LoadError::MalformedVolume(format!("bad spacing/origin in header {header:?}"))
        })?;
    }
    let field_name = parts.collect::<Vec<_>>().join(" ");
    if field_name.is_empty() {
        return Err(LoadError::MalformedVolume("missing field name".into()));
    }
    let n = dims[0]
        .checked_mul(dims[1])
        .and_then(|v| v.checked_mul(dims[2]))
        .ok_or_else(|| LoadError::MalformedVolume("dims overflow".into()))?;
    let data = &bytes[nl + 1..];
    if Some(data.len()) != n.checked_mul(4) {
        return Err(LoadError::MalformedVolume(format!(
            "expected {n} f32 scalars, found {} bytes",
            data.len()
        )));
    }
    let scalars = data
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok(VolumeDataset::new(
        id,
        dims,
        [reals[0], reals[1], reals[2]],
        [reals[3], reals[4], reals[5]],
        field_name,
        scalars,
    )?)
}

/// Serializes to `.volr`. Scalars are narrowed to `f32`.
pub fn write_volr(vol: &VolumeDataset) -> Vec<u8> {
    let [nx, ny, nz] = vol.dims();
    let [sx, sy, sz] = vol.spacing();
    let [x0, y0, z0] = vol.origin();
    let mut out = format!(
        "{nx} {ny} {nz} {sx} {sy} {sz} {x0} {y0} {z0} {}\n",
        vol.field_name()
    )
    .into_bytes();
    out.reserve(vol.voxel_count() * 4);
    for &v in vol.scalars() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}
