//! Volume file formats: VTK XML ImageData (`.vti`) and the raw `.volr` fixture format.

use std::path::Path;

use thiserror::Error;

use crate::volume::{VolumeDataset, VolumeError};

pub mod volr;
pub mod vti;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("volume file not found: {0}")]
    MissingFile(String),
    #[error("malformed volume: {0}")]
    MalformedVolume(String),
    #[error("unsupported volume format: {0}")]
    UnsupportedFormat(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<VolumeError> for LoadError {
    fn from(e: VolumeError) -> Self {
        LoadError::MalformedVolume(e.to_string())
    }
}

/// Dataset id derived from the file stem (`all_data/headsq.vti` -> `headsq`).
pub fn id_from_path(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "volume".to_owned())
}

/// Loads a volume, dispatching on the file extension.
pub fn load_volume(path: impl AsRef<Path>) -> Result<VolumeDataset, LoadError> {
    let path = path.as_ref();
    if !path.is_file() {
        return Err(LoadError::MissingFile(path.display().to_string()));
    }
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default();
    let parse: fn(&[u8], &str) -> Result<VolumeDataset, LoadError> = match ext.as_str() {
        "vti" => vti::parse_vti,
        "volr" => volr::parse_volr,
        other => {
            return Err(LoadError::UnsupportedFormat(format!(
                "extension {other:?} ({})",
                path.display()
            )))
        }
    };
    let bytes = std::fs::read(path)?;
    parse(&bytes, &id_from_path(path))
}

/// Writes a volume in the format implied by the extension.
pub fn save_volume(vol: &VolumeDataset, path: impl AsRef<Path>) -> Result<(), LoadError> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default();
    let bytes = match ext.as_str() {
        "vti" => vti::write_vti(vol, vti::Encoding::Base64).into_bytes(),
        "volr" => volr::write_volr(vol),
        other => return Err(LoadError::UnsupportedFormat(format!("extension {other:?}"))),
    };
    std::fs::write(path, bytes)?;
    Ok(())
}
