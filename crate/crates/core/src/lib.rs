//! Volume data model, file formats, analysis tools, the reference renderer
//! and quantitative metrics.

pub mod analysis;
pub mod catalog;
pub mod clock;
pub mod io;
pub mod metrics;
pub mod render;
pub mod text;
pub mod volume;

pub use volume::{Axis, VolumeDataset, VolumeError};
