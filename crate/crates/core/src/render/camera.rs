use serde::{Deserialize, Serialize};

/// Viewing direction for orthographic renders. The camera sits on the unit
/// sphere at (azimuth, elevation) around the volume center and looks inward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraAngle {
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
    pub label: String,
}

pub const CANONICAL_ELEVATION_DEG: f64 = 20.0;

impl CameraAngle {
    pub fn new(azimuth_deg: f64, elevation_deg: f64, label: impl Into<String>) -> Self {
        Self {
            azimuth_deg: azimuth_deg.rem_euclid(360.0),
            elevation_deg: elevation_deg.clamp(-90.0, 90.0),
            label: label.into(),
        }
    }

    /// Six views, azimuth 0..300 step 60 at 20 degrees elevation, labelled
    /// `angle_0` .. `angle_5`.
    pub fn canonical() -> Vec<CameraAngle> {
        (0..6)
            .map(|i| {
                CameraAngle::new(
                    60.0 * i as f64,
                    CANONICAL_ELEVATION_DEG,
                    format!("angle_{i}"),
                )
            })
            .collect()
    }

    pub fn canonical_by_label(label: &str) -> Option<CameraAngle> {
        Self::canonical().into_iter().find(|a| a.label == label)
    }

    /// Unit vector from the scene center towards the camera.
    pub fn eye_direction(&self) -> [f64; 3] {
        let az = self.azimuth_deg.to_radians();
        let el = self.elevation_deg.to_radians();
        [el.cos() * az.cos(), el.cos() * az.sin(), el.sin()]
    }
}
