//! Adapter slot for an outside visualization toolkit. The toolkit runs as a
//! child process; nothing is linked in. Off unless a command is configured.

use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use crate::io::volr::write_volr;
use crate::render::{render_isosurface, CameraAngle, ImageBuffer, RenderError};
use crate::VolumeDataset;

/// Anything that turns (volume, isovalue, camera) into a frame.
pub trait IsosurfaceRenderer: Send + Sync {
    fn render(
        &self,
        vol: &VolumeDataset,
        isovalue: f64,
        camera: &CameraAngle,
        size: (usize, usize),
    ) -> Result<ImageBuffer, RenderError>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct ReferenceRenderer;

impl IsosurfaceRenderer for ReferenceRenderer {
    fn render(
        &self,
        vol: &VolumeDataset,
        isovalue: f64,
        camera: &CameraAngle,
        size: (usize, usize),
    ) -> Result<ImageBuffer, RenderError> {
        render_isosurface(vol, isovalue, camera, size)
    }
}

/// Runs `command... <volume.volr> <isovalue> <azimuth> <elevation> <width>
/// <height> <out.png>` in a scratch directory and reads back the PNG. The
/// child gets an empty environment apart from PATH.
#[derive(Debug, Clone)]
pub struct ExternalRenderer {
    pub command: Vec<String>,
    pub timeout: Duration,
    pub scratch_root: PathBuf,
}

static CALLS: AtomicU64 = AtomicU64::new(0);

impl ExternalRenderer {
    pub fn new(command: Vec<String>) -> Self {
        Self {
            command,
            timeout: Duration::from_secs(60),
            scratch_root: std::env::temp_dir(),
        }
    }

    fn failed(msg: String) -> RenderError {
        RenderError::External(msg)
    }
}

impl IsosurfaceRenderer for ExternalRenderer {
    fn render(
        &self,
        vol: &VolumeDataset,
        isovalue: f64,
        camera: &CameraAngle,
        size: (usize, usize),
    ) -> Result<ImageBuffer, RenderError> {
        let (program, args) = self
            .command
            .split_first()
            .ok_or_else(|| Self::failed("no external render command configured".into()))?;
        let n = CALLS.fetch_add(1, Ordering::SeqCst);
        let dir = self
            .scratch_root
            .join(format!("isoscope_ext_{}_{n}", std::process::id()));
        std::fs::create_dir_all(&dir).map_err(|e| Self::failed(e.to_string()))?;
        let result = (|| {
            let input = dir.join("volume.volr");
            let output = dir.join("frame.png");
            std::fs::write(&input, write_volr(vol)).map_err(|e| Self::failed(e.to_string()))?;
            let mut child = Command::new(program)
                .args(args)
                .arg(&input)
                .arg(isovalue.to_string())
                .arg(camera.azimuth_deg.to_string())
                .arg(camera.elevation_deg.to_string())
                .arg(size.0.to_string())
                .arg(size.1.to_string())
                .arg(&output)
                .current_dir(&dir)
                .env_clear()
                .env("PATH", "/usr/local/bin:/usr/bin:/bin")
                .stdin(Stdio::null())
                .stdout(Stdio::null())
                .stderr(Stdio::null())
                .spawn()
                .map_err(|e| Self::failed(format!("cannot start {program}: {e}")))?;
            let start = Instant::now();
            let status = loop {
                if let Some(s) = child.try_wait().map_err(|e| Self::failed(e.to_string()))? {
                    break s;
                }
                if start.elapsed() > self.timeout {
                    let _ = child.kill();
                    let _ = child.wait();
                    return Err(Self::failed(format!("{program} timed out")));
                }
                std::thread::sleep(Duration::from_millis(10));
            };
            if !status.success() {
                return Err(Self::failed(format!("{program} exited with {status}")));
            }
            let img = ImageBuffer::load_png(&output)?;
            if (img.width, img.height) != size {
                return Err(Self::failed(format!(
                    "expected a {}x{} frame, got {}x{}",
                    size.0, size.1, img.width, img.height
                )));
            }
            Ok(img)
        })();
        let _ = std::fs::remove_dir_all(&dir);
        result
    }
}
