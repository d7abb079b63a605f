//! Reference isosurface renderer: orthographic raycasting with a headlight.

use rayon::prelude::*;

use super::camera::CameraAngle;
use super::image::ImageBuffer;
use super::RenderError;
use crate::volume::VolumeDataset;

const AMBIENT: f64 = 0.15;
const SURFACE_RGB: [f64; 3] = [241.0, 214.0, 170.0];
const REFINE_STEPS: usize = 8;

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn add_scaled(a: [f64; 3], b: [f64; 3], s: f64) -> [f64; 3] {
    [a[0] + b[0] * s, a[1] + b[1] * s, a[2] + b[2] * s]
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn normalize(a: [f64; 3]) -> Option<[f64; 3]> {
    let n = dot(a, a).sqrt();
    (n > 1e-300).then(|| [a[0] / n, a[1] / n, a[2] / n])
}

/// Trilinear sampler over a volume in world coordinates.
struct Sampler<'a> {
    vol: &'a VolumeDataset,
    dims: [usize; 3],
    origin: [f64; 3],
    spacing: [f64; 3],
}

impl<'a> Sampler<'a> {
    fn new(vol: &'a VolumeDataset) -> Self {
        Self {
            vol,
            dims: vol.dims(),
            origin: vol.origin(),
            spacing: vol.spacing(),
        }
    }

    /// Cell index and fractional offsets for a world point, or `None` outside.
    fn locate(&self, p: [f64; 3]) -> Option<([usize; 3], [f64; 3])> {
        let mut cell = [0usize; 3];
        let mut frac = [0f64; 3];
        for a in 0..3 {
            let u = (p[a] - self.origin[a]) / self.spacing[a];
            let max = (self.dims[a] - 1) as f64;
            if !(u >= -1e-9 && u <= max + 1e-9) {
                return None;
            }
            let u = u.clamp(0.0, max);
            let i = (u.floor() as usize).min(self.dims[a] - 2);
            cell[a] = i;
            frac[a] = u - i as f64;
        }
        Some((cell, frac))
    }

    fn trilinear(&self, cell: [usize; 3], t: [f64; 3], f: impl Fn(usize, usize, usize) -> f64) -> f64 {
        let [x, y, z] = cell;
        let c00 = f(x, y, z) * (1.0 - t[0]) + f(x + 1, y, z) * t[0];
        let c10 = f(x, y + 1, z) * (1.0 - t[0]) + f(x + 1, y + 1, z) * t[0];
        let c01 = f(x, y, z + 1) * (1.0 - t[0]) + f(x + 1, y, z + 1) * t[0];
        let c11 = f(x, y + 1, z + 1) * (1.0 - t[0]) + f(x + 1, y + 1, z + 1) * t[0];
        let c0 = c00 * (1.0 - t[1]) + c10 * t[1];
        let c1 = c01 * (1.0 - t[1]) + c11 * t[1];
        c0 * (1.0 - t[2]) + c1 * t[2]
    }

    fn sample(&self, p: [f64; 3]) -> Option<f64> {
        let (cell, t) = self.locate(p)?;
        Some(self.trilinear(cell, t, |x, y, z| self.vol.value(x, y, z)))
    }

    /// Central-difference gradient at a grid node (one-sided at borders).
    fn node_gradient(&self, x: usize, y: usize, z: usize, axis: usize) -> f64 {
        let idx = [x, y, z];
        let n = self.dims[axis];
        let (lo, hi) = (idx[axis].saturating_sub(1), (idx[axis] + 1).min(n - 1));
        let mut a = idx;
        let mut b = idx;
        a[axis] = lo;
        b[axis] = hi;
        let span = (hi - lo) as f64 * self.spacing[axis];
        (self.vol.value(b[0], b[1], b[2]) - self.vol.value(a[0], a[1], a[2])) / span
    }

    fn gradient(&self, p: [f64; 3]) -> Option<[f64; 3]> {
        let (cell, t) = self.locate(p)?;
        let mut g = [0.0; 3];
        for (axis, gv) in g.iter_mut().enumerate() {
            *gv = self.trilinear(cell, t, |x, y, z| self.node_gradient(x, y, z, axis));
        }
        Some(g)
    }
}

/// Ray/box slab test; returns the parametric interval inside the box.
fn clip_ray(p0: [f64; 3], dir: [f64; 3], lo: [f64; 3], hi: [f64; 3]) -> Option<(f64, f64)> {
    let mut t0 = f64::NEG_INFINITY;
    let mut t1 = f64::INFINITY;
    for a in 0..3 {
        if dir[a].abs() < 1e-15 {
            if p0[a] < lo[a] || p0[a] > hi[a] {
                return None;
            }
        } else {
            let ta = (lo[a] - p0[a]) / dir[a];
            let tb = (hi[a] - p0[a]) / dir[a];
            t0 = t0.max(ta.min(tb));
            t1 = t1.min(ta.max(tb));
        }
    }
    (t1 >= t0).then_some((t0, t1))
}

/// Orthographic isosurface render. The image plane is a square of side
/// `2R` (R = half the bounding-box diagonal) centered on the volume, so every
/// view of a cubic volume has the same world-space pixel size.
pub fn render_isosurface(
    vol: &VolumeDataset,
    isovalue: f64,
    camera: &CameraAngle,
    size: (usize, usize),
) -> Result<ImageBuffer, RenderError> {
    let dims = vol.dims();
    if dims.iter().any(|&d| d < 2) {
        return Err(RenderError::DegenerateVolume(dims));
    }
    let (w, h) = size;
    let (lo_v, hi_v) = vol.scalar_range();
    if !(lo_v <= isovalue && isovalue <= hi_v) {
        log::warn!(
            "empty surface: isovalue {isovalue} outside scalar range [{lo_v}, {hi_v}] of {}",
            vol.id()
        );
        return Ok(ImageBuffer::new(w, h));
    }

    let sampler = Sampler::new(vol);
    let lo = vol.origin();
    let hi = vol.world_max();
    let center = [
        0.5 * (lo[0] + hi[0]),
        0.5 * (lo[1] + hi[1]),
        0.5 * (lo[2] + hi[2]),
    ];
    let radius = 0.5 * dot(sub(hi, lo), sub(hi, lo)).sqrt();
    let eye = camera.eye_direction();
    let world_up = if eye[2].abs() > 0.999 {
        [0.0, 1.0, 0.0]
    } else {
        [0.0, 0.0, 1.0]
    };
    let right = normalize(cross(world_up, eye)).unwrap_or([1.0, 0.0, 0.0]);
    let up = cross(eye, right);
    let dir = [-eye[0], -eye[1], -eye[2]];
    let spacing = vol.spacing();
    let step = 0.5 * spacing.iter().cloned().fold(f64::INFINITY, f64::min);
    let plane_origin = add_scaled(center, eye, radius + step);

    let mut img = ImageBuffer::new(w, h);
    img.pixels
        .par_chunks_mut(3 * w.max(1))
        .enumerate()
        .for_each(|(row, line)| {
            let v = radius - (row as f64 + 0.5) / h as f64 * 2.0 * radius;
            for col in 0..w {
                let u = (col as f64 + 0.5) / w as f64 * 2.0 * radius - radius;
                let p0 = add_scaled(add_scaled(plane_origin, right, u), up, v);
                if let Some(shade) = cast(&sampler, p0, dir, eye, lo, hi, step, isovalue) {
                    for c in 0..3 {
                        line[3 * col + c] = (SURFACE_RGB[c] * shade).round().clamp(1.0, 255.0) as u8;
                    }
                }
            }
        });
    Ok(img)
}

#[allow(clippy::too_many_arguments)]
fn cast(
    s: &Sampler<'_>,
    p0: [f64; 3],
    dir: [f64; 3],
    eye: [f64; 3],
    lo: [f64; 3],
    hi: [f64; 3],
    step: f64,
    iso: f64,
) -> Option<f64> {
    let (t0, t1) = clip_ray(p0, dir, lo, hi)?;
    let mut t_prev = t0.max(0.0);
    let mut f_prev = s.sample(add_scaled(p0, dir, t_prev))?;
    let n_steps = ((t1 - t_prev) / step).ceil() as usize;
    for k in 1..=n_steps {
        let t = (t_prev + step).min(t1);
        let Some(f) = s.sample(add_scaled(p0, dir, t)) else {
            break;
        };
        if (f_prev >= iso) != (f >= iso) {
            // bisect the bracket, then interpolate linearly inside it
            let (mut a, mut fa, mut b, mut fb) = (t_prev, f_prev, t, f);
            for _ in 0..REFINE_STEPS {
                let m = 0.5 * (a + b);
                let fm = s.sample(add_scaled(p0, dir, m)).unwrap_or(fa);
                if (fa >= iso) != (fm >= iso) {
                    b = m;
                    fb = fm;
                } else {
                    a = m;
                    fa = fm;
                }
            }
            let th = if (fb - fa).abs() > 0.0 {
                a + (b - a) * (iso - fa) / (fb - fa)
            } else {
                0.5 * (a + b)
            };
            let g = s.gradient(add_scaled(p0, dir, th)).unwrap_or([0.0; 3]);
            let diffuse = normalize(g).map(|n| dot(n, eye).abs()).unwrap_or(0.0);
            return Some(AMBIENT + (1.0 - AMBIENT) * diffuse);
        }
        t_prev = t;
        f_prev = f;
        if k == n_steps {
            break;
        }
    }
    None
}
