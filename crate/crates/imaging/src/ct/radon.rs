use super::geometry::{ProjectionGeometry, Sinogram};
use crate::error::Result;
use crate::image::ImageGrid;

/// Sampling step along each ray, in pixels.
const RAY_STEP: f64 = 0.05;

/// Value of the square pixel containing `(x, y)`, zero outside the grid;
/// `(x, y)` are centered coordinates with `y` pointing up.
#[inline]
fn sample(img: &[f64], h: usize, w: usize, x: f64, y: f64) -> f64 {
    let col = (x + w as f64 / 2.0).floor();
    let row = (h as f64 / 2.0 - y).floor();
    if col < 0.0 || row < 0.0 || col >= w as f64 || row >= h as f64 {
        0.0
    } else {
        img[row as usize * w + col as usize]
    }
}

/// Parallel-beam forward projection.
///
/// Entry `(a, d)` is the line integral (in pixel-length units) along the ray
/// `x cos θ + y sin θ = s_d`, evaluated by midpoint quadrature of the
/// piecewise-constant (square pixel) image with step [`RAY_STEP`]. Linear in `image`.
pub fn radon(image: &ImageGrid, geometry: &ProjectionGeometry) -> Result<Sinogram> {
    let (h, w) = image.dims();
    geometry.covers(h, w)?;
    let img = image.to_f64();
    let half_diag = 0.5 * ((h * h + w * w) as f64).sqrt() + 1.0;
    let n_steps = (2.0 * half_diag / RAY_STEP).ceil() as usize;
    let t0 = -(n_steps as f64) * RAY_STEP / 2.0;
    let n_det = geometry.n_detectors;
    let mut out = vec![0.0f32; geometry.n_angles() * n_det];
    for (a, &theta) in geometry.angles.iter().enumerate() {
        let (sin, cos) = theta.sin_cos();
        for d in 0..n_det {
            let s = geometry.detector_offset(d);
            if s.abs() > half_diag {
                continue;
            }
            let mut acc = 0.0;
            for k in 0..n_steps {
                let t = t0 + (k as f64 + 0.5) * RAY_STEP;
                let x = s * cos - t * sin;
                let y = s * sin + t * cos;
                acc += sample(&img, h, w, x, y);
            }
            out[a * n_det + d] = (acc * RAY_STEP) as f32;
        }
    }
    Sinogram::new(geometry.clone(), out)
}
