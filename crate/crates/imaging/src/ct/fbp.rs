use std::f64::consts::PI;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::geometry::Sinogram;
use crate::error::{ImagingError, Result};
use crate::image::ImageGrid;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RampFilter {
    #[default]
    RamLak,
    Hann,
}

impl std::str::FromStr for RampFilter {
    type Err = ImagingError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ram-lak" => Ok(Self::RamLak),
            "hann" => Ok(Self::Hann),
            other => Err(ImagingError::Parameter(format!("unknown filter `{other}`"))),
        }
    }
}

/// Frequency response of the band-limited ramp on a padded grid of length
/// `len`, built as the DFT of the sampled spatial kernel (unit spacing):
/// `h[0] = 1/4`, `h[n] = −1/(π n)²` for odd `n`, zero otherwise.
fn ramp_response(len: usize, filter: RampFilter) -> Vec<f64> {
    let mut kernel = vec![Complex::new(0.0, 0.0); len];
    kernel[0].re = 0.25;
    for n in (1..len / 2).step_by(2) {
        let v = -1.0 / (PI * n as f64).powi(2);
        kernel[n].re = v;
        kernel[len - n].re = v;
    }
    FftPlanner::new().plan_fft_forward(len).process(&mut kernel);
    (0..len)
        .map(|k| {
            let response = kernel[k].re;
            match filter {
                RampFilter::RamLak => response,
                RampFilter::Hann => {
                    let f = k.min(len - k) as f64 / len as f64;
                    response * 0.5 * (1.0 + (2.0 * PI * f).cos())
                }
            }
        })
        .collect()
}

/// Filtered backprojection onto a `height × width` grid.
///
/// Each projection is ramp-filtered in the frequency domain on a zero-padded
/// grid (length ≥ 2·n_detectors, power of two), then backprojected with
/// linear interpolation and scaled by `π / n_angles`. Linear in the sinogram.
pub fn fbp(sinogram: &Sinogram, filter: RampFilter, height: usize, width: usize) -> Result<ImageGrid> {
    let geometry = sinogram.geometry();
    if geometry.n_angles() < 2 {
        return Err(ImagingError::Geometry(format!(
            "filtered backprojection needs at least 2 angles, got {}",
            geometry.n_angles()
        )));
    }
    let n_det = geometry.n_detectors;
    let spacing = geometry.detector_spacing;
    let padded = (2 * n_det).next_power_of_two();
    let response = ramp_response(padded, filter);
    let mut planner = FftPlanner::<f64>::new();
    let forward = planner.plan_fft_forward(padded);
    let inverse = planner.plan_fft_inverse(padded);

    let mut filtered = vec![0.0f64; geometry.n_angles() * n_det];
    let mut buf = vec![Complex::new(0.0, 0.0); padded];
    for a in 0..geometry.n_angles() {
        buf.iter_mut().for_each(|z| *z = Complex::new(0.0, 0.0));
        for (z, &p) in buf.iter_mut().zip(sinogram.projection(a)) {
            z.re = p as f64;
        }
        forward.process(&mut buf);
        for (z, &r) in buf.iter_mut().zip(&response) {
            *z *= r;
        }
        inverse.process(&mut buf);
        // 1/padded undoes the unnormalized inverse FFT; 1/spacing converts
        // the unit-spacing kernel to physical detector spacing.
        let scale = 1.0 / (padded as f64 * spacing);
        for (out, z) in filtered[a * n_det..(a + 1) * n_det].iter_mut().zip(&buf) {
            *out = z.re * scale;
        }
    }

    let cx = (width as f64 - 1.0) / 2.0;
    let cy = (height as f64 - 1.0) / 2.0;
    let center = (n_det as f64 - 1.0) / 2.0;
    let trig: Vec<(f64, f64)> = geometry.angles.iter().map(|t| t.sin_cos()).collect();
    let mut image = vec![0.0f64; height * width];
    for r in 0..height {
        let y = cy - r as f64;
        for c in 0..width {
            let x = c as f64 - cx;
            let mut acc = 0.0;
            for (a, &(sin, cos)) in trig.iter().enumerate() {
                let u = (x * cos + y * sin) / spacing + center;
                if u < 0.0 || u > (n_det - 1) as f64 {
                    continue;
                }
                let i0 = u.floor() as usize;
                let frac = u - i0 as f64;
                let row = &filtered[a * n_det..(a + 1) * n_det];
                let v0 = row[i0];
                let v1 = if i0 + 1 < n_det { row[i0 + 1] } else { v0 };
                acc += v0 + frac * (v1 - v0);
            }
            image[r * width + c] = acc * PI / geometry.n_angles() as f64;
        }
    }
    ImageGrid::from_f64(height, width, &image)
}
