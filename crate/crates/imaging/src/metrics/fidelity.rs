use serde::{Deserialize, Serialize};

use crate::error::{ImagingError, Result};
use crate::image::ImageGrid;

fn check_range(data_range: f64) -> Result<()> {
    if !(data_range > 0.0) {
        return Err(ImagingError::Parameter(format!("data range {data_range} must be > 0")));
    }
    Ok(())
}

fn psnr_from_mse(mse: f64, data_range: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (data_range * data_range / mse).log10()
    }
}

/// `10·log10(range² / MSE)` in dB; identical images give `+∞`.
pub fn psnr(a: &ImageGrid, b: &ImageGrid, data_range: f64) -> Result<f64> {
    a.same_shape(b)?;
    check_range(data_range)?;
    let sse: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum();
    Ok(psnr_from_mse(sse / a.len() as f64, data_range))
}

/// PSNR restricted to pixels where `mask` is true.
pub fn psnr_masked(a: &ImageGrid, b: &ImageGrid, data_range: f64, mask: &[bool]) -> Result<f64> {
    a.same_shape(b)?;
    check_range(data_range)?;
    if mask.len() != a.len() {
        return Err(ImagingError::Shape(format!("mask has {} entries for {} pixels", mask.len(), a.len())));
    }
    let (sse, n) = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .zip(mask)
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, n), ((&x, &y), _)| (s + (x as f64 - y as f64).powi(2), n + 1));
    if n == 0 {
        return Err(ImagingError::Parameter("empty mask".into()));
    }
    Ok(psnr_from_mse(sse / n as f64, data_range))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsimConfig {
    pub window: usize,
    pub sigma: f64,
    pub k1: f64,
    pub k2: f64,
}

impl Default for SsimConfig {
    fn default() -> Self {
        Self {
            window: 11,
            sigma: 1.5,
            k1: 0.01,
            k2: 0.03,
        }
    }
}

impl SsimConfig {
    /// Normalized 1-D Gaussian taps; the 2-D window is their outer product.
    pub fn taps(&self) -> Vec<f64> {
        let c = (self.window as f64 - 1.0) / 2.0;
        let raw: Vec<f64> = (0..self.window)
            .map(|i| (-(i as f64 - c).powi(2) / (2.0 * self.sigma * self.sigma)).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        raw.iter().map(|v| v / total).collect()
    }
}

/// Separable weighted sums over every fully contained window position.
fn filter_valid(src: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let k = taps.len();
    let (ho, wo) = (h - k + 1, w - k + 1);
    let mut rows = vec![0.0; h * wo];
    for r in 0..h {
        for c in 0..wo {
            rows[r * wo + c] = taps.iter().enumerate().map(|(t, wt)| wt * src[r * w + c + t]).sum();
        }
    }
    let mut out = vec![0.0; ho * wo];
    for r in 0..ho {
        for c in 0..wo {
            out[r * wo + c] = taps.iter().enumerate().map(|(t, wt)| wt * rows[(r + t) * wo + c]).sum();
        }
    }
    out
}

/// Mean structural similarity over valid (unpadded) Gaussian windows.
pub fn ssim(a: &ImageGrid, b: &ImageGrid, data_range: f64, config: &SsimConfig) -> Result<f64> {
    a.same_shape(b)?;
    check_range(data_range)?;
    let (h, w) = a.dims();
    if h < config.window || w < config.window {
        return Err(ImagingError::Shape(format!(
            "{h}x{w} image smaller than {0}x{0} SSIM window",
            config.window
        )));
    }
    let taps = config.taps();
    let x = a.to_f64();
    let y = b.to_f64();
    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(&y).map(|(p, q)| p * q).collect();
    let mx = filter_valid(&x, h, w, &taps);
    let my = filter_valid(&y, h, w, &taps);
    let sxx = filter_valid(&xx, h, w, &taps);
    let syy = filter_valid(&yy, h, w, &taps);
    let sxy = filter_valid(&xy, h, w, &taps);
    let c1 = (config.k1 * data_range).powi(2);
    let c2 = (config.k2 * data_range).powi(2);
    let total: f64 = (0..mx.len())
        .map(|i| {
            let vx = sxx[i] - mx[i] * mx[i];
            let vy = syy[i] - my[i] * my[i];
            let cov = sxy[i] - mx[i] * my[i];
            ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2))
                / ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2))
        })
        .sum();
    Ok(total / mx.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_analytic() {
        let a = ImageGrid::zeros(4, 4);
        let b = ImageGrid::new(4, 4, vec![0.1; 16]).unwrap();
        assert!((psnr(&a, &b, 1.0).unwrap() - 20.0).abs() < 1e-6);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), f64::INFINITY);
        assert!(psnr(&a, &ImageGrid::zeros(3, 4), 1.0).is_err());
    }

    #[test]
    fn ssim_of_identical_images_is_one() {
        let a = ImageGrid::from_fn(16, 16, |r, c| ((r * 31 + c * 17) % 13) as f64 / 13.0).unwrap();
        assert_eq!(ssim(&a, &a, 1.0, &SsimConfig::default()).unwrap(), 1.0);
    }

    #[test]
    fn ssim_rejects_small_images() {
        let a = ImageGrid::zeros(8, 8);
        assert!(ssim(&a, &a, 1.0, &SsimConfig::default()).is_err());
    }
}
