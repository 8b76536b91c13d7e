//! Classical comparison methods: non-local means and blending.

use serde::{Deserialize, Serialize};

use crate::error::{ImagingError, Result};
use crate::image::ImageGrid;

/// Non-local means parameters. Radii are in pixels (`1` → 3×3 patch,
/// `5` → 11×11 search window).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NlmConfig {
    pub patch_radius: usize,
    pub search_radius: usize,
    /// Filtering strength in intensity units.
    pub h: f64,
    /// Noise standard deviation; estimated from the flattest block when absent.
    #[serde(default)]
    pub sigma: Option<f64>,
}

impl Default for NlmConfig {
    fn default() -> Self {
        Self {
            patch_radius: 1,
            search_radius: 5,
            h: 0.05,
            sigma: None,
        }
    }
}

/// Standard deviation of the flattest 8×8 tile.
pub fn estimate_noise_sigma(image: &ImageGrid) -> f64 {
    const TILE: usize = 8;
    let (h, w) = image.dims();
    if h < TILE || w < TILE {
        return 0.0;
    }
    let mut best = f64::INFINITY;
    for r0 in (0..=h - TILE).step_by(TILE) {
        for c0 in (0..=w - TILE).step_by(TILE) {
            let vals: Vec<f64> = (r0..r0 + TILE)
                .flat_map(|r| (c0..c0 + TILE).map(move |c| (r, c)))
                .map(|(r, c)| image.get(r, c) as f64)
                .collect();
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            best = best.min(var);
        }
    }
    best.sqrt()
}

/// Non-local means with the noise-compensated weight
/// `exp(−max(d² − 2σ², 0) / h²)`, `d²` the mean squared patch difference.
/// Borders replicate.
pub fn nlm_filter(image: &ImageGrid, config: &NlmConfig) -> Result<ImageGrid> {
    if !(config.h > 0.0) || config.patch_radius < 1 || config.search_radius < 1 {
        return Err(ImagingError::Parameter(format!("invalid NLM config {config:?}")));
    }
    let (h, w) = image.dims();
    let side = 2 * config.search_radius + 1;
    if h < side || w < side {
        return Err(ImagingError::Shape(format!("{h}x{w} image smaller than {side}x{side} search window")));
    }
    let sigma = config.sigma.unwrap_or_else(|| estimate_noise_sigma(image));
    let bias = 2.0 * sigma * sigma;
    let h2 = config.h * config.h;
    let pr = config.patch_radius as isize;
    let sr = config.search_radius as isize;
    let patch_n = ((2 * pr + 1) * (2 * pr + 1)) as f64;

    // Padded copy so patch reads need no bounds checks.
    let pad = pr + sr;
    let (ph, pw) = (h + 2 * pad as usize, w + 2 * pad as usize);
    let mut padded = vec![0.0f64; ph * pw];
    for r in 0..ph {
        for c in 0..pw {
            padded[r * pw + c] = image.get_clamped(r as isize - pad, c as isize - pad) as f64;
        }
    }
    let at = |r: isize, c: isize| padded[(r + pad) as usize * pw + (c + pad) as usize];

    let mut out = Vec::with_capacity(h * w);
    for r in 0..h as isize {
        for c in 0..w as isize {
            let center = at(r, c);
            let (mut wsum, mut acc) = (0.0, 0.0);
            for dr in -sr..=sr {
                for dc in -sr..=sr {
                    let mut d2 = 0.0;
                    for pr_ in -pr..=pr {
                        for pc in -pr..=pr {
                            let diff = at(r + pr_, c + pc) - at(r + dr + pr_, c + dc + pc);
                            d2 += diff * diff;
                        }
                    }
                    let d2 = d2 / patch_n;
                    let weight = (-(d2 - bias).max(0.0) / h2).exp();
                    wsum += weight;
                    acc += weight * (at(r + dr, c + dc) - center);
                }
            }
            // Accumulating offsets from the center keeps flat regions exact.
            out.push(center + acc / wsum);
        }
    }
    ImageGrid::from_f64(h, w, &out)
}

/// `alpha · a + (1 − alpha) · b`.
pub fn blend(a: &ImageGrid, b: &ImageGrid, alpha: f64) -> Result<ImageGrid> {
    a.same_shape(b)?;
    if !(0.0..=1.0).contains(&alpha) {
        return Err(ImagingError::Parameter(format!("blend factor {alpha} outside [0, 1]")));
    }
    let data: Vec<f64> = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(&x, &y)| alpha * x as f64 + (1.0 - alpha) * y as f64)
        .collect();
    ImageGrid::from_f64(a.height(), a.width(), &data)
}
