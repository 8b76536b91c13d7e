use serde::{Deserialize, Serialize};

use super::neighborhood::quantize;
use crate::error::{ImagingError, Result};
use crate::image::ImageGrid;

/// Pixel displacement `(d_row, d_col)` of a co-occurring pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Offset {
    pub d_row: isize,
    pub d_col: isize,
}

impl Offset {
    pub const fn new(d_row: isize, d_col: isize) -> Self {
        Self { d_row, d_col }
    }

    /// Distance-1 neighbors at 0°, 45°, 90° and 135°.
    pub fn four_directions() -> Vec<Offset> {
        vec![Offset::new(0, 1), Offset::new(-1, 1), Offset::new(-1, 0), Offset::new(-1, -1)]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlcmConfig {
    pub levels: usize,
    pub offsets: Vec<Offset>,
    pub symmetric: bool,
    /// Quantization range; `None` uses the image's own min..max.
    #[serde(default)]
    pub range: Option<(f64, f64)>,
}

impl Default for GlcmConfig {
    fn default() -> Self {
        Self {
            levels: 64,
            offsets: Offset::four_directions(),
            symmetric: true,
            range: None,
        }
    }
}

/// Normalized co-occurrence matrix, row-major `levels × levels`.
#[derive(Clone, Debug, PartialEq)]
pub struct Glcm {
    pub levels: usize,
    pub p: Vec<f64>,
}

impl Glcm {
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.p[i * self.levels + j]
    }
}

/// Co-occurrence counts per offset, symmetrized if configured, each
/// normalized to unit mass and then averaged over offsets.
pub fn glcm_compute(image: &ImageGrid, config: &GlcmConfig) -> Result<Glcm> {
    if config.levels < 2 {
        return Err(ImagingError::Parameter(format!("GLCM needs >= 2 levels, got {}", config.levels)));
    }
    if config.offsets.is_empty() {
        return Err(ImagingError::Parameter("GLCM needs at least one offset".into()));
    }
    let (lo, hi) = config.range.unwrap_or_else(|| image.min_max());
    if !(hi > lo) {
        return Err(ImagingError::DegenerateRange { lo, hi });
    }
    let levels = config.levels;
    let (h, w) = image.dims();
    let q: Vec<usize> = image
        .pixels()
        .iter()
        .map(|&v| quantize(v as f64, lo, hi, levels))
        .collect();
    let mut total = vec![0.0; levels * levels];
    let mut used = 0usize;
    for off in &config.offsets {
        let mut counts = vec![0.0; levels * levels];
        let mut n = 0.0;
        for r in 0..h as isize {
            let r2 = r + off.d_row;
            if r2 < 0 || r2 >= h as isize {
                continue;
            }
            for c in 0..w as isize {
                let c2 = c + off.d_col;
                if c2 < 0 || c2 >= w as isize {
                    continue;
                }
                let a = q[r as usize * w + c as usize];
                let b = q[r2 as usize * w + c2 as usize];
                counts[a * levels + b] += 1.0;
                n += 1.0;
                if config.symmetric {
                    counts[b * levels + a] += 1.0;
                    n += 1.0;
                }
            }
        }
        if n == 0.0 {
            continue;
        }
        for (t, c) in total.iter_mut().zip(&counts) {
            *t += c / n;
        }
        used += 1;
    }
    if used == 0 {
        return Err(ImagingError::Shape(format!("no pixel pairs fit in a {h}x{w} image")));
    }
    for t in &mut total {
        *t /= used as f64;
    }
    Ok(Glcm { levels, p: total })
}

/// Haralick-style features; `correlation` is `None` when a marginal has zero
/// variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlcmFeatures {
    pub contrast: f64,
    pub correlation: Option<f64>,
    pub energy: f64,
    pub homogeneity: f64,
}

pub fn glcm_features(m: &Glcm) -> GlcmFeatures {
    let n = m.levels;
    let (mut mu_i, mut mu_j) = (0.0, 0.0);
    let (mut contrast, mut energy, mut homogeneity) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let p = m.at(i, j);
            let d = i as f64 - j as f64;
            mu_i += i as f64 * p;
            mu_j += j as f64 * p;
            contrast += p * d * d;
            energy += p * p;
            homogeneity += p / (1.0 + d.abs());
        }
    }
    let (mut var_i, mut var_j, mut cov) = (0.0, 0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            let p = m.at(i, j);
            let (di, dj) = (i as f64 - mu_i, j as f64 - mu_j);
            var_i += p * di * di;
            var_j += p * dj * dj;
            cov += p * di * dj;
        }
    }
    let denom = (var_i * var_j).sqrt();
    let correlation = (var_i > 1e-15 && var_j > 1e-15).then(|| cov / denom);
    GlcmFeatures {
        contrast,
        correlation,
        energy,
        homogeneity,
    }
}
