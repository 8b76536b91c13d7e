use serde::{Deserialize, Serialize};

use crate::error::{ImagingError, Result};
use crate::image::ImageGrid;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextureKind {
    Range,
    Std,
    Entropy,
}

impl std::str::FromStr for TextureKind {
    type Err = ImagingError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "range" | "rangefilt" => Ok(Self::Range),
            "std" | "stdfilt" => Ok(Self::Std),
            "entropy" | "entropyfilt" => Ok(Self::Entropy),
            other => Err(ImagingError::Parameter(format!("unknown texture kind `{other}`"))),
        }
    }
}

/// Window sizes and entropy quantization for the first-order filters.
/// Borders are replicated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborhoodConfig {
    pub range_window: usize,
    pub std_window: usize,
    pub entropy_window: usize,
    pub entropy_bins: usize,
    /// Histogram range for entropy; `None` uses the image's own min..max.
    #[serde(default)]
    pub quantization_range: Option<(f64, f64)>,
}

impl Default for NeighborhoodConfig {
    fn default() -> Self {
        Self {
            range_window: 3,
            std_window: 3,
            entropy_window: 9,
            entropy_bins: 256,
            quantization_range: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilteredImage {
    pub height: usize,
    pub width: usize,
    pub values: Vec<f64>,
    pub mean: f64,
}

/// Histogram bin of `v` over `[lo, hi]`; values outside land in the end bins.
#[inline]
pub(crate) fn quantize(v: f64, lo: f64, hi: f64, levels: usize) -> usize {
    if hi <= lo {
        return 0;
    }
    let q = ((v - lo) / (hi - lo) * levels as f64).floor();
    q.clamp(0.0, (levels - 1) as f64) as usize
}

fn window_values(image: &ImageGrid, r: usize, c: usize, half: isize, buf: &mut Vec<f64>) {
    buf.clear();
    for dr in -half..=half {
        for dc in -half..=half {
            buf.push(image.get_clamped(r as isize + dr, c as isize + dc) as f64);
        }
    }
}

/// Per-pixel window statistic and its image mean.
///
/// * `Range`: max − min.
/// * `Std`: unbiased (n − 1) standard deviation.
/// * `Entropy`: Shannon entropy in bits of the window's histogram.
pub fn neighborhood_texture(
    image: &ImageGrid,
    kind: TextureKind,
    config: &NeighborhoodConfig,
) -> Result<FilteredImage> {
    let window = match kind {
        TextureKind::Range => config.range_window,
        TextureKind::Std => config.std_window,
        TextureKind::Entropy => config.entropy_window,
    };
    if window % 2 == 0 || window == 0 {
        return Err(ImagingError::Parameter(format!("window side {window} must be odd")));
    }
    let (h, w) = image.dims();
    if h < window || w < window {
        return Err(ImagingError::Shape(format!("{h}x{w} image smaller than {window}x{window} window")));
    }
    let half = (window / 2) as isize;
    let (lo, hi) = config.quantization_range.unwrap_or_else(|| image.min_max());
    let bins = config.entropy_bins.max(1);
    let mut counts = vec![0usize; bins];
    let mut buf = Vec::with_capacity(window * window);
    let mut values = Vec::with_capacity(h * w);
    for r in 0..h {
        for c in 0..w {
            window_values(image, r, c, half, &mut buf);
            let v = match kind {
                TextureKind::Range => {
                    let (mn, mx) = buf
                        .iter()
                        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
                    mx - mn
                }
                TextureKind::Std => {
                    let n = buf.len() as f64;
                    let mean = buf.iter().sum::<f64>() / n;
                    (buf.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
                }
                TextureKind::Entropy => {
                    let n = buf.len() as f64;
                    let mut touched = Vec::with_capacity(buf.len());
                    for &v in &buf {
                        let b = quantize(v, lo, hi, bins);
                        if counts[b] == 0 {
                            touched.push(b);
                        }
                        counts[b] += 1;
                    }
                    let mut e = 0.0;
                    for b in touched {
                        let p = counts[b] as f64 / n;
                        e -= p * p.log2();
                        counts[b] = 0;
                    }
                    // -0.0 for a single occupied bin
                    e.max(0.0)
                }
            };
            values.push(v);
        }
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    Ok(FilteredImage {
        height: h,
        width: w,
        values,
        mean,
    })
}
