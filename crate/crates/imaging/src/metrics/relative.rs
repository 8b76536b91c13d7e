use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::fidelity::{psnr, psnr_masked, ssim, SsimConfig};
use super::glcm::{glcm_compute, glcm_features, GlcmConfig};
use super::neighborhood::{neighborhood_texture, NeighborhoodConfig, TextureKind};
use crate::error::{ImagingError, Result};
use crate::image::ImageGrid;

pub const FIDELITY_KEYS: [&str; 2] = ["psnr", "ssim"];
pub const TEXTURE_KEYS: [&str; 7] = [
    "rangefilt",
    "stdfilt",
    "entropyfilt",
    "contrast",
    "correlation",
    "energy",
    "homogeneity",
];

/// Named metric values; `None` marks an undefined value (e.g. GLCM
/// correlation of a flat image).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricSet(pub BTreeMap<String, Option<f64>>);

impl MetricSet {
    pub fn insert(&mut self, key: &str, value: Option<f64>) {
        self.0.insert(key.to_string(), value);
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.0.get(key).copied().flatten()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.0.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.0.keys().map(String::as_str)
    }

    fn same_keys(&self, other: &MetricSet) -> bool {
        self.0.keys().eq(other.0.keys())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    #[serde(default)]
    pub ssim: SsimConfig,
    #[serde(default)]
    pub neighborhood: NeighborhoodConfig,
    #[serde(default)]
    pub glcm: GlcmConfig,
}

/// All fidelity and texture metrics of `image` against its noise-free
/// `original`.
///
/// PSNR/SSIM use the original's max − min as data range. Entropy and GLCM
/// quantize both images over the original's min..max so that values are
/// comparable across methods. With a `mask`, PSNR and the first-order means
/// are restricted to masked pixels; SSIM and GLCM always use the full image.
pub fn evaluate_against(
    image: &ImageGrid,
    original: &ImageGrid,
    config: &MetricConfig,
    mask: Option<&[bool]>,
) -> Result<MetricSet> {
    image.same_shape(original)?;
    let (lo, hi) = original.min_max();
    if !(hi > lo) {
        return Err(ImagingError::DegenerateRange { lo, hi });
    }
    let range = hi - lo;
    let mut out = MetricSet::default();
    let p = match mask {
        Some(m) => psnr_masked(image, original, range, m)?,
        None => psnr(image, original, range)?,
    };
    out.insert("psnr", Some(p));
    out.insert("ssim", Some(ssim(image, original, range, &config.ssim)?));

    let neighborhood = NeighborhoodConfig {
        quantization_range: Some((lo, hi)),
        ..config.neighborhood.clone()
    };
    for (key, kind) in [
        ("rangefilt", TextureKind::Range),
        ("stdfilt", TextureKind::Std),
        ("entropyfilt", TextureKind::Entropy),
    ] {
        let f = neighborhood_texture(image, kind, &neighborhood)?;
        let mean = match mask {
            Some(m) => {
                let (s, n) = f
                    .values
                    .iter()
                    .zip(m)
                    .filter(|(_, &k)| k)
                    .fold((0.0, 0usize), |(s, n), (v, _)| (s + v, n + 1));
                if n == 0 {
                    return Err(ImagingError::Parameter("empty mask".into()));
                }
                s / n as f64
            }
            None => f.mean,
        };
        out.insert(key, Some(mean));
    }

    let glcm = GlcmConfig {
        range: Some((lo, hi)),
        ..config.glcm.clone()
    };
    let features = glcm_features(&glcm_compute(image, &glcm)?);
    out.insert("contrast", Some(features.contrast));
    out.insert("correlation", features.correlation);
    out.insert("energy", Some(features.energy));
    out.insert("homogeneity", Some(features.homogeneity));
    Ok(out)
}

/// Per-key mean over an evaluation set, skipping undefined entries.
pub fn mean_metrics(sets: &[MetricSet]) -> Result<MetricSet> {
    let Some(first) = sets.first() else {
        return Err(ImagingError::Parameter("no metric sets to average".into()));
    };
    if let Some(bad) = sets.iter().find(|s| !s.same_keys(first)) {
        return Err(ImagingError::Parameter(format!(
            "inconsistent metric keys: {:?} vs {:?}",
            first.keys().collect::<Vec<_>>(),
            bad.keys().collect::<Vec<_>>()
        )));
    }
    let mut out = MetricSet::default();
    for key in first.keys() {
        let vals: Vec<f64> = sets.iter().filter_map(|s| s.get(key)).collect();
        let mean = (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
        out.insert(key, mean);
    }
    Ok(out)
}

/// `100 · method / original`; undefined when either side is undefined or
/// the original is zero.
pub fn percent_of(method: Option<f64>, original: Option<f64>) -> Option<f64> {
    match (method, original) {
        (Some(m), Some(o)) if o != 0.0 && o.is_finite() && m.is_finite() => Some(m / o * 100.0),
        _ => None,
    }
}

/// Texture percentages of `method` relative to `original`. Keys other than
/// the texture statistics are dropped.
pub fn relative_report(method: &MetricSet, original: &MetricSet) -> Result<MetricSet> {
    if !method.same_keys(original) {
        return Err(ImagingError::Parameter(format!(
            "metric keys differ: {:?} vs {:?}",
            method.keys().collect::<Vec<_>>(),
            original.keys().collect::<Vec<_>>()
        )));
    }
    let mut out = MetricSet::default();
    for key in TEXTURE_KEYS.iter().filter(|k| original.contains(k)) {
        out.insert(key, percent_of(method.get(key), original.get(key)));
    }
    Ok(out)
}
