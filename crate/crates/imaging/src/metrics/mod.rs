//! Fidelity (PSNR, SSIM) and texture (first-order neighborhood filters,
//! GLCM) statistics, plus normalization against noise-free originals.

mod fidelity;
mod glcm;
mod neighborhood;
mod relative;

pub use fidelity::{psnr, psnr_masked, ssim, SsimConfig};
pub use glcm::{glcm_compute, glcm_features, Glcm, GlcmConfig, GlcmFeatures, Offset};
pub use neighborhood::{neighborhood_texture, FilteredImage, NeighborhoodConfig, TextureKind};
pub use relative::{
    evaluate_against, mean_metrics, percent_of, relative_report, MetricConfig, MetricSet,
    FIDELITY_KEYS, TEXTURE_KEYS,
};
