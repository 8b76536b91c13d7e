//! Image-space tooling around the reconstruction experiments.
//!
//! * [`ct`]: phantoms, parallel-beam projection, count-domain noise and
//!   filtered backprojection.
//! * [`metrics`]: PSNR/SSIM, neighborhood texture filters, GLCM features and
//!   normalization against noise-free originals.
//! * [`baselines`]: non-local means and image blending.
//! * [`io`]: raw little-endian `f32` images/sinograms with JSON sidecars and
//!   PGM previews.

pub mod baselines;
pub mod ct;
mod error;
mod image;
pub mod io;
pub mod metrics;

pub use error::{ImagingError, Result};
pub use image::ImageGrid;
