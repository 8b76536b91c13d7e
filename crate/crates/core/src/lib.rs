//! Networks, adversarial and regularizing losses, the training loop and the
//! experiment runner for texture-preserving CT denoising.

pub mod data;
pub mod error;
pub mod experiment;
pub mod losses;
pub mod nn;
pub mod optim;
pub mod report;
pub mod seed;
pub mod trainer;

pub use error::{CoreError, Result};
