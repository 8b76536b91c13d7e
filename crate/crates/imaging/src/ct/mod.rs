//! Parallel-beam CT simulation: `y = F(x) + δy`, then filtered backprojection.

mod fbp;
mod geometry;
mod noise;
mod phantom;
mod radon;

pub use fbp::{fbp, RampFilter};
pub use geometry::{ProjectionGeometry, Sinogram};
pub use noise::{apply_noise, sample_counts, NoiseModel};
pub use phantom::{make_phantom, Ellipse, PhantomSpec, TextureSpec};
pub use radon::radon;
