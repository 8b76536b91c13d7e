//! Generator, critic and perceptual networks: layer descriptions, parameter
//! stores with seeded initialization and checkpoint files, and application
//! onto a computation graph.

mod apply;
mod params;
mod spec;

pub use apply::{apply_network, forward};
pub use params::{init_params, BoundParams, InitScheme, ParamStore};
pub use spec::{
    build_critic, build_generator, perceptual_spec, Activation, CriticConfig, GeneratorConfig, Layer,
    NetworkSpec, PerceptualNetConfig, SlotSpec,
};

use texgan_tensor::Real;

use crate::error::Result;

/// Frozen feature network and its parameters; the same `seed` always gives
/// bit-identical parameters.
pub fn build_perceptual<T: Real>(config: &PerceptualNetConfig) -> Result<(NetworkSpec, ParamStore<T>)> {
    let spec = perceptual_spec(config)?;
    let params = init_params(&spec, config.seed, InitScheme::UniformFanIn);
    Ok((spec, params))
}
