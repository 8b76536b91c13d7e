use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::geometry::Sinogram;
use crate::error::{ImagingError, Result};

/// Count-domain measurement noise.
///
/// A ray with line integral `p` sees `N ~ Poisson(n0 · exp(−mu_scale · p))`
/// photons plus `Normal(0, sigma²)` electronic noise. `mu_scale` converts
/// pixel-unit line integrals into optical depth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    pub n0: f64,
    pub sigma: f64,
    pub seed: u64,
    #[serde(default = "unit")]
    pub mu_scale: f64,
}

fn unit() -> f64 {
    1.0
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            n0: 1e4,
            sigma: 5.0,
            seed: 0,
            mu_scale: 1.0,
        }
    }
}

/// Photon-starvation floor applied to counts before the log.
const COUNT_FLOOR: f64 = 0.5;

impl NoiseModel {
    fn validate(&self) -> Result<()> {
        if !(self.n0 > 0.0) || !(self.sigma >= 0.0) || !(self.mu_scale > 0.0) {
            return Err(ImagingError::Parameter(format!(
                "noise model needs n0 > 0, sigma >= 0, mu_scale > 0 (got {self:?})"
            )));
        }
        Ok(())
    }
}

/// Detected counts for each line integral, deterministic per `model.seed`.
pub fn sample_counts(line_integrals: &[f32], model: &NoiseModel) -> Result<Vec<f64>> {
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(model.seed);
    let electronic = Normal::new(0.0, model.sigma)
        .map_err(|e| ImagingError::Parameter(e.to_string()))?;
    line_integrals
        .iter()
        .map(|&p| {
            if p < 0.0 {
                return Err(ImagingError::Parameter(format!("negative line integral {p}")));
            }
            let mean = model.n0 * (-model.mu_scale * p as f64).exp();
            let photons = if mean > 0.0 {
                Poisson::new(mean)
                    .map_err(|e| ImagingError::Parameter(e.to_string()))?
                    .sample(&mut rng)
            } else {
                0.0
            };
            Ok(photons + electronic.sample(&mut rng))
        })
        .collect()
}

/// Noisy line integrals `p̂ = −ln(max(N, 0.5) / n0) / mu_scale`.
pub fn apply_noise(sinogram: &Sinogram, model: &NoiseModel) -> Result<Sinogram> {
    let counts = sample_counts(sinogram.values(), model)?;
    let values = counts
        .iter()
        .map(|&n| (-(n.max(COUNT_FLOOR) / model.n0).ln() / model.mu_scale) as f32)
        .collect();
    Sinogram::new(sinogram.geometry().clone(), values)
}
