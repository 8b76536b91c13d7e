//! Paired training/evaluation data: noise-free images and their simulated
//! FBP reconstructions.

use std::f64::consts::PI;

use rand::Rng;
use serde::{Deserialize, Serialize};
use texgan_imaging::ct::{apply_noise, fbp, make_phantom, radon, Ellipse, NoiseModel, PhantomSpec, ProjectionGeometry, RampFilter, TextureSpec};
use texgan_imaging::ImageGrid;
use texgan_tensor::Tensor;

use crate::error::{CoreError, Result};
use crate::seed;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Eval,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Eval => "eval",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Pair {
    pub truth: ImageGrid,
    pub input: ImageGrid,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub split: Split,
    pub pairs: Vec<Pair>,
}

/// Fine-grain texture inside the phantom support (see [`TextureSpec`]).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextureLevel {
    pub amplitude: f64,
    pub correlation: f64,
}

/// How inputs are produced from ground truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Acquisition {
    pub n_angles: usize,
    #[serde(default)]
    pub filter: RampFilter,
    /// `None` simulates noiseless projections.
    #[serde(default)]
    pub noise: Option<NoiseModel>,
}

impl Acquisition {
    /// `fbp(apply_noise(radon(truth)))` with the noise stream picked by
    /// `noise_seed`.
    pub fn simulate(&self, truth: &ImageGrid, noise_seed: u64) -> Result<ImageGrid> {
        let (h, w) = truth.dims();
        let geometry = ProjectionGeometry::for_image(h, w, self.n_angles)?;
        simulate_input(truth, &geometry, self.noise.as_ref(), self.filter, noise_seed)
    }
}

pub fn simulate_input(
    truth: &ImageGrid,
    geometry: &ProjectionGeometry,
    noise: Option<&NoiseModel>,
    filter: RampFilter,
    noise_seed: u64,
) -> Result<ImageGrid> {
    let (h, w) = truth.dims();
    let mut sino = radon(truth, geometry)?;
    if let Some(model) = noise {
        let model = NoiseModel {
            seed: seed::derive(model.seed, "noise", noise_seed),
            ..model.clone()
        };
        sino = apply_noise(&sino, &model)?;
    }
    Ok(fbp(&sino, filter, h, w)?)
}

/// Body ellipse plus 2–7 inner structures with additive intensities.
pub fn random_phantom_spec(seed: u64, texture: Option<&TextureLevel>) -> PhantomSpec {
    let mut rng = seed::rng(seed, "phantom", 0);
    let mut ellipses = vec![Ellipse {
        center: (rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05)),
        axes: (rng.random_range(0.65..0.85), rng.random_range(0.55..0.8)),
        rotation: rng.random_range(0.0..PI),
        intensity: rng.random_range(0.35..0.5),
    }];
    let inner = rng.random_range(2..=7);
    for _ in 0..inner {
        let r = 0.5 * rng.random::<f64>().sqrt();
        let phi = rng.random_range(0.0..2.0 * PI);
        let sign = if rng.random_bool(0.7) { 1.0 } else { -1.0 };
        ellipses.push(Ellipse {
            center: (r * phi.cos(), r * phi.sin()),
            axes: (rng.random_range(0.05..0.25), rng.random_range(0.05..0.25)),
            rotation: rng.random_range(0.0..PI),
            intensity: sign * rng.random_range(0.1..0.3),
        });
    }
    PhantomSpec {
        ellipses,
        background: 0.0,
        texture: texture.map(|t| TextureSpec {
            amplitude: t.amplitude,
            correlation: t.correlation,
            seed: seed::derive(seed, "texture", 0),
        }),
    }
}

/// `n` random phantoms of side `size` and their reconstructions.
/// Deterministic per `seed`.
pub fn make_synthetic_dataset(
    n: usize,
    size: usize,
    acquisition: &Acquisition,
    texture: Option<&TextureLevel>,
    seed: u64,
    split: Split,
) -> Result<Dataset> {
    if n == 0 {
        return Err(CoreError::Config("dataset needs at least one image".into()));
    }
    let pairs = (0..n)
        .map(|i| {
            let image_seed = seed::derive(seed, split.as_str(), i as u64);
            let truth = make_phantom(&random_phantom_spec(image_seed, texture), size)?;
            let input = acquisition.simulate(&truth, image_seed)?;
            Ok(Pair { truth, input })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { split, pairs })
}

/// Stacks images into an `[n, 1, h, w]` tensor.
pub fn stack_images(images: &[&ImageGrid]) -> Result<Tensor<f32>> {
    let (h, w) = images
        .first()
        .map(|i| i.dims())
        .ok_or_else(|| CoreError::Config("empty batch".into()))?;
    let mut data = Vec::with_capacity(images.len() * h * w);
    for img in images {
        if img.dims() != (h, w) {
            return Err(CoreError::Config(format!("batch mixes {h}x{w} and {:?} images", img.dims())));
        }
        data.extend_from_slice(img.pixels());
    }
    Ok(Tensor::new(vec![images.len(), 1, h, w], data)?)
}

/// Splits an `[n, 1, h, w]` tensor back into images.
pub fn unstack_images(t: &Tensor<f32>) -> Result<Vec<ImageGrid>> {
    let &[n, 1, h, w] = t.shape() else {
        return Err(CoreError::Config(format!("expected [n, 1, h, w], got {:?}", t.shape())));
    };
    (0..n)
        .map(|i| Ok(ImageGrid::new(h, w, t.data()[i * h * w..(i + 1) * h * w].to_vec())?))
        .collect()
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `(truth, input)` batches for the given pair indices.
    pub fn batch(&self, indices: &[usize]) -> Result<(Tensor<f32>, Tensor<f32>)> {
        let truths: Vec<&ImageGrid> = indices.iter().map(|&i| &self.pairs[i].truth).collect();
        let inputs: Vec<&ImageGrid> = indices.iter().map(|&i| &self.pairs[i].input).collect();
        Ok((stack_images(&truths)?, stack_images(&inputs)?))
    }
}
