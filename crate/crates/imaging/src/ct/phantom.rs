use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{ImagingError, Result};
use crate::image::ImageGrid;

/// Ellipse in normalized coordinates: the grid spans `[-1, 1]` on both axes,
/// `x` to the right and `y` up. `rotation` is in radians, counter-clockwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: (f64, f64),
    pub axes: (f64, f64),
    pub rotation: f64,
    pub intensity: f64,
}

impl Ellipse {
    pub fn disk(center: (f64, f64), radius: f64, intensity: f64) -> Self {
        Self {
            center,
            axes: (radius, radius),
            rotation: 0.0,
            intensity,
        }
    }

    #[inline]
    fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.center.0, y - self.center.1);
        let (s, c) = self.rotation.sin_cos();
        let u = (dx * c + dy * s) / self.axes.0;
        let v = (-dx * s + dy * c) / self.axes.1;
        u * u + v * v <= 1.0
    }
}

/// Stationary fine-grain texture added inside the ellipse support.
///
/// Gaussian white noise smoothed by a Gaussian kernel of standard deviation
/// `correlation` pixels, rescaled to standard deviation `amplitude`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TextureSpec {
    pub amplitude: f64,
    pub correlation: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhantomSpec {
    pub ellipses: Vec<Ellipse>,
    pub background: f64,
    #[serde(default)]
    pub texture: Option<TextureSpec>,
}

impl PhantomSpec {
    /// Modified Shepp–Logan head phantom (intensities in `[0, 1]`).
    pub fn shepp_logan() -> Self {
        let deg = std::f64::consts::PI / 180.0;
        let table: [(f64, f64, f64, f64, f64, f64); 10] = [
            (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
            (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
            (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
            (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
            (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
            (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
            (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
            (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
            (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
            (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
        ];
        Self {
            ellipses: table
                .iter()
                .map(|&(intensity, a, b, x, y, phi)| Ellipse {
                    center: (x, y),
                    axes: (a, b),
                    rotation: phi * deg,
                    intensity,
                })
                .collect(),
            background: 0.0,
            texture: None,
        }
    }
}

/// Rasterizes `spec` on a `size × size` grid, sampling at pixel centers and
/// clipping to `[0, 1]`.
pub fn make_phantom(spec: &PhantomSpec, size: usize) -> Result<ImageGrid> {
    if size < 16 {
        return Err(ImagingError::Parameter(format!("phantom size {size} < 16")));
    }
    let coord = |k: usize| 2.0 * (k as f64 + 0.5) / size as f64 - 1.0;
    let mut values = vec![spec.background; size * size];
    let mut support = vec![false; size * size];
    for r in 0..size {
        let y = -coord(r);
        for c in 0..size {
            let x = coord(c);
            for e in &spec.ellipses {
                if e.contains(x, y) {
                    values[r * size + c] += e.intensity;
                    support[r * size + c] = true;
                }
            }
        }
    }
    if let Some(texture) = &spec.texture {
        let field = texture_field(size, texture)?;
        for ((v, &inside), t) in values.iter_mut().zip(&support).zip(field) {
            if inside {
                *v += t;
            }
        }
    }
    ImageGrid::from_f64(size, size, &values.iter().map(|v| v.clamp(0.0, 1.0)).collect::<Vec<_>>())
}

fn texture_field(size: usize, spec: &TextureSpec) -> Result<Vec<f64>> {
    if !(spec.amplitude >= 0.0) || !(spec.correlation >= 0.0) {
        return Err(ImagingError::Parameter("texture amplitude/correlation must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise: Vec<f64> = (0..size * size).map(|_| StandardNormal.sample(&mut rng)).collect();
    let smooth = if spec.correlation > 0.0 {
        gaussian_blur(&noise, size, spec.correlation)
    } else {
        noise
    };
    let n = smooth.len() as f64;
    let mean = smooth.iter().sum::<f64>() / n;
    let std = (smooth.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let scale = if std > 0.0 { spec.amplitude / std } else { 0.0 };
    Ok(smooth.iter().map(|v| (v - mean) * scale).collect())
}

fn gaussian_blur(src: &[f64], size: usize, sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|k| (-(k * k) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / total).collect();
    let clamp = |i: isize| i.clamp(0, size as isize - 1) as usize;
    let mut tmp = vec![0.0; src.len()];
    for r in 0..size {
        for c in 0..size {
            tmp[r * size + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * src[r * size + clamp(c as isize + k as isize - radius)])
                .sum();
        }
    }
    let mut out = vec![0.0; src.len()];
    for r in 0..size {
        for c in 0..size {
            out[r * size + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * tmp[clamp(r as isize + k as isize - radius) * size + c])
                .sum();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_spec_is_zero() {
        let img = make_phantom(&PhantomSpec::default(), 32).unwrap();
        assert!(img.pixels().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn centered_disk_area() {
        let size = 128;
        let r_px = 40.0;
        let spec = PhantomSpec {
            ellipses: vec![Ellipse::disk((0.0, 0.0), r_px / (size as f64 / 2.0), 1.0)],
            ..Default::default()
        };
        let img = make_phantom(&spec, size).unwrap();
        let count = img.pixels().iter().filter(|&&v| v > 0.5).count() as f64;
        let area = std::f64::consts::PI * r_px * r_px;
        assert!((count - area).abs() / area < 0.05, "{count} vs {area}");
    }

    #[test]
    fn half_turn_symmetric_spec_is_invariant() {
        let spec = PhantomSpec {
            ellipses: vec![
                Ellipse {
                    center: (0.0, 0.0),
                    axes: (0.7, 0.4),
                    rotation: 0.3,
                    intensity: 0.6,
                },
                Ellipse::disk((0.3, 0.2), 0.1, 0.2),
                Ellipse::disk((-0.3, -0.2), 0.1, 0.2),
            ],
            background: 0.05,
            texture: None,
        };
        let img = make_phantom(&spec, 64).unwrap();
        let px = img.pixels();
        let rotated: Vec<f32> = px.iter().rev().copied().collect();
        assert_eq!(px, rotated.as_slice());
    }

    #[test]
    fn values_clipped_to_unit_interval() {
        let spec = PhantomSpec {
            ellipses: vec![Ellipse::disk((0.0, 0.0), 0.5, 1.5), Ellipse::disk((0.0, 0.0), 0.2, -3.0)],
            background: 0.0,
            texture: Some(TextureSpec {
                amplitude: 0.5,
                correlation: 1.0,
                seed: 3,
            }),
        };
        let img = make_phantom(&spec, 32).unwrap();
        assert!(img.pixels().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn texture_is_seeded_and_confined_to_support() {
        let spec = |seed| PhantomSpec {
            ellipses: vec![Ellipse::disk((0.0, 0.0), 0.5, 0.5)],
            background: 0.0,
            texture: Some(TextureSpec {
                amplitude: 0.05,
                correlation: 1.0,
                seed,
            }),
        };
        let a = make_phantom(&spec(1), 32).unwrap();
        assert_eq!(a, make_phantom(&spec(1), 32).unwrap());
        assert_ne!(a, make_phantom(&spec(2), 32).unwrap());
        assert_eq!(a.get(0, 0), 0.0);
    }

    #[test]
    fn rejects_tiny_grids() {
        assert!(make_phantom(&PhantomSpec::default(), 8).is_err());
    }

    #[test]
    fn shepp_logan_range() {
        let img = make_phantom(&PhantomSpec::shepp_logan(), 64).unwrap();
        let (lo, hi) = img.min_max();
        assert_eq!(lo, 0.0);
        assert!((hi - 1.0).abs() < 1e-6);
    }
}
