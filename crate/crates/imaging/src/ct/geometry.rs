use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{ImagingError, Result};

/// Parallel-beam acquisition geometry.
///
/// Detector `d` sits at signed offset `(d - (n_detectors - 1) / 2) * detector_spacing`
/// pixels from the rotation center; angle `θ` measures the detector normal
/// from the image x axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProjectionGeometry {
    pub angles: Vec<f64>,
    pub n_detectors: usize,
    pub detector_spacing: f64,
}

impl ProjectionGeometry {
    /// `n_angles` angles uniform over `[0, π)`.
    pub fn parallel(n_angles: usize, n_detectors: usize, detector_spacing: f64) -> Result<Self> {
        let geometry = Self {
            angles: (0..n_angles).map(|k| k as f64 * PI / n_angles as f64).collect(),
            n_detectors,
            detector_spacing,
        };
        geometry.validate()?;
        Ok(geometry)
    }

    /// Unit-spaced detector row just wide enough for a `height × width` image.
    pub fn for_image(height: usize, width: usize, n_angles: usize) -> Result<Self> {
        Self::parallel(n_angles, Self::min_detectors(height, width), 1.0)
    }

    /// Smallest unit-spaced detector count covering the image diagonal, with
    /// the parity of `width` so that axis-aligned rays pass through pixel
    /// centers rather than along pixel edges.
    pub fn min_detectors(height: usize, width: usize) -> usize {
        let n = ((height * height + width * width) as f64).sqrt().ceil() as usize + 1;
        n + (n + width) % 2
    }

    pub fn n_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.angles.is_empty() {
            return Err(ImagingError::Geometry("no projection angles".into()));
        }
        if self.angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(ImagingError::Geometry("angles must be strictly increasing".into()));
        }
        if self.n_detectors == 0 || !(self.detector_spacing > 0.0) {
            return Err(ImagingError::Geometry("detector row is empty".into()));
        }
        Ok(())
    }

    /// Detector row width in pixels.
    pub fn span(&self) -> f64 {
        self.n_detectors as f64 * self.detector_spacing
    }

    pub fn covers(&self, height: usize, width: usize) -> Result<()> {
        self.validate()?;
        let diagonal = ((height * height + width * width) as f64).sqrt();
        if self.span() < diagonal {
            return Err(ImagingError::Geometry(format!(
                "detector span {:.2} px narrower than image diagonal {diagonal:.2} px",
                self.span()
            )));
        }
        Ok(())
    }

    pub(crate) fn detector_offset(&self, d: usize) -> f64 {
        (d as f64 - (self.n_detectors as f64 - 1.0) / 2.0) * self.detector_spacing
    }
}

/// Line-integral measurements, row-major `n_angles × n_detectors`.
#[derive(Clone, Debug, PartialEq)]
pub struct Sinogram {
    geometry: ProjectionGeometry,
    data: Vec<f32>,
}

impl Sinogram {
    pub fn new(geometry: ProjectionGeometry, data: Vec<f32>) -> Result<Self> {
        geometry.validate()?;
        let expected = geometry.n_angles() * geometry.n_detectors;
        if data.len() != expected {
            return Err(ImagingError::Shape(format!(
                "sinogram needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { geometry, data })
    }

    pub fn zeros(geometry: ProjectionGeometry) -> Result<Self> {
        let n = geometry.n_angles() * geometry.n_detectors;
        Self::new(geometry, vec![0.0; n])
    }

    pub fn geometry(&self) -> &ProjectionGeometry {
        &self.geometry
    }

    pub fn values(&self) -> &[f32] {
        &self.data
    }

    pub fn projection(&self, angle_index: usize) -> &[f32] {
        let n = self.geometry.n_detectors;
        &self.data[angle_index * n..(angle_index + 1) * n]
    }

    pub fn into_values(self) -> Vec<f32> {
        self.data
    }
}
