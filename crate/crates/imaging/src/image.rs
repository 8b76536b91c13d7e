use crate::error::{ImagingError, Result};

/// 2-D grayscale image, row-major `f32` pixels.
///
/// Values are attenuation-like and unitless; synthetic phantoms live in
/// `[0, 1]`. Every pixel is finite.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageGrid {
    height: usize,
    width: usize,
    data: Vec<f32>,
    /// Display window `(lo, hi)` used for previews.
    pub window: Option<(f32, f32)>,
}

impl ImageGrid {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height * width != data.len() {
            return Err(ImagingError::Shape(format!(
                "{height}x{width} image needs {} pixels, got {}",
                height * width,
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(ImagingError::NonFinite(i));
        }
        Ok(Self {
            height,
            width,
            data,
            window: None,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width],
            window: None,
        }
    }

    /// Builds an image from `f(row, col)`; non-finite values are rejected.
    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c) as f32);
            }
        }
        Self::new(height, width, data)
    }

    pub fn from_f64(height: usize, width: usize, data: &[f64]) -> Result<Self> {
        Self::new(height, width, data.iter().map(|&v| v as f32).collect())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn pixels(&self) -> &[f32] {
        &self.data
    }

    pub fn into_pixels(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.data[row * self.width + col]
    }

    /// Pixel with replicated borders for out-of-range coordinates.
    #[inline]
    pub fn get_clamped(&self, row: isize, col: isize) -> f32 {
        let r = row.clamp(0, self.height as isize - 1) as usize;
        let c = col.clamp(0, self.width as isize - 1) as usize;
        self.data[r * self.width + c]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v as f64), hi.max(v as f64))
        })
    }

    pub fn map(&self, f: impl Fn(f32) -> f32) -> Result<Self> {
        let mut out = Self::new(self.height, self.width, self.data.iter().map(|&v| f(v)).collect())?;
        out.window = self.window;
        Ok(out)
    }

    pub fn same_shape(&self, other: &ImageGrid) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(ImagingError::Shape(format!(
                "{}x{} vs {}x{}",
                self.height, self.width, other.height, other.width
            )));
        }
        Ok(())
    }

    /// Mask selecting pixel centers inside the circle inscribed in the grid.
    pub fn inscribed_circle_mask(height: usize, width: usize) -> Vec<bool> {
        let cy = (height as f64 - 1.0) / 2.0;
        let cx = (width as f64 - 1.0) / 2.0;
        let r = height.min(width) as f64 / 2.0;
        let mut mask = Vec::with_capacity(height * width);
        for i in 0..height {
            for j in 0..width {
                let (dy, dx) = (i as f64 - cy, j as f64 - cx);
                mask.push(dx * dx + dy * dy <= r * r);
            }
        }
        mask
    }
}
