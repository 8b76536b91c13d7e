//! Raw image and sinogram files.
//!
//! Payload: little-endian `f32`, row-major. A JSON sidecar next to the payload
//! (same stem, `.json`) carries the header:
//!
//! ```text
//! image:    {"version":1,"dtype":"f32le","height":H,"width":W,"window":[lo,hi]?}
//! sinogram: {"version":1,"dtype":"f32le","n_angles":A,"n_detectors":D,
//!            "detector_spacing":s,"angles":[...]}
//! ```
//!
//! [`save_image`] also writes an 8-bit binary PGM preview (`.pgm`).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ct::{ProjectionGeometry, Sinogram};
use crate::error::{ImagingError, Result};
use crate::image::ImageGrid;

pub const FORMAT_VERSION: u32 = 1;
const DTYPE: &str = "f32le";

#[derive(Debug, Serialize, Deserialize)]
struct ImageHeader {
    version: u32,
    dtype: String,
    height: usize,
    width: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    window: Option<(f32, f32)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct SinogramHeader {
    version: u32,
    dtype: String,
    n_angles: usize,
    n_detectors: usize,
    detector_spacing: f64,
    angles: Vec<f64>,
}

pub fn sidecar_path(payload: &Path) -> PathBuf {
    payload.with_extension("json")
}

pub fn preview_path(payload: &Path) -> PathBuf {
    payload.with_extension("pgm")
}

fn encode(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn decode(path: &Path, bytes: &[u8], expected_values: usize) -> Result<Vec<f32>> {
    if bytes.len() != expected_values * 4 {
        return Err(ImagingError::PayloadLength {
            path: path.to_path_buf(),
            expected: expected_values * 4,
            actual: bytes.len(),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| ImagingError::io(parent, e))?;
        }
    }
    fs::write(path, bytes).map_err(|e| ImagingError::io(path, e))
}

fn read_header<H: for<'de> Deserialize<'de>>(payload: &Path) -> Result<H> {
    let side = sidecar_path(payload);
    let text = fs::read_to_string(&side).map_err(|e| ImagingError::io(&side, e))?;
    serde_json::from_str(&text).map_err(|e| ImagingError::Header {
        path: side,
        detail: e.to_string(),
    })
}

fn check_common(path: &Path, version: u32, dtype: &str) -> Result<()> {
    if version != FORMAT_VERSION || dtype != DTYPE {
        return Err(ImagingError::Header {
            path: sidecar_path(path),
            detail: format!("unsupported version {version} / dtype `{dtype}`"),
        });
    }
    Ok(())
}

/// Writes payload, sidecar and PGM preview. The preview uses the image's
/// window, or `[0, 1]` when none is set.
pub fn save_image(image: &ImageGrid, path: &Path) -> Result<()> {
    let header = ImageHeader {
        version: FORMAT_VERSION,
        dtype: DTYPE.into(),
        height: image.height(),
        width: image.width(),
        window: image.window,
    };
    write(path, &encode(image.pixels()))?;
    let json = serde_json::to_string_pretty(&header).expect("header serializes");
    write(&sidecar_path(path), json.as_bytes())?;
    save_pgm(image, &preview_path(path), image.window.unwrap_or((0.0, 1.0)))
}

pub fn load_image(path: &Path) -> Result<ImageGrid> {
    let header: ImageHeader = read_header(path)?;
    check_common(path, header.version, &header.dtype)?;
    let bytes = fs::read(path).map_err(|e| ImagingError::io(path, e))?;
    let values = decode(path, &bytes, header.height * header.width)?;
    let mut image = ImageGrid::new(header.height, header.width, values)?;
    image.window = header.window;
    Ok(image)
}

pub fn save_sinogram(sinogram: &Sinogram, path: &Path) -> Result<()> {
    let g = sinogram.geometry();
    let header = SinogramHeader {
        version: FORMAT_VERSION,
        dtype: DTYPE.into(),
        n_angles: g.n_angles(),
        n_detectors: g.n_detectors,
        detector_spacing: g.detector_spacing,
        angles: g.angles.clone(),
    };
    write(path, &encode(sinogram.values()))?;
    let json = serde_json::to_string_pretty(&header).expect("header serializes");
    write(&sidecar_path(path), json.as_bytes())
}

pub fn load_sinogram(path: &Path) -> Result<Sinogram> {
    let header: SinogramHeader = read_header(path)?;
    check_common(path, header.version, &header.dtype)?;
    if header.angles.len() != header.n_angles {
        return Err(ImagingError::Header {
            path: sidecar_path(path),
            detail: format!("{} angles listed, n_angles = {}", header.angles.len(), header.n_angles),
        });
    }
    let bytes = fs::read(path).map_err(|e| ImagingError::io(path, e))?;
    let values = decode(path, &bytes, header.n_angles * header.n_detectors)?;
    let geometry = ProjectionGeometry {
        angles: header.angles,
        n_detectors: header.n_detectors,
        detector_spacing: header.detector_spacing,
    };
    Sinogram::new(geometry, values)
}

/// Maps `window.0 → 0` and `window.1 → 255`, clamping outside.
pub fn to_gray8(image: &ImageGrid, window: (f32, f32)) -> Vec<u8> {
    let (lo, hi) = window;
    let span = (hi - lo).max(f32::EPSILON);
    image
        .pixels()
        .iter()
        .map(|&v| (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect()
}

/// Binary PGM (`P5`, maxval 255).
pub fn save_pgm(image: &ImageGrid, path: &Path, window: (f32, f32)) -> Result<()> {
    let mut bytes = format!("P5\n{} {}\n255\n", image.width(), image.height()).into_bytes();
    bytes.extend(to_gray8(image, window));
    write(path, &bytes)
}
