//! Heatmap and mask files.

use std::path::Path;

use super::{SaliencyError, SaliencyMap, SaliencyMask};
use crate::datagen::image_io::{self, Image};

/// 8-bit graymap of a heatmap scaled by its maximum (all-zero maps stay
/// black).
pub fn write_heatmap_pgm(path: &Path, map: &SaliencyMap) -> Result<(), SaliencyError> {
    let max = map.values().iter().copied().fold(0.0, f64::max);
    let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
    let pixels = map.values().iter().map(|v| v * scale).collect();
    image_io::write_pnm(path, &Image::gray(map.height(), map.width(), pixels)?)?;
    Ok(())
}

/// Exact sidecar of the heatmap values.
pub fn write_heatmap_f64(path: &Path, map: &SaliencyMap) -> Result<(), SaliencyError> {
    image_io::write_f64(path, map.height(), map.width(), map.values())?;
    Ok(())
}

pub fn read_heatmap_f64(path: &Path) -> Result<SaliencyMap, SaliencyError> {
    let (h, w, v) = image_io::read_f64(path)?;
    SaliencyMap::new(h, w, v)
}

/// Grid-resolution graymap with kept patches at 255 and dropped at 0.
pub fn write_mask_pgm(path: &Path, mask: &SaliencyMask, rows: usize, cols: usize) -> Result<(), SaliencyError> {
    if rows * cols != mask.len() {
        return Err(SaliencyError::DimensionMismatch((rows, cols), (mask.len(), 1)));
    }
    image_io::write_pnm(path, &Image::gray(rows, cols, mask.as_f64())?)?;
    Ok(())
}

pub fn read_mask_pgm(path: &Path) -> Result<SaliencyMask, SaliencyError> {
    let img = image_io::read_pnm(path)?;
    if img.channels != 1 {
        return Err(SaliencyError::InvalidMask("mask must be a graymap".into()));
    }
    let mut bits = Vec::with_capacity(img.pixels.len());
    for &v in &img.pixels {
        match image_io::quantize(v) {
            0 => bits.push(false),
            255 => bits.push(true),
            b => return Err(SaliencyError::InvalidMask(format!("mask byte {b} is neither 0 nor 255"))),
        }
    }
    SaliencyMask::from_bits(bits)
}
