//! Human-prior saliency: fixation heatmaps, patch-grid pooling, the top-M
//! keep mask and agreement metrics.

mod fixation;
mod grid;
pub mod io;
mod metrics;

pub use fixation::{
    fixations_to_heatmap, read_fixations_csv, render_fixation_density, write_fixations_csv,
    FixationRecord,
};
pub use grid::{pool_to_grid, top_m_mask};
pub use metrics::{cc, kld, nss, KLD_EPS};

use thiserror::Error;

use crate::datagen::image_io::ImageIoError;

#[derive(Debug, Error)]
pub enum SaliencyError {
    #[error("no fixations to render")]
    EmptyFixations,
    #[error("fixation ({x}, {y}) lies outside a {width}x{height} image")]
    FixationOutOfBounds {
        x: f64,
        y: f64,
        width: usize,
        height: usize,
    },
    #[error("invalid fixation record: {0}")]
    InvalidFixation(String),
    #[error("gaussian sigma must be positive, got {0}")]
    InvalidSigma(f64),
    #[error("saliency values must be finite and non-negative")]
    InvalidValue,
    #[error("dimension mismatch: {0:?} vs {1:?}")]
    DimensionMismatch((usize, usize), (usize, usize)),
    #[error("{height}x{width} map cannot be pooled to a {rows}x{cols} grid")]
    NotDivisible {
        height: usize,
        width: usize,
        rows: usize,
        cols: usize,
    },
    #[error("keep count {m} outside 1..={n}")]
    KeepCount { m: usize, n: usize },
    #[error("map has zero total mass")]
    ZeroMass,
    #[error("map is constant; statistic undefined")]
    ConstantMap,
    #[error("no fixation falls inside the map")]
    NoValidFixations,
    #[error("mask: {0}")]
    InvalidMask(String),
    #[error(transparent)]
    Image(#[from] ImageIoError),
    #[error("fixation csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Dense non-negative heatmap over pixels, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
}

impl SaliencyMap {
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self, SaliencyError> {
        if values.len() != height * width {
            return Err(SaliencyError::DimensionMismatch((height, width), (values.len(), 1)));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(SaliencyError::InvalidValue);
        }
        Ok(Self {
            height,
            width,
            values,
        })
    }

    /// The all-zero map.
    pub fn empty(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            values: vec![0.0; height * width],
        }
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

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn is_empty(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Copy scaled to sum to one.
    pub fn distribution(&self) -> Result<SaliencyMap, SaliencyError> {
        let s: f64 = self.values.iter().sum();
        if s <= 0.0 {
            return Err(SaliencyError::ZeroMass);
        }
        Ok(Self {
            height: self.height,
            width: self.width,
            values: self.values.iter().map(|v| v / s).collect(),
        })
    }

    /// Copy scaled so that the maximum is one.
    pub fn max_normalized(&self) -> Result<SaliencyMap, SaliencyError> {
        let m = self.values.iter().copied().fold(0.0, f64::max);
        if m <= 0.0 {
            return Err(SaliencyError::ZeroMass);
        }
        Ok(Self {
            height: self.height,
            width: self.width,
            values: self.values.iter().map(|v| v / m).collect(),
        })
    }
}

/// Patch-resolution saliency, `rows x cols` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyGrid {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl SaliencyGrid {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, SaliencyError> {
        if values.len() != rows * cols || rows == 0 || cols == 0 {
            return Err(SaliencyError::DimensionMismatch((rows, cols), (values.len(), 1)));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(SaliencyError::InvalidValue);
        }
        Ok(Self { rows, cols, values })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Binary keep/drop vector over the patch grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SaliencyMask {
    bits: Vec<bool>,
    kept: Vec<usize>,
}

impl SaliencyMask {
    pub fn from_bits(bits: Vec<bool>) -> Result<Self, SaliencyError> {
        let kept: Vec<usize> = bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect();
        if kept.is_empty() {
            return Err(SaliencyError::InvalidMask("mask keeps no patch".into()));
        }
        Ok(Self { bits, kept })
    }

    /// Mask of length `n` keeping exactly `kept` (any order, no repeats).
    pub fn from_kept(n: usize, kept: &[usize]) -> Result<Self, SaliencyError> {
        let mut bits = vec![false; n];
        for &i in kept {
            if i >= n || std::mem::replace(&mut bits[i], true) {
                return Err(SaliencyError::InvalidMask(format!("bad kept index {i} for length {n}")));
            }
        }
        Self::from_bits(bits)
    }

    pub fn all_ones(n: usize) -> Self {
        Self {
            bits: vec![true; n],
            kept: (0..n).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn keep_count(&self) -> usize {
        self.kept.len()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    /// Kept patch indices in increasing order.
    pub fn kept_indices(&self) -> &[usize] {
        &self.kept
    }

    pub fn is_kept(&self, i: usize) -> bool {
        self.bits[i]
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect()
    }
}
