use std::f64::consts::PI;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{SaliencyError, SaliencyMap};

/// One eye-tracker dwell point. Coordinates are in pixels with the origin at
/// the top-left corner; pixel `(r, c)` covers `[c, c + 1) x [r, r + 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixationRecord {
    pub image_id: String,
    pub x: f64,
    pub y: f64,
    pub duration_ms: f64,
}

impl FixationRecord {
    pub fn new(image_id: impl Into<String>, x: f64, y: f64, duration_ms: f64) -> Self {
        Self {
            image_id: image_id.into(),
            x,
            y,
            duration_ms,
        }
    }

    pub fn in_bounds(&self, height: usize, width: usize) -> bool {
        self.x >= 0.0 && self.y >= 0.0 && self.x < width as f64 && self.y < height as f64
    }

    /// Pixel `(row, col)` containing the fixation, if inside the image.
    pub fn pixel(&self, height: usize, width: usize) -> Option<(usize, usize)> {
        self.in_bounds(height, width)
            .then(|| (self.y.floor() as usize, self.x.floor() as usize))
    }

    fn validate(&self, height: usize, width: usize) -> Result<(), SaliencyError> {
        if !(self.x.is_finite() && self.y.is_finite()) || !self.in_bounds(height, width) {
            return Err(SaliencyError::FixationOutOfBounds {
                x: self.x,
                y: self.y,
                width,
                height,
            });
        }
        if !(self.duration_ms.is_finite() && self.duration_ms >= 0.0) {
            return Err(SaliencyError::InvalidFixation(format!(
                "duration {} for image {}",
                self.duration_ms, self.image_id
            )));
        }
        Ok(())
    }
}

/// Sum of isotropic unit-mass Gaussians, one per fixation, evaluated at pixel
/// centers. Each fixation contributes its weight (1, or its duration when
/// `duration_weighted`) up to truncation at the image border.
pub fn render_fixation_density(
    fixes: &[FixationRecord],
    height: usize,
    width: usize,
    sigma: f64,
    duration_weighted: bool,
) -> Result<SaliencyMap, SaliencyError> {
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(SaliencyError::InvalidSigma(sigma));
    }
    if fixes.is_empty() {
        return Err(SaliencyError::EmptyFixations);
    }
    for f in fixes {
        f.validate(height, width)?;
    }
    let norm = 1.0 / (2.0 * PI * sigma * sigma);
    let inv = 1.0 / (2.0 * sigma * sigma);
    let mut values = vec![0.0; height * width];
    for f in fixes {
        let w = if duration_weighted { f.duration_ms } else { 1.0 };
        // separable: exp(-(dx² + dy²)/2σ²) = exp(-dx²/2σ²) · exp(-dy²/2σ²)
        let gx: Vec<f64> = (0..width)
            .map(|c| (-(c as f64 + 0.5 - f.x).powi(2) * inv).exp())
            .collect();
        for r in 0..height {
            let gy = w * norm * (-(r as f64 + 0.5 - f.y).powi(2) * inv).exp();
            for (v, g) in values[r * width..(r + 1) * width].iter_mut().zip(&gx) {
                *v += gy * g;
            }
        }
    }
    SaliencyMap::new(height, width, values)
}

/// Fixation heatmap scaled so its maximum is one.
pub fn fixations_to_heatmap(
    fixes: &[FixationRecord],
    height: usize,
    width: usize,
    sigma: f64,
    duration_weighted: bool,
) -> Result<SaliencyMap, SaliencyError> {
    render_fixation_density(fixes, height, width, sigma, duration_weighted)?.max_normalized()
}

/// Reads a `image_id,x,y,duration_ms` log.
pub fn read_fixations_csv<R: Read>(r: R) -> Result<Vec<FixationRecord>, SaliencyError> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["image_id", "x", "y", "duration_ms"] {
        return Err(SaliencyError::InvalidFixation(format!(
            "unexpected header {:?}",
            headers.iter().collect::<Vec<_>>()
        )));
    }
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        let rec: FixationRecord = rec?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_fixations_csv<W: Write>(w: W, fixes: &[FixationRecord]) -> Result<(), SaliencyError> {
    let mut wtr = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(w);
    for f in fixes {
        wtr.serialize(f)?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}
