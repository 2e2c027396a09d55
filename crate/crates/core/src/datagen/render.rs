//! Shape and texture rasterization.

use serde::{Deserialize, Serialize};

/// Foreground shape. The class label indexes the spec's shape list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Shape {
    Disc,
    Square,
    Cross,
    Triangle,
}

impl Shape {
    pub const ALL: [Shape; 4] = [Shape::Disc, Shape::Square, Shape::Cross, Shape::Triangle];

    /// Whether offset `(dx, dy)` from the center lies inside a shape of
    /// half-extent `s`.
    pub fn contains(self, dx: f64, dy: f64, s: f64) -> bool {
        let (ax, ay) = (dx.abs(), dy.abs());
        match self {
            Shape::Disc => dx * dx + dy * dy <= s * s,
            Shape::Square => ax <= 0.8 * s && ay <= 0.8 * s,
            Shape::Cross => (ax <= s && ay <= s / 3.0) || (ay <= s && ax <= s / 3.0),
            // apex up, base on the bottom edge of the bounding box
            Shape::Triangle => dy >= -s && dy <= s && ax <= (dy + s) / 2.0,
        }
    }

    /// Boolean raster of the shape centered at `(cx, cy)`, sampled at pixel
    /// centers.
    pub fn rasterize(self, size: usize, cx: f64, cy: f64, s: f64) -> Vec<bool> {
        let mut out = vec![false; size * size];
        for r in 0..size {
            for c in 0..size {
                out[r * size + c] = self.contains(c as f64 + 0.5 - cx, r as f64 + 0.5 - cy, s);
            }
        }
        out
    }
}

/// Background pattern. The background id indexes the spec's texture list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Texture {
    Flat,
    HStripes,
    VStripes,
    Checker,
}

pub const TEXTURE_LOW: f64 = 0.15;
pub const TEXTURE_HIGH: f64 = 0.45;
pub const TEXTURE_FLAT: f64 = 0.3;
pub const FOREGROUND: f64 = 0.85;

impl Texture {
    pub const ALL: [Texture; 4] = [Texture::Flat, Texture::HStripes, Texture::VStripes, Texture::Checker];

    /// Noise-free texture value at pixel `(r, c)` for stripe width `w`.
    pub fn value(self, r: usize, c: usize, w: usize) -> f64 {
        let band = |i: usize| if (i / w).is_multiple_of(2) { TEXTURE_LOW } else { TEXTURE_HIGH };
        match self {
            Texture::Flat => TEXTURE_FLAT,
            Texture::HStripes => band(r),
            Texture::VStripes => band(c),
            Texture::Checker => {
                if (r / w + c / w).is_multiple_of(2) {
                    TEXTURE_LOW
                } else {
                    TEXTURE_HIGH
                }
            }
        }
    }

    pub fn render(self, size: usize, w: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(size * size);
        for r in 0..size {
            for c in 0..size {
                out.push(self.value(r, c, w));
            }
        }
        out
    }
}

/// Separable Gaussian blur with zero padding, kernel truncated at 4σ.
pub fn gaussian_blur(values: &[f64], size: usize, sigma: f64) -> Vec<f64> {
    let radius = (4.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d * d) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let pass = |src: &[f64], horizontal: bool| {
        let mut dst = vec![0.0; size * size];
        for r in 0..size {
            for c in 0..size {
                let mut acc = 0.0;
                for (k, w) in kernel.iter().enumerate() {
                    let d = k as isize - radius;
                    let (rr, cc) = if horizontal {
                        (r as isize, c as isize + d)
                    } else {
                        (r as isize + d, c as isize)
                    };
                    if rr >= 0 && cc >= 0 && (rr as usize) < size && (cc as usize) < size {
                        acc += w * src[rr as usize * size + cc as usize];
                    }
                }
                dst[r * size + c] = acc;
            }
        }
        dst
    };
    pass(&pass(values, true), false)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shapes_have_distinct_rasters() {
        let rasters: Vec<Vec<bool>> = Shape::ALL.iter().map(|s| s.rasterize(32, 16.0, 16.0, 10.0)).collect();
        for i in 0..4 {
            assert!(rasters[i].iter().any(|&b| b));
            for j in i + 1..4 {
                assert_ne!(rasters[i], rasters[j]);
            }
        }
    }

    #[test]
    fn shapes_stay_inside_bounding_box() {
        for s in Shape::ALL {
            let m = s.rasterize(40, 20.0, 20.0, 8.0);
            for r in 0..40 {
                for c in 0..40 {
                    if m[r * 40 + c] {
                        assert!((11..29).contains(&r) && (11..29).contains(&c), "{s:?} at ({r},{c})");
                    }
                }
            }
        }
    }

    #[test]
    fn blur_of_point_is_symmetric_and_peaks_at_point() {
        let mut v = vec![0.0; 81];
        v[40] = 1.0;
        let b = gaussian_blur(&v, 9, 1.5);
        let max = b.iter().copied().fold(0.0, f64::max);
        assert_eq!(b[40], max);
        assert!((b[39] - b[41]).abs() < 1e-15 && (b[31] - b[49]).abs() < 1e-15);
        assert!((b[39] - b[31]).abs() < 1e-15);
    }
}
