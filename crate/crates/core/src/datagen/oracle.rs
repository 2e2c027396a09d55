//! Brute-force classifiers used to check the generator: one reads only the
//! foreground shape, the other only the background texture.

use super::render::{FOREGROUND, TEXTURE_HIGH};
use super::{Shape, SpurSpec};

/// Pixels brighter than this are foreground. It sits halfway between the
/// brightest texture level and the shape fill.
pub const FOREGROUND_CUT: f64 = (FOREGROUND + TEXTURE_HIGH) / 2.0;

/// Thresholded foreground with isolated noise pixels (fewer than two
/// foreground 8-neighbors) removed.
pub fn segment(image: &[f64], size: usize) -> Vec<bool> {
    let raw: Vec<bool> = image.iter().map(|&v| v > FOREGROUND_CUT).collect();
    let mut out = raw.clone();
    for r in 0..size {
        for c in 0..size {
            if !raw[r * size + c] {
                continue;
            }
            let mut n = 0;
            for rr in r.saturating_sub(1)..=(r + 1).min(size - 1) {
                for cc in c.saturating_sub(1)..=(c + 1).min(size - 1) {
                    n += usize::from((rr, cc) != (r, c) && raw[rr * size + cc]);
                }
            }
            out[r * size + c] = n >= 2;
        }
    }
    out
}

/// Class whose shape template, fitted to the foreground bounding box, has
/// the highest intersection-over-union with the segmented foreground.
pub fn classify_by_shape(spec: &SpurSpec, image: &[f64]) -> Option<usize> {
    let size = spec.image_size;
    let fg = segment(image, size);
    let (mut r0, mut r1, mut c0, mut c1) = (usize::MAX, 0, usize::MAX, 0);
    for r in 0..size {
        for c in 0..size {
            if fg[r * size + c] {
                r0 = r0.min(r);
                r1 = r1.max(r);
                c0 = c0.min(c);
                c1 = c1.max(c);
            }
        }
    }
    if r0 == usize::MAX {
        return None;
    }
    let cx = (c0 + c1 + 1) as f64 / 2.0;
    let height = (r1 + 1 - r0) as f64;
    let width = (c1 + 1 - c0) as f64;
    let mut best = (0, f64::MIN);
    for (k, shape) in spec.shapes[..spec.num_classes].iter().enumerate() {
        // the square's box is 0.8 of its half-extent; the others fill theirs
        let fill = if *shape == Shape::Square { 0.8 } else { 1.0 };
        let s = width.max(height) / 2.0 / fill;
        // the triangle's apex row is sparse, so anchor it on its base
        let cy = match shape {
            Shape::Triangle => (r1 + 1) as f64 - s,
            _ => (r0 + r1 + 1) as f64 / 2.0,
        };
        let t = shape.rasterize(size, cx, cy, s);
        let inter = t.iter().zip(&fg).filter(|(a, b)| **a && **b).count();
        let union = t.iter().zip(&fg).filter(|(a, b)| **a || **b).count();
        let iou = inter as f64 / union as f64;
        if iou > best.1 {
            best = (k, iou);
        }
    }
    Some(best.0)
}

/// Texture id whose noise-free pattern is closest (mean absolute error) to
/// the background pixels.
pub fn classify_by_texture(spec: &SpurSpec, image: &[f64]) -> usize {
    let size = spec.image_size;
    let fg = segment(image, size);
    let mut best = (0, f64::MAX);
    for (k, tex) in spec.textures[..spec.num_classes].iter().enumerate() {
        let mut err = 0.0;
        for r in 0..size {
            for c in 0..size {
                if !fg[r * size + c] {
                    err += (image[r * size + c] - tex.value(r, c, spec.stripe_width)).abs();
                }
            }
        }
        if err < best.1 {
            best = (k, err);
        }
    }
    best.0
}
