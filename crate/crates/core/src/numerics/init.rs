//! Parameter initializers.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Tensor;

/// Normal(0, std) samples redrawn until they fall within two standard
/// deviations.
pub fn trunc_normal<R: Rng + ?Sized>(rng: &mut R, shape: &[usize], std: f64) -> Tensor {
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = loop {
            let z: f64 = StandardNormal.sample(rng);
            if z.abs() <= 2.0 {
                break z * std;
            }
        };
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bounded_and_roughly_scaled() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = trunc_normal(&mut rng, &[100, 100], 0.02);
        assert!(t.data().iter().all(|v| v.abs() <= 0.04));
        let var = t.data().iter().map(|v| v * v).sum::<f64>() / t.len() as f64;
        // variance of a normal truncated at ±2σ is about 0.774 σ²
        assert!((var / 0.0004 - 0.774).abs() < 0.03, "{var}");
    }
}
