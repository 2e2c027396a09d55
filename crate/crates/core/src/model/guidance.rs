use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random guidance: a batch is masked iff a uniform draw `p ∈ [0, 1)`
/// satisfies `p ≥ threshold`.
#[derive(Debug, Clone)]
pub struct GuidancePolicy {
    threshold: f64,
    rng: ChaCha8Rng,
}

impl GuidancePolicy {
    pub fn new(threshold: f64, seed: u64) -> Self {
        Self {
            threshold,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn decide(&mut self) -> bool {
        self.rng.random::<f64>() >= self.threshold
    }
}
