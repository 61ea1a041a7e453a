use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deterministic random stream.
///
/// Backed by ChaCha8. Replica streams share the key derived from the master
/// seed and differ in the 64-bit ChaCha stream id, so replica `k` of a run
/// sees the same draws no matter which thread simulates it.
#[derive(Debug, Clone)]
pub struct RandomStream {
    inner: ChaCha8Rng,
}

impl RandomStream {
    pub fn from_seed(seed: u64) -> Self {
        RandomStream {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent sub-stream `index` of `master_seed`.
    pub fn for_replica(master_seed: u64, index: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(master_seed);
        inner.set_stream(index);
        RandomStream { inner }
    }

    /// Uniform draw on `(0, 1]`.
    pub fn open_unit(&mut self) -> f64 {
        1.0 - self.inner.random::<f64>()
    }

    /// Exponential draw with the given rate (inverse-cdf method).
    pub fn exponential(&mut self, rate: f64) -> f64 {
        -self.open_unit().ln() / rate
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.inner.random::<f64>() < p
    }
}
