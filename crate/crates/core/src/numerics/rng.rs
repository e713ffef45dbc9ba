//! Counter-based random streams keyed by `(seed, stream-id)`.
//!
//! Every consumer of randomness receives its own stream, derived from a parent
//! by label rather than by drawing from it, so results never depend on the
//! order in which independent pieces of work run.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// A single-owner deterministic random stream.
#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// FNV-1a, used to turn textual labels into stream ids.
fn label_hash(label: &str) -> u64 {
    label.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0100_0000_01b3)
    })
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Self {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream
    }

    /// Child stream for `label`; independent of how much of `self` was consumed.
    pub fn derive(&self, label: u64) -> Self {
        Self::new(self.seed, splitmix64(self.stream ^ splitmix64(label)))
    }

    pub fn derive_named(&self, label: &str) -> Self {
        self.derive(label_hash(label))
    }

    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    pub fn bit(&mut self) -> bool {
        self.inner.random::<bool>()
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// `n` i.i.d. draws from `N(mean, variance)`.
pub fn gaussian_vector(rng: &mut RngStream, n: usize, mean: f64, variance: f64) -> Vec<f64> {
    assert!(variance >= 0.0, "variance must be non-negative");
    if variance == 0.0 {
        return vec![mean; n];
    }
    let sd = variance.sqrt();
    (0..n).map(|_| mean + sd * rng.standard_normal()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_variance_is_constant() {
        let mut r = RngStream::new(1, 2);
        assert_eq!(gaussian_vector(&mut r, 3, 0.0, 0.0), vec![0.0; 3]);
    }

    #[test]
    fn same_key_same_draws() {
        let a = gaussian_vector(&mut RngStream::new(7, 3), 16, 0.0, 1.0);
        let b = gaussian_vector(&mut RngStream::new(7, 3), 16, 0.0, 1.0);
        assert_eq!(a, b);
        let c = gaussian_vector(&mut RngStream::new(7, 4), 16, 0.0, 1.0);
        assert_ne!(a, c);
    }

    #[test]
    fn derive_ignores_consumption() {
        let parent = RngStream::new(11, 0);
        let mut used = parent.clone();
        used.next_u64();
        assert_eq!(parent.derive(5).stream_id(), used.derive(5).stream_id());
        assert_ne!(parent.derive(5).stream_id(), parent.derive(6).stream_id());
        assert_ne!(
            parent.derive_named("init").stream_id(),
            parent.derive_named("bit").stream_id()
        );
    }

    #[test]
    fn law_of_large_numbers() {
        let mut r = RngStream::new(2024, 1);
        let v = gaussian_vector(&mut r, 100_000, 0.0, 0.1);
        let mean = v.iter().sum::<f64>() / v.len() as f64;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (v.len() - 1) as f64;
        assert!(mean.abs() <= 0.01, "mean {mean}");
        assert!((var - 0.1).abs() <= 0.01, "variance {var}");
    }
}
