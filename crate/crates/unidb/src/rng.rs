//! Counter-based random streams addressed by `(master seed, stream name)`.
//!
//! Each stream is a ChaCha8 keystream keyed by the master seed with the
//! 64-bit stream id taken from an FNV-1a hash of the name. Streams never
//! overlap, so any number of workers can draw from disjoint names without
//! coordination and reproduce the same values in any order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::state::StateVec;

#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, name: &str) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(fnv1a(name.as_bytes()));
        Self { rng }
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn normal_vec(&mut self, dim: usize) -> StateVec {
        let values = (0..dim).map(|_| self.standard_normal()).collect();
        StateVec::new(values).expect("dimension at least 1")
    }

    /// Uniform draw on `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.gen_range(lo..hi)
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes
        .iter()
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_address_same_values() {
        let a: Vec<f64> = (0..8)
            .map({
                let mut s = RngStream::new(7, "paths/3");
                move |_| s.standard_normal()
            })
            .collect();
        let mut s = RngStream::new(7, "paths/3");
        let b: Vec<f64> = (0..8).map(|_| s.standard_normal()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn names_and_seeds_separate_streams() {
        let x = RngStream::new(7, "a").standard_normal();
        assert_ne!(x, RngStream::new(7, "b").standard_normal());
        assert_ne!(x, RngStream::new(8, "a").standard_normal());
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a(b"a"), 0xaf63_dc4c_8601_ec8c);
    }
}
