//! Counter-keyed random streams.
//!
//! Every draw is a pure function of `(seed, domain, index, position)`: the
//! stream is ChaCha8 keyed by `seed` with stream id `domain << 56 | index`,
//! and each normal consumes exactly two 64-bit words, so position `k` of a
//! stream starts at word `4k`. Evaluation order and thread count never change
//! a draw.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

const INDEX_BITS: u32 = 56;

/// Disjoint stream families.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Tensor = 1,
    Uniform = 2,
    Band = 3,
    Anchor = 4,
    Pairs = 5,
    Replica = 6,
}

pub struct KeyedStream(ChaCha8Rng);

impl KeyedStream {
    pub fn new(seed: u64, domain: Domain, index: u64) -> Self {
        assert!(index < 1 << INDEX_BITS, "stream index {index} too large");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(((domain as u64) << INDEX_BITS) | index);
        Self(rng)
    }

    /// Jumps to the `position`-th normal of the stream.
    pub fn at(mut self, position: u64) -> Self {
        self.0.set_word_pos(4 * u128::from(position));
        self
    }

    /// Uniform on `(0, 1]`.
    fn open_uniform(&mut self) -> f64 {
        ((self.0.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal by the cosine branch of Box-Muller.
    pub fn normal(&mut self) -> f64 {
        let u1 = self.open_uniform();
        let u2 = (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.normal();
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed for the `j`-th replica derived from a base seed.
pub fn derive_seed(seed: u64, j: u64) -> u64 {
    splitmix64(seed ^ splitmix64(j.wrapping_add(0x5eed)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positions_are_random_access() {
        let mut seq = KeyedStream::new(7, Domain::Tensor, 3);
        let draws: Vec<f64> = (0..10).map(|_| seq.normal()).collect();
        for (k, &d) in draws.iter().enumerate() {
            let mut jump = KeyedStream::new(7, Domain::Tensor, 3).at(k as u64);
            assert_eq!(jump.normal().to_bits(), d.to_bits());
        }
    }

    #[test]
    fn streams_differ() {
        let a = KeyedStream::new(7, Domain::Tensor, 0).normal();
        let b = KeyedStream::new(7, Domain::Tensor, 1).normal();
        let c = KeyedStream::new(7, Domain::Uniform, 0).normal();
        let d = KeyedStream::new(8, Domain::Tensor, 0).normal();
        assert!(a != b && a != c && a != d);
    }

    #[test]
    fn normal_moments() {
        let n = 1_000_000;
        let mut s = KeyedStream::new(11, Domain::Pairs, 0);
        let (mut sum, mut sq) = (0.0, 0.0);
        for _ in 0..n {
            let z = s.normal();
            sum += z;
            sq += z * z;
        }
        let mean = sum / n as f64;
        let var = sq / n as f64 - mean * mean;
        // 5 sigma for the mean of 1e6 standard normals
        assert!(mean.abs() < 5.0 / (n as f64).sqrt(), "{mean}");
        assert!((var - 1.0).abs() < 0.01, "{var}");
    }
}
