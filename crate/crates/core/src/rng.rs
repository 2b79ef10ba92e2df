//! Seeded, splittable random streams.
//!
//! Every random draw in the crate comes from an [`Rng`] derived from a root
//! seed by a tuple of tags such as `(purpose, sample index, epoch)`, so the
//! values a sample sees do not depend on batch order.

use rand::seq::SliceRandom;
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// What a derived stream is used for. Discriminants are part of the
/// reproducibility contract; do not reorder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Shuffle = 2,
    WeakAug = 3,
    StrongAug = 4,
    Mask = 5,
    Generate = 6,
    Domain = 7,
    Gcn = 8,
    Eval = 9,
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// ChaCha8 keyed by a 64-bit seed, on a 64-bit stream id.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Self::with_stream(seed, 0)
    }

    pub fn with_stream(seed: u64, stream: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream);
        Rng {
            seed,
            stream,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// A fresh, independent stream. Depends only on this stream's identity
    /// and `tags`, not on how much of this stream has been consumed.
    pub fn derive(&self, tags: &[u64]) -> Rng {
        let mut s = mix(self.stream ^ 0x5bd1_e995);
        for t in tags {
            s = mix(s ^ mix(*t));
        }
        Rng::with_stream(self.seed, s)
    }

    pub fn fork(&self, purpose: Purpose, tags: &[u64]) -> Rng {
        let mut all = Vec::with_capacity(tags.len() + 1);
        all.push(purpose as u64);
        all.extend_from_slice(tags);
        self.derive(&all)
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform in `[low, high]`; exactly `low` when the bounds coincide.
    pub fn uniform_in(&mut self, low: f64, high: f64) -> f64 {
        low + (high - low) * self.uniform()
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Uniform integer in `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        xs.shuffle(&mut self.inner);
    }

    /// `k` distinct indices from `0..n`, in sampling order.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        rand::seq::index::sample(&mut self.inner, n, k).into_vec()
    }
}

impl RngCore for Rng {
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_and_stream_repeat() {
        let mut a = Rng::with_stream(7, 3);
        let mut b = Rng::with_stream(7, 3);
        for _ in 0..100 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn derive_ignores_consumption() {
        let a = Rng::new(11);
        let mut b = Rng::new(11);
        b.next_u64();
        b.normal();
        assert_eq!(a.derive(&[1, 2]).next_u64(), b.derive(&[1, 2]).next_u64());
        assert_ne!(a.derive(&[1, 2]).next_u64(), a.derive(&[2, 1]).next_u64());
    }

    #[test]
    fn streams_are_pinned() {
        // Frozen output: changing the generator or derivation breaks every
        // recorded run, so it must show up here first.
        let first = Rng::new(42).fork(Purpose::Init, &[0]).next_u64();
        assert_eq!(first, 17484526281876178268);
        assert_ne!(first, Rng::new(43).fork(Purpose::Init, &[0]).next_u64());
    }

    #[test]
    fn uniform_in_degenerate_range() {
        let mut r = Rng::new(1);
        for _ in 0..10 {
            assert_eq!(r.uniform_in(2.0, 2.0), 2.0);
            let u = r.uniform_in(0.8, 1.2);
            assert!((0.8..=1.2).contains(&u));
        }
    }
}
