//! Reproducible random streams.
//!
//! A stream is a ChaCha8 keystream keyed by `seed` and selected by
//! `stream_id`. ChaCha is counter-based, so every `(seed, stream_id)` pair is
//! an independent, seekable sequence and replicate `r` of an ensemble can be
//! handed stream `base + r` without any coordination between workers.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

#[derive(Clone, Debug)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Stream for replicate `index` of an ensemble rooted at this stream.
    pub fn fork(&self, index: u64) -> Self {
        Self::new(
            self.seed,
            self.stream_id.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(index + 1),
        )
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn exp1(&mut self) -> f64 {
        Exp1.sample(&mut self.inner)
    }

    /// Uniform on [0, 1).
    pub fn uniform(&mut self) -> f64 {
        // 53 random mantissa bits.
        (self.inner.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for o in out.iter_mut() {
            *o = self.normal();
        }
    }

    pub fn normal_vec(&mut self, d: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        self.fill_normal(&mut v);
        v
    }

    /// Index uniform on `0..n`.
    pub fn below(&mut self, n: usize) -> usize {
        ((self.uniform() * n as f64) as usize).min(n.saturating_sub(1))
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_streams_are_bit_identical() {
        let mut a = RngStream::new(7, 3);
        let mut b = RngStream::new(7, 3);
        for _ in 0..1000 {
            assert_eq!(a.normal().to_bits(), b.normal().to_bits());
            assert_eq!(a.exp1().to_bits(), b.exp1().to_bits());
        }
    }

    #[test]
    fn distinct_streams_are_uncorrelated() {
        let n = 100_000;
        let mut a = RngStream::new(7, 0);
        let mut b = RngStream::new(7, 1);
        let mut acc = 0.0;
        for _ in 0..n {
            acc += a.normal() * b.normal();
        }
        let corr = acc / n as f64;
        assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "corr = {corr}");
    }

    #[test]
    fn uniform_in_unit_interval() {
        let mut r = RngStream::new(1, 1);
        for _ in 0..10_000 {
            let u = r.uniform();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn forks_differ_from_parent_and_each_other() {
        let root = RngStream::new(11, 0);
        let mut f0 = root.fork(0);
        let mut f1 = root.fork(1);
        let mut p = root.clone();
        let x = (p.next_u64(), f0.next_u64(), f1.next_u64());
        assert!(x.0 != x.1 && x.1 != x.2 && x.0 != x.2);
    }
}
