//! Seeded pseudorandom streams and the sampling primitives used across the
//! pipeline.
//!
//! Every stream is a ChaCha8 generator keyed by the 64-bit run seed. Named
//! sub-streams ("init", "augment", "negatives", ...) select a distinct ChaCha
//! stream id, so they never overlap and can be replayed independently.

use rand::seq::{index, SliceRandom};
use rand::{Rng as _, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Identifier recorded in reports so runs can be reproduced.
pub const RNG_ALGORITHM: &str =
    "chacha8 (rand_chacha 0.9), stream id = fnv1a64(name); normal: rand_distr ziggurat; beta: rand_distr 0.5";

#[derive(Debug, Clone)]
pub struct Rng {
    inner: ChaCha8Rng,
}

fn fnv1a64(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl Rng {
    pub fn from_seed(seed: u64) -> Self {
        Rng {
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Independent named sub-stream of `seed`.
    pub fn stream(seed: u64, name: &str) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(seed);
        inner.set_stream(fnv1a64(name));
        Rng { inner }
    }

    pub fn algorithm(&self) -> &'static str {
        RNG_ALGORITHM
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    /// Uniform integer in `0..n`. Panics when `n == 0`.
    pub fn below(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.uniform() < p
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn normals(&mut self, n: usize) -> Vec<f64> {
        (0..n).map(|_| self.normal()).collect()
    }

    /// I.i.d. standard normal tensor.
    pub fn gaussian(&mut self, rows: usize, cols: usize) -> Tensor {
        let data = self.normals(rows * cols);
        Tensor::new(rows, cols, data).expect("length matches shape")
    }

    pub fn uniform_tensor(&mut self, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
        Tensor::from_fn(rows, cols, |_, _| self.uniform_range(lo, hi))
    }

    /// One Beta(alpha, beta) draw in `[0, 1]`.
    pub fn beta(&mut self, alpha: f64, beta: f64) -> Result<f64> {
        if !(alpha > 0.0 && beta > 0.0) || !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::Domain(format!(
                "beta parameters must be positive and finite, got ({alpha}, {beta})"
            )));
        }
        let dist = Beta::new(alpha, beta).map_err(|e| Error::Domain(e.to_string()))?;
        Ok(dist.sample(&mut self.inner).clamp(0.0, 1.0))
    }

    /// Uniformly random permutation of `0..n` (Fisher-Yates).
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut p: Vec<usize> = (0..n).collect();
        p.shuffle(&mut self.inner);
        p
    }

    /// `k` distinct indices from `0..n`, uniformly without replacement.
    pub fn sample_distinct(&mut self, n: usize, k: usize) -> Vec<usize> {
        index::sample(&mut self.inner, n, k).into_vec()
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
}
