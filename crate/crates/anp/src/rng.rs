//! Seedable, checkpointable random streams.
//!
//! Every source of randomness in the crate is a [`Stream`]: a ChaCha8
//! generator whose state is fully described by `(seed, word_pos)`, so a
//! stream can be persisted in a checkpoint and resumed exactly. Substreams
//! are derived from a base seed with SplitMix64 so independent streams
//! (episodes, noise, eval, init) never overlap.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::tensor::Tensor;

/// One 64-bit SplitMix64 step; used only for deriving substream seeds.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Seed for substream `index` of a base seed.
pub fn substream_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ index.wrapping_mul(0xA0761D6478BD642F))
}

#[derive(Clone)]
pub struct Stream {
    seed: u64,
    rng: ChaCha8Rng,
}

impl Stream {
    pub fn new(seed: u64) -> Self {
        Stream {
            seed,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// `(seed, word_pos)` — everything needed to restore the stream.
    pub fn state(&self) -> (u64, u128) {
        (self.seed, self.rng.get_word_pos())
    }

    pub fn restore(seed: u64, word_pos: u128) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_word_pos(word_pos);
        Stream { seed, rng }
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.random_range(lo..hi)
    }

    /// Uniform integer in `[lo, hi]` inclusive.
    pub fn uniform_int(&mut self, lo: usize, hi: usize) -> usize {
        self.rng.random_range(lo..=hi)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn normal_tensor(&mut self, rows: usize, cols: usize) -> Tensor {
        Tensor::from_vec(
            rows,
            cols,
            (0..rows * cols).map(|_| self.normal()).collect(),
        )
    }

    /// `count` distinct indices from `0..n`, in draw order (partial
    /// Fisher-Yates).
    pub fn sample_indices(&mut self, n: usize, count: usize) -> Vec<usize> {
        assert!(count <= n, "sample_indices: {count} from {n}");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..count {
            let j = self.uniform_int(i, n - 1);
            pool.swap(i, j);
        }
        pool.truncate(count);
        pool
    }

    /// Glorot-uniform weight matrix: `U[-b, b]` with `b = sqrt(6/(fan_in+fan_out))`.
    pub fn glorot(&mut self, fan_in: usize, fan_out: usize) -> Tensor {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Tensor::from_vec(
            fan_in,
            fan_out,
            (0..fan_in * fan_out)
                .map(|_| self.uniform(-bound, bound))
                .collect(),
        )
    }
}
