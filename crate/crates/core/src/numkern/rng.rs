//! Seeded random streams.
//!
//! Every consumer of randomness (mask generation, weight init, generator
//! noise, minibatch sampling) takes its own [`SeededRng`] split from a master
//! seed by label, so changing how one component draws numbers never shifts
//! another component's stream.

use rand::{RngExt, SeedableRng};
use rand_distr::{Distribution, StandardNormal};
use rand_pcg::Pcg64;

use super::Matrix;

/// A portable PCG-64 generator plus the seed it was built from.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: Pcg64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// FNV-1a over the label bytes.
fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: Pcg64::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent child stream keyed by `label`. Depends only on the
    /// original seed, not on how much of this stream was consumed.
    pub fn stream(&self, label: &str) -> SeededRng {
        SeededRng::new(splitmix64(self.seed ^ splitmix64(label_hash(label))))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }

    /// Uniform in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    pub fn uniform_range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.uniform()
    }

    pub fn gaussian(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        // Strict comparison makes p = 0 never fire and p = 1 always fire.
        self.uniform() < p
    }

    /// Uniform integer in `[0, n)`.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below(0)");
        self.inner.random_range(0..n)
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }

    /// `k` distinct indices from `0..n`, in sampled order.
    pub fn sample_indices(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot sample {k} of {n}");
        let mut idx: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below(n - i);
            idx.swap(i, j);
        }
        idx.truncate(k);
        idx
    }

    pub fn uniform_matrix(&mut self, rows: usize, cols: usize, lo: f64, hi: f64) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| self.uniform_range(lo, hi))
    }

    pub fn gaussian_matrix(&mut self, rows: usize, cols: usize, mean: f64, std: f64) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| mean + std * self.gaussian())
    }

    pub fn bernoulli_matrix(&mut self, rows: usize, cols: usize, p: f64) -> Matrix {
        Matrix::from_fn(rows, cols, |_, _| if self.bernoulli(p) { 1.0 } else { 0.0 })
    }

    /// Access to the underlying generator for `rand_distr` samplers.
    pub fn inner_mut(&mut self) -> &mut Pcg64 {
        &mut self.inner
    }
}
