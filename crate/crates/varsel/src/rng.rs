//! Reproducible random streams.
//!
//! Each `(seed, stream)` pair addresses an independent ChaCha stream, so
//! replicate `i` of a simulation can draw from `RngStream::new(seed, i)`
//! and produce bit-identical output no matter how replicates are scheduled
//! across threads.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// A seeded, stream-addressed random generator.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng }
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn normal_vec(&mut self, n: usize) -> Array1<f64> {
        Array1::from_iter((0..n).map(|_| self.normal()))
    }

    pub fn normal_matrix(&mut self, n: usize, p: usize) -> Array2<f64> {
        let data: Vec<f64> = (0..n * p).map(|_| self.normal()).collect();
        Array2::from_shape_vec((n, p), data).expect("shape matches data length")
    }

    /// Fisher-Yates shuffle of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            let j = self.rng.random_range(0..=i);
            idx.swap(i, j);
        }
        idx
    }
}
