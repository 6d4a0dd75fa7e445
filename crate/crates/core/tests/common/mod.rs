#![allow(dead_code)]

use fsdde_core::delayed_ml::{DelayPair, MatrixTriple};
use nalgebra::DMatrix;

pub fn example_triple() -> MatrixTriple {
    MatrixTriple::new(
        DMatrix::from_row_slice(2, 2, &[-1.0, 2.0, 0.0, 1.0]),
        DMatrix::from_row_slice(2, 2, &[2.0, 4.0, 1.0, 0.0]),
        DMatrix::from_row_slice(2, 2, &[3.0, 0.5, 0.0, -2.0]),
    )
    .unwrap()
}

pub fn example_delays() -> DelayPair {
    DelayPair::new(1.0, 0.5).unwrap()
}

/// Uniform draws in [0, 1) from a seeded stream.
pub struct Uniform(rand_chacha::ChaCha8Rng);

impl Uniform {
    pub fn new(seed: u64) -> Self {
        use rand_chacha::rand_core::SeedableRng;
        Self(rand_chacha::ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn next(&mut self) -> f64 {
        use rand_chacha::rand_core::Rng;
        (self.0.next_u64() >> 11) as f64 / (1u64 << 53) as f64
    }

    pub fn range(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next()
    }
}
