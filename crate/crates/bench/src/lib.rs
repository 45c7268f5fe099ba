//! Shared fixtures for the benchmark targets.

use pli_core::{Matrix, RngStream};

/// Uniform random sample matrix with a fixed stream, one fixture per shape.
pub fn sample_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = RngStream::new(seed);
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| rng.uniform() * 2.0 - 1.0)
        .collect();
    Matrix::from_vec(rows, cols, data)
}
