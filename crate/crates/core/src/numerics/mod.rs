//! Dense linear algebra, initialization, optimization and decomposition
//! primitives shared by the rest of the crate.

mod adam;
mod matrix;
mod pca;
mod rng;

pub use adam::{adam_step, AdamState};
pub use matrix::{gemm_into, matmul, MatView, Matrix};
pub use pca::{pca_fit, Pca};
pub use rng::Rng;

use crate::{Error, Result};

/// Glorot/Xavier uniform initialization: entries uniform in `[-b, b]` with
/// `b = sqrt(6 / (fan_in + fan_out))`, fan-in = `cols`, fan-out = `rows`.
pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut Rng) -> Result<Matrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid(format!(
            "glorot_uniform needs non-zero dimensions, got {rows}x{cols}"
        )));
    }
    let bound = glorot_bound(rows, cols);
    let data = (0..rows * cols)
        .map(|_| rng.uniform(-bound, bound))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

pub fn glorot_bound(rows: usize, cols: usize) -> f64 {
    (6.0 / (rows + cols) as f64).sqrt()
}

/// Sum over all entries of `(output - target)^2`.
pub fn sum_squared_error(output: &Matrix, target: &Matrix) -> Result<f64> {
    if !output.same_shape(target) {
        return Err(Error::invalid(format!(
            "sse shape mismatch: {:?} vs {:?}",
            output.shape(),
            target.shape()
        )));
    }
    Ok(output
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(o, t)| (o - t) * (o - t))
        .sum())
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}
