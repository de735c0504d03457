//! Dense row-major matrices and the handful of numerical kernels the losses,
//! network and evaluation code are built on.
//!
//! Everything is 64-bit and evaluated in a fixed order, so identical inputs
//! give bit-identical outputs.

pub(crate) mod matrix;
mod rng;

pub use matrix::{cosine_matrix, l2_normalize_rows, log_softmax_rows, matmul, Matrix};
pub use rng::Rng;

/// Guard used wherever a vector norm ends up in a denominator.
pub const NORM_EPS: f64 = 1e-12;
