//! Cosine-margin deep metric learning.
//!
//! * [`numcore`]: dense matrices, normalization, stable softmax, seeded RNG.
//! * [`losses`]: softmax cross-entropy and the cosine-margin losses with
//!   analytic gradients.
//! * [`netopt`]: dense embedding network, SGD, checkpoints, training loop.
//! * [`dataio`]: IDX images, synthetic blobs, batches, pair and template lists.
//! * [`evalkit`]: verification and identification metrics, PCA, feature files.
//! * [`gradcheck`]: finite-difference verification of those gradients.

pub mod error;
pub mod evalkit;
pub mod gradcheck;
pub mod dataio;
pub mod losses;
pub mod netopt;
pub mod numcore;

pub use error::{Error, Result};
