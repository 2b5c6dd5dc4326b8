//! Adversarial soft-selection subsampling.
//!
//! A selector network scores every training sample, a task network is trained on
//! the selection-weighted samples, and the two are updated alternately through a
//! binary Gumbel-Softmax relaxation. After training, the highest-scoring samples
//! form the retained subset. The crate also ships the heuristic subsamplers it is
//! compared against (random, k-means centroid-nearest, radius thinning) and the
//! evaluation metrics used to score classifiers trained on each subset.

pub mod asss;
pub mod baselines;
pub mod dataio;
pub mod error;
pub mod gradcheck;
pub mod gumbel;
pub mod metrics;
pub mod nn;
pub mod seed;

pub use error::{Error, Result};

/// Formats a float with 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
