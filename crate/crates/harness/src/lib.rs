//! Benchmark harness: runs every subsampling method through repeated stratified
//! cross-validation, scores a freshly trained classifier per method and writes
//! JSON and CSV reports.

pub mod classifier;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiment;
pub mod report;
pub mod synth;

pub use error::{HarnessError, Result};
