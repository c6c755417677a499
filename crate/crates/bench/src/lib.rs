//! Experiment harness for `tensor-iht`.
//!
//! Experiments are described by a TOML [`config::ExperimentSpec`], executed
//! by [`runner`] with trial-level parallelism, and written as CSV by
//! [`output`]. [`tnsr`] stores tensors in a small little-endian binary format
//! so real data can replace the synthetic generators.

pub mod config;
pub mod error;
pub mod output;
pub mod runner;
pub mod tnsr;

pub use config::ExperimentSpec;
pub use error::{BenchError, Result};

/// 17 significant digits, exponent form, `.` decimal separator.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}
