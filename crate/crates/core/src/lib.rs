//! Low-rank tensor recovery from linear measurements.
//!
//! The crate provides dense tensor arithmetic ([`tensor`]), rank thresholding
//! operators ([`lowrank`]), dense and face-splitting measurement ensembles with
//! data-driven row trimming ([`measure`]), the TIHT / TrimTIHT / KaczTIHT
//! recovery algorithms with per-iteration convergence diagnostics
//! ([`recover`]), and an empirical restricted-isometry laboratory ([`riplab`]).
//!
//! Tensors are stored row-major (last mode fastest); see [`tensor`].

pub mod error;
pub mod lowrank;
pub mod measure;
pub mod recover;
pub mod riplab;
pub mod tensor;

pub use error::{Error, Result};
pub use lowrank::{FitOptions, RankSpec};
pub use measure::{MeasurementEnsemble, MeasurementOperator, RowDistribution, TrimmedView};
pub use tensor::{DenseTensor, FactorList};
