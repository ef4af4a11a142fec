//! Jointly sparse support recovery with a learned pilot matrix.
//!
//! An `L x N` complex pilot matrix `A` and a covariance-feature decoder are
//! trained end to end as an auto-encoder. Classical detectors (covariance
//! LASSO, Group LASSO, MMV-AMP, covariance ML) and a benchmark harness sit
//! alongside for comparison.

pub mod autoencoder;
pub mod baselines;
pub mod bench;
pub mod dataset;
pub mod error;
pub mod linalg;
pub mod rng;
pub mod signal;
pub mod thresholding;

pub use error::{Error, Result};
pub use linalg::ComplexMatrix;
pub use signal::{ActivityVector, GroupSparsityConfig, JointSignal, MeasurementBatch, SensingMatrix};
pub use thresholding::SoftScores;
