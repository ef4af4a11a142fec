//! Classical comparison detectors and the raw-measurement decoder ablation.
//!
//! The covariance LASSO, Group LASSO, MMV-AMP and covariance ML solvers are
//! reconstructions of the standard algorithms from the activity-detection
//! literature; none of their hyperparameters come from a reference
//! implementation.

mod amp;
mod cov_lasso;
mod cov_ml;
mod group_lasso;
mod naive;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autoencoder::Model;
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::signal::{sample_complex_gaussian, SensingMatrix};
use crate::thresholding::SoftScores;

pub use amp::{mmv_amp, AmpDetector, AmpPrior, RETRY_DAMPING};
pub use cov_lasso::{cov_lasso, CovLassoDetector, CovLassoSolver};
pub use cov_ml::{cov_ml, cov_ml_observed, ml_coordinate_step, negative_log_likelihood, MlDetector};
pub use group_lasso::{group_lasso, GroupLassoDetector, GroupLassoSolver};
pub use naive::{naive_config, naive_decoder_infer, naive_decoder_train};

/// Iteration limits and tuning shared by the iterative baselines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub max_iterations: usize,
    /// Stop once the largest iterate change falls below `tolerance * max(1, |iterate|)`.
    pub tolerance: f64,
    /// Absolute regularisation weight for the LASSO solvers.
    pub lambda: f64,
    /// AMP damping in `[0, 1)`.
    pub damping: f64,
    pub step: StepRule,
    /// Record the objective after every iteration.
    pub track_objective: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1000,
            tolerance: 1e-6,
            lambda: 0.0,
            damping: 0.0,
            step: StepRule::InverseLipschitz,
            track_objective: false,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be positive".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Config("tolerance must be non-negative".into()));
        }
        if !(self.lambda >= 0.0) {
            return Err(Error::Config(format!("lambda = {} must be non-negative", self.lambda)));
        }
        if !(0.0..1.0).contains(&self.damping) {
            return Err(Error::Config(format!("damping = {} must lie in [0, 1)", self.damping)));
        }
        if let StepRule::Fixed(t) = self.step {
            if !(t > 0.0) {
                return Err(Error::Config("fixed step must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Proximal-gradient step size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// `1 / L` with `L` the Lipschitz constant of the smooth part.
    InverseLipschitz,
    Fixed(f64),
}

/// Non-negative per-device power estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerEstimate(Vec<f64>);

impl PowerEstimate {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !(*v >= 0.0)) {
            return Err(Error::Numerical(format!("power estimate {i} is {}", values[i])));
        }
        Ok(Self(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Monotone map `u / (1 + u)` into `[0, 1)`, so a fixed threshold grid applies.
    pub fn to_scores(&self) -> SoftScores {
        power_scores(&self.0)
    }
}

pub(crate) fn power_scores(powers: &[f64]) -> SoftScores {
    SoftScores::new(powers.iter().map(|&u| u / (1.0 + u)).collect())
}

/// Outcome of an iterative solve.
#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport<T> {
    pub value: T,
    pub iterations: usize,
    pub converged: bool,
    /// Objective after every iteration (index 0 is the starting point), when tracked.
    pub objective: Vec<f64>,
}

/// Scores for one received block.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub scores: SoftScores,
    /// False when the solver hit its iteration limit or diverged.
    pub converged: bool,
}

/// Anything that turns a received block into per-device scores.
pub trait Detector: Send + Sync {
    fn name(&self) -> &str;
    fn detect(&self, y: &ComplexMatrix) -> Result<Detection>;
}

impl Detector for Model {
    fn name(&self) -> &str {
        match self.arch.features {
            crate::autoencoder::FeatureKind::Covariance => "proposed",
            crate::autoencoder::FeatureKind::Raw => "naive",
        }
    }

    fn detect(&self, y: &ComplexMatrix) -> Result<Detection> {
        Ok(Detection {
            scores: self.scores(y)?,
            converged: true,
        })
    }
}

/// `L x N` pilots with i.i.d. CN(0, 1) entries, not column-normalised.
pub fn gaussian_pilots<R: Rng + ?Sized>(devices: usize, measurements: usize, rng: &mut R) -> Result<SensingMatrix> {
    if devices == 0 || measurements == 0 {
        return Err(Error::InvalidArgument(format!(
            "pilot matrix needs positive dimensions, got N = {devices}, L = {measurements}"
        )));
    }
    Ok(SensingMatrix::new(sample_complex_gaussian(measurements, devices, 1.0, rng)))
}

pub(crate) fn check_block(a: &ComplexMatrix, y: &ComplexMatrix, context: &'static str) -> Result<()> {
    if y.nrows() != a.nrows() || y.ncols() == 0 {
        return Err(Error::dims(
            context,
            format!("{} x M block", a.nrows()),
            format!("{:?}", y.shape()),
        ));
    }
    Ok(())
}
