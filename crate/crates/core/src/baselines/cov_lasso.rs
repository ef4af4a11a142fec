//! Covariance-domain non-negative LASSO on the row powers.
//!
//! ```text
//! min_{r >= 0}  1/2 ||vec(Sigma_hat) - (A* ⊙ A) r||^2 + lambda * sum(r)
//! ```
//!
//! Because `r` is real, only `G = Re(K^H K)` with `G(n, m) = |a_n^H a_m|^2`
//! and `b = Re(K^H vec(Sigma_hat))` with `b(n) = a_n^H Sigma_hat a_n` enter
//! the iteration, so the `L^2 x N` system is never touched per sample.

use ndarray::{Array1, Array2};

use super::{PowerEstimate, SolveReport, SolverConfig, StepRule};
use crate::autoencoder::{khatri_rao_conj, sample_covariance, vec_column};
use crate::error::{Error, Result};
use crate::linalg::{spectral_radius_psd, ComplexMatrix};
use crate::signal::SensingMatrix;
use crate::thresholding::SoftScores;

/// Per-pilot-matrix precomputation, reusable across samples.
#[derive(Debug, Clone)]
pub struct CovLassoSolver {
    kr: ComplexMatrix,
    gram: Array2<f64>,
    lipschitz: f64,
}

impl CovLassoSolver {
    pub fn new(a: &SensingMatrix) -> Self {
        let kr = khatri_rao_conj(a.matrix());
        let gram = kr.re.t().dot(&kr.re) + kr.im.t().dot(&kr.im);
        let lipschitz = spectral_radius_psd(&gram, 10_000);
        Self { kr, gram, lipschitz }
    }

    pub fn devices(&self) -> usize {
        self.gram.nrows()
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    fn check(&self, sigma_hat: &ComplexMatrix) -> Result<Array1<f64>> {
        let l2 = self.kr.nrows();
        if sigma_hat.nrows() * sigma_hat.ncols() != l2 || sigma_hat.nrows() != sigma_hat.ncols() {
            return Err(Error::dims(
                "cov_lasso",
                format!("{l2} covariance entries"),
                format!("{:?}", sigma_hat.shape()),
            ));
        }
        let s = vec_column(sigma_hat);
        Ok(self.kr.re.t().dot(&s.re.column(0)) + self.kr.im.t().dot(&s.im.column(0)))
    }

    /// `||K^H vec(Sigma_hat)||_inf`: any `lambda` at or above it gives `r = 0`.
    pub fn lambda_max(&self, sigma_hat: &ComplexMatrix) -> Result<f64> {
        Ok(self.check(sigma_hat)?.iter().fold(0.0f64, |a, v| a.max(v.abs())))
    }

    fn objective(&self, s_norm_sq: f64, b: &Array1<f64>, r: &Array1<f64>, lambda: f64) -> f64 {
        let gr = self.gram.dot(r);
        0.5 * s_norm_sq - b.dot(r) + 0.5 * r.dot(&gr) + lambda * r.sum()
    }

    pub fn solve(&self, sigma_hat: &ComplexMatrix, cfg: &SolverConfig) -> Result<SolveReport<PowerEstimate>> {
        cfg.validate()?;
        let b = self.check(sigma_hat)?;
        let s_norm_sq = sigma_hat.frobenius_norm().powi(2);
        let step = match cfg.step {
            StepRule::InverseLipschitz if self.lipschitz > 0.0 => 1.0 / self.lipschitz,
            StepRule::InverseLipschitz => 1.0,
            StepRule::Fixed(t) => t,
        };
        let lambda = cfg.lambda;
        let n = self.devices();
        let mut r = Array1::<f64>::zeros(n);
        let mut objective = Vec::new();
        if cfg.track_objective {
            objective.push(self.objective(s_norm_sq, &b, &r, lambda));
        }
        let mut converged = false;
        let mut iterations = 0;
        while iterations < cfg.max_iterations {
            iterations += 1;
            let grad = self.gram.dot(&r) - &b;
            let mut delta = 0.0f64;
            let mut scale = 1.0f64;
            for i in 0..n {
                let next = (r[i] - step * (grad[i] + lambda)).max(0.0);
                delta = delta.max((next - r[i]).abs());
                scale = scale.max(next);
                r[i] = next;
            }
            if cfg.track_objective {
                objective.push(self.objective(s_norm_sq, &b, &r, lambda));
            }
            if delta <= cfg.tolerance * scale {
                converged = true;
                break;
            }
        }
        if r.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("cov_lasso iterate is not finite".into()));
        }
        Ok(SolveReport {
            value: PowerEstimate::new(r.to_vec())?,
            iterations,
            converged,
            objective,
        })
    }

    /// Objective at an arbitrary `r`.
    pub fn objective_at(&self, sigma_hat: &ComplexMatrix, r: &[f64], lambda: f64) -> Result<f64> {
        let b = self.check(sigma_hat)?;
        let s_norm_sq = sigma_hat.frobenius_norm().powi(2);
        Ok(self.objective(s_norm_sq, &b, &Array1::from(r.to_vec()), lambda))
    }
}

/// One-shot solve; builds the Gram matrix on every call.
pub fn cov_lasso(sigma_hat: &ComplexMatrix, a: &SensingMatrix, cfg: &SolverConfig) -> Result<SolveReport<PowerEstimate>> {
    CovLassoSolver::new(a).solve(sigma_hat, cfg)
}

/// Detector wrapper: `YY^H / M`, solve, map powers to scores.
#[derive(Debug, Clone)]
pub struct CovLassoDetector {
    pub solver: CovLassoSolver,
    pub cfg: SolverConfig,
    /// When set, `lambda = factor * lambda_max` of each block replaces `cfg.lambda`.
    pub relative_lambda: Option<f64>,
}

impl CovLassoDetector {
    pub fn new(a: &SensingMatrix, cfg: SolverConfig) -> Self {
        Self {
            solver: CovLassoSolver::new(a),
            cfg,
            relative_lambda: None,
        }
    }

    pub fn with_relative_lambda(mut self, factor: f64) -> Self {
        self.relative_lambda = Some(factor);
        self
    }

    pub fn scores(&self, y: &ComplexMatrix) -> Result<(SoftScores, bool)> {
        let sigma_hat = sample_covariance(y)?;
        let mut cfg = self.cfg;
        if let Some(f) = self.relative_lambda {
            cfg.lambda = f * self.solver.lambda_max(&sigma_hat)?;
        }
        let report = self.solver.solve(&sigma_hat, &cfg)?;
        Ok((report.value.to_scores(), report.converged))
    }
}

impl super::Detector for CovLassoDetector {
    fn name(&self) -> &str {
        "lasso"
    }

    fn detect(&self, y: &ComplexMatrix) -> Result<super::Detection> {
        let (scores, converged) = self.scores(y)?;
        Ok(super::Detection { scores, converged })
    }
}
