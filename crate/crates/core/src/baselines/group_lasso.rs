//! Group LASSO on the measurement block itself.
//!
//! ```text
//! min_X  1/2 ||Y - A X||_F^2 + lambda * sum_n ||X[n, :]||_2
//! ```
//!
//! solved by block ISTA: gradient step with `1 / ||A||_2^2`, then row-wise
//! group soft-thresholding.

use ndarray::Array2;

use super::{check_block, power_scores, SolveReport, SolverConfig, StepRule};
use crate::error::{Error, Result};
use crate::linalg::{spectral_norm_sq, ComplexMatrix};
use crate::signal::SensingMatrix;
use crate::thresholding::SoftScores;

#[derive(Debug, Clone)]
pub struct GroupLassoSolver {
    a: ComplexMatrix,
    ah: ComplexMatrix,
    lipschitz: f64,
}

impl GroupLassoSolver {
    pub fn new(a: &SensingMatrix) -> Self {
        let a = a.matrix().clone();
        let lipschitz = spectral_norm_sq(&a);
        Self {
            ah: a.conj_transpose(),
            a,
            lipschitz,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// `max_n ||(A^H Y)[n, :]||_2`: any `lambda` at or above it gives `X = 0`.
    pub fn lambda_max(&self, y: &ComplexMatrix) -> Result<f64> {
        check_block(&self.a, y, "group_lasso")?;
        let c = self.ah.matmul(y)?;
        Ok(c.row_norms_sq().into_iter().fold(0.0f64, |a, v| a.max(v.sqrt())))
    }

    pub fn objective(&self, y: &ComplexMatrix, x: &ComplexMatrix, lambda: f64) -> Result<f64> {
        let resid = self.a.matmul(x)?.sub(y)?;
        let penalty: f64 = x.row_norms_sq().into_iter().map(f64::sqrt).sum();
        Ok(0.5 * resid.frobenius_norm().powi(2) + lambda * penalty)
    }

    /// Returns the estimate `X_hat` (`N x M`).
    pub fn solve(&self, y: &ComplexMatrix, cfg: &SolverConfig) -> Result<SolveReport<ComplexMatrix>> {
        cfg.validate()?;
        check_block(&self.a, y, "group_lasso")?;
        let step = match cfg.step {
            StepRule::InverseLipschitz if self.lipschitz > 0.0 => 1.0 / self.lipschitz,
            StepRule::InverseLipschitz => 1.0,
            StepRule::Fixed(t) => t,
        };
        let shrink = step * cfg.lambda;
        let (n, m) = (self.a.ncols(), y.ncols());
        let mut x = ComplexMatrix::zeros(n, m);
        let mut objective = Vec::new();
        if cfg.track_objective {
            objective.push(self.objective(y, &x, cfg.lambda)?);
        }
        let mut converged = false;
        let mut iterations = 0;
        while iterations < cfg.max_iterations {
            iterations += 1;
            let grad = self.ah.matmul(&self.a.matmul(&x)?.sub(y)?)?;
            let mut next_re: Array2<f64> = &x.re - &(grad.re * step);
            let mut next_im: Array2<f64> = &x.im - &(grad.im * step);
            for row in 0..n {
                let norm = next_re
                    .row(row)
                    .iter()
                    .chain(next_im.row(row).iter())
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt();
                let factor = if norm > shrink { 1.0 - shrink / norm } else { 0.0 };
                next_re.row_mut(row).mapv_inplace(|v| v * factor);
                next_im.row_mut(row).mapv_inplace(|v| v * factor);
            }
            let next = ComplexMatrix::new(next_re, next_im)?;
            let delta = next.max_abs_diff(&x);
            let scale = next
                .re
                .iter()
                .chain(next.im.iter())
                .fold(1.0f64, |a, v| a.max(v.abs()));
            x = next;
            if cfg.track_objective {
                objective.push(self.objective(y, &x, cfg.lambda)?);
            }
            if delta <= cfg.tolerance * scale {
                converged = true;
                break;
            }
        }
        if x.re.iter().chain(x.im.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Numerical("group_lasso iterate is not finite".into()));
        }
        Ok(SolveReport {
            value: x,
            iterations,
            converged,
            objective,
        })
    }

    /// Row norms `||X_hat[n, :]||_2` of the solution, plus the convergence flag.
    pub fn row_norms(&self, y: &ComplexMatrix, cfg: &SolverConfig) -> Result<(Vec<f64>, bool)> {
        let rep = self.solve(y, cfg)?;
        Ok((rep.value.row_norms_sq().into_iter().map(f64::sqrt).collect(), rep.converged))
    }
}

/// One-shot solve returning the row norms `||X_hat[n, :]||_2`.
pub fn group_lasso(y: &ComplexMatrix, a: &SensingMatrix, cfg: &SolverConfig) -> Result<SolveReport<Vec<f64>>> {
    let rep = GroupLassoSolver::new(a).solve(y, cfg)?;
    Ok(SolveReport {
        value: rep.value.row_norms_sq().into_iter().map(f64::sqrt).collect(),
        iterations: rep.iterations,
        converged: rep.converged,
        objective: rep.objective,
    })
}

/// Scores `u / (1 + u)` with `u = ||X_hat[n, :]||^2 / M`.
#[derive(Debug, Clone)]
pub struct GroupLassoDetector {
    pub solver: GroupLassoSolver,
    pub cfg: SolverConfig,
    /// When set, `lambda = factor * lambda_max` of each block replaces `cfg.lambda`.
    pub relative_lambda: Option<f64>,
}

impl GroupLassoDetector {
    pub fn new(a: &SensingMatrix, cfg: SolverConfig) -> Self {
        Self {
            solver: GroupLassoSolver::new(a),
            cfg,
            relative_lambda: None,
        }
    }

    pub fn with_relative_lambda(mut self, factor: f64) -> Self {
        self.relative_lambda = Some(factor);
        self
    }

    pub fn scores(&self, y: &ComplexMatrix) -> Result<(SoftScores, bool)> {
        let mut cfg = self.cfg;
        if let Some(f) = self.relative_lambda {
            cfg.lambda = f * self.solver.lambda_max(y)?;
        }
        let rep = self.solver.solve(y, &cfg)?;
        let m = y.ncols() as f64;
        let powers: Vec<f64> = rep.value.row_norms_sq().into_iter().map(|v| v / m).collect();
        Ok((power_scores(&powers), rep.converged))
    }
}

impl super::Detector for GroupLassoDetector {
    fn name(&self) -> &str {
        "glasso"
    }

    fn detect(&self, y: &ComplexMatrix) -> Result<super::Detection> {
        let (scores, converged) = self.scores(y)?;
        Ok(super::Detection { scores, converged })
    }
}
