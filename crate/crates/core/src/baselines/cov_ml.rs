//! Covariance-based maximum likelihood by coordinate descent.
//!
//! ```text
//! f(gamma) = log det Sigma(gamma) + tr(Sigma(gamma)^{-1} Sigma_hat)
//! Sigma(gamma) = A diag(gamma) A^H + sigma2 I
//! ```
//!
//! Moving coordinate `n` by `d` changes `f` by
//! `log(1 + d q) - d s / (1 + d q)` with `q = a^H Sigma^{-1} a` and
//! `s = a^H Sigma^{-1} Sigma_hat Sigma^{-1} a`, minimised at
//! `d = (s - q) / q^2`, clipped so `gamma_n` stays non-negative.
//! `Sigma^{-1}` follows each step through a Sherman-Morrison update.

use super::{PowerEstimate, SolveReport, SolverConfig};
use crate::autoencoder::sample_covariance;
use crate::error::{Error, Result};
use crate::linalg::{hermitian_logdet_inverse, ComplexMatrix, Cx};
use crate::signal::SensingMatrix;
use crate::thresholding::SoftScores;

/// Closed-form coordinate step for current value `gamma`.
pub fn ml_coordinate_step(q: f64, s: f64, gamma: f64) -> f64 {
    ((s - q) / (q * q)).max(-gamma)
}

/// Direct evaluation of `f(gamma)` through a Cholesky factorisation.
pub fn negative_log_likelihood(sigma_hat: &ComplexMatrix, a: &SensingMatrix, gamma: &[f64], sigma2: f64) -> Result<f64> {
    let am = a.matrix();
    let l = am.nrows();
    if gamma.len() != am.ncols() {
        return Err(Error::dims("negative_log_likelihood", am.ncols().to_string(), gamma.len().to_string()));
    }
    let mut scaled = am.clone();
    for (c, &g) in gamma.iter().enumerate() {
        scaled.re.column_mut(c).mapv_inplace(|v| v * g);
        scaled.im.column_mut(c).mapv_inplace(|v| v * g);
    }
    let sigma = scaled
        .matmul(&am.conj_transpose())?
        .add(&ComplexMatrix::identity(l).scaled(sigma2))?;
    let (logdet, inv) = hermitian_logdet_inverse(&sigma)?;
    let prod = inv.matmul(sigma_hat)?;
    let trace: f64 = (0..l).map(|i| prod.re[[i, i]]).sum();
    Ok(logdet + trace)
}

fn to_dense(m: &ComplexMatrix) -> Vec<Cx> {
    let (r, c) = m.shape();
    let mut out = Vec::with_capacity(r * c);
    for i in 0..r {
        for j in 0..c {
            out.push(Cx::new(m.re[[i, j]], m.im[[i, j]]));
        }
    }
    out
}

fn check_inputs(sigma_hat: &ComplexMatrix, a: &SensingMatrix, sigma2: f64) -> Result<()> {
    let l = a.measurements();
    if sigma_hat.shape() != (l, l) {
        return Err(Error::dims("cov_ml", format!("{l} x {l}"), format!("{:?}", sigma_hat.shape())));
    }
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(Error::InvalidArgument(format!("cov_ml needs sigma2 > 0, got {sigma2}")));
    }
    Ok(())
}

/// Coordinate descent from `gamma = 0`. `observer` sees `(update index, gamma)`
/// after every coordinate step that moved `gamma`.
pub fn cov_ml_observed(
    sigma_hat: &ComplexMatrix,
    a: &SensingMatrix,
    sigma2: f64,
    cfg: &SolverConfig,
    mut observer: impl FnMut(usize, &[f64]),
) -> Result<SolveReport<PowerEstimate>> {
    cfg.validate()?;
    check_inputs(sigma_hat, a, sigma2)?;
    let am = a.matrix();
    let (l, n) = am.shape();
    let cols: Vec<Vec<Cx>> = (0..n)
        .map(|c| (0..l).map(|k| Cx::new(am.re[[k, c]], am.im[[k, c]])).collect())
        .collect();
    let s_hat = to_dense(sigma_hat);

    let mut inv = vec![Cx::default(); l * l];
    for i in 0..l {
        inv[i * l + i] = Cx::new(1.0 / sigma2, 0.0);
    }
    let trace_hat: f64 = (0..l).map(|i| s_hat[i * l + i].re).sum();
    let initial = l as f64 * sigma2.ln() + trace_hat / sigma2;
    let mut nll = initial;
    let mut gamma = vec![0.0; n];
    let mut objective = Vec::new();
    if cfg.track_objective {
        objective.push(nll);
    }

    let mut v = vec![Cx::default(); l];
    let mut w = vec![Cx::default(); l];
    let mut updates = 0usize;
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < cfg.max_iterations {
        sweeps += 1;
        let before = nll;
        for (c, col) in cols.iter().enumerate() {
            // v = Sigma^{-1} a, q = a^H v, w = Sigma_hat v, s = v^H w
            for i in 0..l {
                let mut acc = Cx::default();
                for k in 0..l {
                    acc = acc + inv[i * l + k] * col[k];
                }
                v[i] = acc;
            }
            let q = (0..l).map(|i| (col[i].conj() * v[i]).re).sum::<f64>();
            for i in 0..l {
                let mut acc = Cx::default();
                for k in 0..l {
                    acc = acc + s_hat[i * l + k] * v[k];
                }
                w[i] = acc;
            }
            let s = (0..l).map(|i| (v[i].conj() * w[i]).re).sum::<f64>();
            if !(q > 0.0) {
                return Err(Error::Numerical(format!("cov_ml: q = {q} for device {c}")));
            }
            let d = ml_coordinate_step(q, s, gamma[c]);
            if d == 0.0 {
                continue;
            }
            let denom = 1.0 + d * q;
            gamma[c] = (gamma[c] + d).max(0.0);
            nll += denom.ln() - d * s / denom;
            let k = d / denom;
            for i in 0..l {
                let vi = v[i].scale(k);
                for j in 0..l {
                    inv[i * l + j] = inv[i * l + j] - vi * v[j].conj();
                }
            }
            updates += 1;
            if cfg.track_objective {
                objective.push(nll);
            }
            observer(updates, &gamma);
        }
        if !nll.is_finite() {
            return Err(Error::Numerical("cov_ml likelihood is not finite".into()));
        }
        let decrease = before - nll;
        if decrease <= cfg.tolerance * (initial - nll).abs() {
            converged = true;
            break;
        }
    }
    Ok(SolveReport {
        value: PowerEstimate::new(gamma)?,
        iterations: sweeps,
        converged,
        objective,
    })
}

pub fn cov_ml(sigma_hat: &ComplexMatrix, a: &SensingMatrix, sigma2: f64, cfg: &SolverConfig) -> Result<SolveReport<PowerEstimate>> {
    cov_ml_observed(sigma_hat, a, sigma2, cfg, |_, _| {})
}

/// Detector wrapper with known noise variance.
#[derive(Debug, Clone)]
pub struct MlDetector {
    pub a: SensingMatrix,
    pub sigma2: f64,
    pub cfg: SolverConfig,
}

impl MlDetector {
    /// Defaults to 15 sweeps and a relative tolerance of `1e-6`.
    pub fn new(a: &SensingMatrix, sigma2: f64) -> Self {
        Self {
            a: a.clone(),
            sigma2,
            cfg: SolverConfig {
                max_iterations: 15,
                tolerance: 1e-6,
                ..SolverConfig::default()
            },
        }
    }

    pub fn scores(&self, y: &ComplexMatrix) -> Result<(SoftScores, bool)> {
        let rep = cov_ml(&sample_covariance(y)?, &self.a, self.sigma2, &self.cfg)?;
        Ok((rep.value.to_scores(), rep.converged))
    }
}

impl super::Detector for MlDetector {
    fn name(&self) -> &str {
        "ml"
    }

    fn detect(&self, y: &ComplexMatrix) -> Result<super::Detection> {
        let (scores, converged) = self.scores(y)?;
        Ok(super::Detection { scores, converged })
    }
}
