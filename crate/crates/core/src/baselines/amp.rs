//! MMV approximate message passing with a row-wise MMSE denoiser for the
//! Bernoulli-complex-Gaussian prior `x_n = alpha_n h_n`, `h_n ~ CN(0, g I_M)`.
//!
//! The pilot matrix is rescaled to unit average column norm, so the effective
//! prior variance becomes `g = channel_variance * c^2` with
//! `c = ||A||_F / sqrt(N)`. The state variance `tau^2` is tracked empirically
//! from the residual, and the Onsager term uses the trace-averaged Jacobian of
//! the denoiser.

use serde::{Deserialize, Serialize};

use super::{check_block, SolveReport, SolverConfig};
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::signal::SensingMatrix;
use crate::thresholding::SoftScores;

/// Damping used when the undamped run diverges.
pub const RETRY_DAMPING: f64 = 0.3;
const DIVERGENCE_FACTOR: f64 = 10.0;
const DIVERGENCE_WINDOW: usize = 5;
const TAU_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmpPrior {
    /// Activity probability `p` in `(0, 1)`.
    pub activity: f64,
    /// Per-entry variance of an active channel row.
    pub channel_variance: f64,
}

impl AmpPrior {
    pub fn validate(&self) -> Result<()> {
        if !(self.activity > 0.0 && self.activity < 1.0) {
            return Err(Error::Config(format!("AMP prior p = {} must lie in (0, 1)", self.activity)));
        }
        if !(self.channel_variance > 0.0) {
            return Err(Error::Config("AMP channel variance must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Normalised {
    a: ComplexMatrix,
    ah: ComplexMatrix,
    scale: f64,
}

impl Normalised {
    fn new(a: &SensingMatrix) -> Result<Self> {
        let m = a.matrix();
        let scale = m.frobenius_norm() / (m.ncols() as f64).sqrt();
        if !(scale > 0.0) {
            return Err(Error::InvalidArgument("AMP needs a nonzero pilot matrix".into()));
        }
        let a = m.scaled(1.0 / scale);
        Ok(Self {
            ah: a.conj_transpose(),
            a,
            scale,
        })
    }
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

struct Run {
    posterior: Vec<f64>,
    iterations: usize,
    diverged: bool,
    residuals: Vec<f64>,
}

fn run(norm: &Normalised, y: &ComplexMatrix, prior: &AmpPrior, iterations: usize, damping: f64) -> Result<Run> {
    let (l, n) = norm.a.shape();
    let m = y.ncols();
    let mf = m as f64;
    let g = prior.channel_variance * norm.scale * norm.scale;
    let log_prior_odds = (prior.activity / (1.0 - prior.activity)).ln();
    let ratio = n as f64 / l as f64;

    let mut x = ComplexMatrix::zeros(n, m);
    let mut r = y.clone();
    let mut posterior = vec![prior.activity; n];
    let mut residuals = vec![r.frobenius_norm()];
    let mut diverged = false;
    let mut done = 0;

    for t in 1..=iterations {
        done = t;
        let tau2 = (r.frobenius_norm().powi(2) / (l * m) as f64).max(TAU_FLOOR * g);
        let u = norm.ah.matmul(&r)?.add(&x)?;
        let gain = g / (g + tau2);
        let contrast = 1.0 / tau2 - 1.0 / (g + tau2);
        let energies = u.row_norms_sq();

        let mut next = ComplexMatrix::zeros(n, m);
        let mut divergence = 0.0;
        for row in 0..n {
            let e = energies[row];
            let llr = mf * (tau2 / (g + tau2)).ln() + e * contrast;
            let pi = logistic(llr + log_prior_odds);
            posterior[row] = pi;
            let phi = pi * gain;
            let dphi = gain * pi * (1.0 - pi) * contrast;
            divergence += phi + dphi * e / mf;
            for col in 0..m {
                let (ur, ui) = u.get(row, col);
                let (xr, xi) = x.get(row, col);
                next.set(
                    row,
                    col,
                    (
                        (1.0 - damping) * phi * ur + damping * xr,
                        (1.0 - damping) * phi * ui + damping * xi,
                    ),
                );
            }
        }
        let onsager = ratio * divergence / n as f64;
        let resid = y.sub(&norm.a.matmul(&next)?)?.add(&r.scaled(onsager))?;
        x = next;
        r = resid;
        let rn = r.frobenius_norm();
        residuals.push(rn);
        if !rn.is_finite() || posterior.iter().any(|p| !p.is_finite()) {
            diverged = true;
            break;
        }
        if t >= DIVERGENCE_WINDOW {
            let past = residuals[t - DIVERGENCE_WINDOW];
            if rn > DIVERGENCE_FACTOR * past && past > 0.0 {
                diverged = true;
                break;
            }
        }
    }
    Ok(Run {
        posterior,
        iterations: done,
        diverged,
        residuals,
    })
}

/// Runs `cfg.max_iterations` AMP iterations and returns the posterior activity
/// probability of every row. A divergent undamped run is retried once with
/// [`RETRY_DAMPING`]; `converged` is false if the final run still diverged.
pub fn mmv_amp(y: &ComplexMatrix, a: &SensingMatrix, prior: &AmpPrior, cfg: &SolverConfig) -> Result<SolveReport<SoftScores>> {
    AmpDetector::new(a, *prior, *cfg)?.solve(y)
}

#[derive(Debug, Clone)]
pub struct AmpDetector {
    norm: Normalised,
    pub prior: AmpPrior,
    pub cfg: SolverConfig,
}

impl AmpDetector {
    pub fn new(a: &SensingMatrix, prior: AmpPrior, cfg: SolverConfig) -> Result<Self> {
        prior.validate()?;
        cfg.validate()?;
        Ok(Self {
            norm: Normalised::new(a)?,
            prior,
            cfg,
        })
    }

    pub fn solve(&self, y: &ComplexMatrix) -> Result<SolveReport<SoftScores>> {
        check_block(&self.norm.a, y, "mmv_amp")?;
        let mut out = run(&self.norm, y, &self.prior, self.cfg.max_iterations, self.cfg.damping)?;
        if out.diverged && self.cfg.damping == 0.0 {
            log::debug!("AMP diverged after {} iterations, retrying with damping", out.iterations);
            out = run(&self.norm, y, &self.prior, self.cfg.max_iterations, RETRY_DAMPING)?;
        }
        let posterior = if out.posterior.iter().all(|p| p.is_finite()) {
            out.posterior
        } else {
            vec![0.0; self.norm.a.ncols()]
        };
        Ok(SolveReport {
            value: SoftScores::new(posterior),
            iterations: out.iterations,
            converged: !out.diverged,
            objective: if self.cfg.track_objective { out.residuals } else { Vec::new() },
        })
    }
}

impl super::Detector for AmpDetector {
    fn name(&self) -> &str {
        "amp"
    }

    fn detect(&self, y: &ComplexMatrix) -> Result<super::Detection> {
        let rep = self.solve(y)?;
        Ok(super::Detection {
            scores: rep.value,
            converged: rep.converged,
        })
    }
}
