//! Decomposition of the sample covariance into a linear term in the row powers
//! plus cross-signal and noise perturbations, and its large-`M` behaviour.
//!
//! ```text
//! vec(YY^H / M) = (A* ⊙ A) r + vec(E1) + vec(E2)
//! r(n)     = ||X[n, :]||^2 / M
//! E1(k, l) = (1/M) sum_{i != j} A(k, i) A*(l, j) sum_m X(i, m) X*(j, m)
//! E2       = (A X Z^H + Z X^H A^H + Z Z^H) / M
//! ```
//!
//! Every term is computed on its own code path, so the identity is a check
//! rather than a tautology.

use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, Cx};
use crate::signal::{build_signal, linear_measurement, sample_channels, sample_noise, ActivityVector, SensingMatrix};

#[derive(Debug, Clone)]
pub struct Eq4Decomposition {
    /// `vec(YY^H / M)`, length `L^2`, column-major.
    pub lhs: ComplexMatrix,
    /// `(A* ⊙ A) r`, length `L^2`.
    pub linear_term: ComplexMatrix,
    pub e1: ComplexMatrix,
    pub e2: ComplexMatrix,
    pub powers: Array1<f64>,
}

impl Eq4Decomposition {
    /// `max |lhs - (linear + vec E1 + vec E2)| / max |lhs|`.
    pub fn relative_residual(&self) -> f64 {
        let rhs = self
            .linear_term
            .add(&vec_column(&self.e1))
            .and_then(|s| s.add(&vec_column(&self.e2)))
            .expect("consistent shapes");
        let scale = self
            .lhs
            .re
            .iter()
            .chain(self.lhs.im.iter())
            .fold(0.0f64, |a, v| a.max(v.abs()));
        let diff = self.lhs.max_abs_diff(&rhs);
        if scale == 0.0 {
            diff
        } else {
            diff / scale
        }
    }
}

/// Column-major `vec` as an `L^2 x 1` complex matrix.
pub fn vec_column(a: &ComplexMatrix) -> ComplexMatrix {
    let (r, c) = a.shape();
    ComplexMatrix::from_fn(r * c, 1, |i, _| a.get(i % r, i / r))
}

/// Khatri-Rao product `A* ⊙ A`: column `n` is `conj(a_n) ⊗ a_n`, size `L^2 x N`.
pub fn khatri_rao_conj(a: &ComplexMatrix) -> ComplexMatrix {
    let (l, n) = a.shape();
    ComplexMatrix::from_fn(l * l, n, |row, col| {
        // kron index: row = j * L + k  ->  conj(a(j)) * a(k)
        let (j, k) = (row / l, row % l);
        let aj = Cx::new(a.re[[j, col]], a.im[[j, col]]).conj();
        let ak = Cx::new(a.re[[k, col]], a.im[[k, col]]);
        let p = aj * ak;
        (p.re, p.im)
    })
}

/// Row powers `r(n) = ||X[n,:]||^2 / M`.
pub fn row_powers(x: &ComplexMatrix) -> Array1<f64> {
    let m = x.ncols() as f64;
    Array1::from_iter(x.row_norms_sq().into_iter().map(|v| v / m))
}

pub fn eq4_decompose(a: &SensingMatrix, x: &ComplexMatrix, z: &ComplexMatrix) -> Result<Eq4Decomposition> {
    let a = a.matrix();
    let (l, n) = a.shape();
    let m = x.ncols();
    if x.nrows() != n || z.shape() != (l, m) || m == 0 {
        return Err(Error::dims(
            "eq4_decompose",
            format!("X: {n} x M, Z: {l} x M"),
            format!("X: {:?}, Z: {:?}", x.shape(), z.shape()),
        ));
    }
    let inv_m = 1.0 / m as f64;

    // lhs from Y directly, entry by entry
    let y = linear_measurement(a, x, z)?;
    let mut lhs = ComplexMatrix::zeros(l * l, 1);
    for col in 0..l {
        for row in 0..l {
            let mut acc = Cx::default();
            for t in 0..m {
                acc = acc + Cx::new(y.re[[row, t]], y.im[[row, t]]) * Cx::new(y.re[[col, t]], y.im[[col, t]]).conj();
            }
            let v = acc.scale(inv_m);
            lhs.set(row + col * l, 0, (v.re, v.im));
        }
    }

    let powers = row_powers(x);
    let kr = khatri_rao_conj(a);
    let r = ComplexMatrix::from_real(Array2::from_shape_fn((n, 1), |(i, _)| powers[i]));
    let linear_term = kr.matmul(&r)?;

    // cross-correlations of distinct rows of X
    let mut xcorr = vec![Cx::default(); n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let mut acc = Cx::default();
            for t in 0..m {
                acc = acc + Cx::new(x.re[[i, t]], x.im[[i, t]]) * Cx::new(x.re[[j, t]], x.im[[j, t]]).conj();
            }
            xcorr[i * n + j] = acc;
        }
    }
    let mut e1 = ComplexMatrix::zeros(l, l);
    for k in 0..l {
        for q in 0..l {
            let mut acc = Cx::default();
            for i in 0..n {
                let aki = Cx::new(a.re[[k, i]], a.im[[k, i]]);
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let aqj = Cx::new(a.re[[q, j]], a.im[[q, j]]).conj();
                    acc = acc + aki * aqj * xcorr[i * n + j];
                }
            }
            let v = acc.scale(inv_m);
            e1.set(k, q, (v.re, v.im));
        }
    }

    let ax = a.matmul(x)?;
    let zh = z.conj_transpose();
    let cross = ax.matmul(&zh)?;
    let e2 = cross
        .add(&cross.conj_transpose())?
        .add(&z.matmul(&zh)?)?
        .scaled(inv_m);

    Ok(Eq4Decomposition {
        lhs,
        linear_term,
        e1,
        e2,
        powers,
    })
}

/// Result of comparing the sample covariance with its large-`M` limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceReport {
    pub antennas: usize,
    /// `||Sigma_hat - (A diag(r) A^H + sigma2 I)||_F / ||A diag(r) A^H + sigma2 I||_F`.
    pub relative_residual: f64,
}

/// Draws `X` (with the given activity) and `Z`, then measures how far
/// `YY^H / M` is from `A diag(r) A^H + sigma2 I`, where `r` holds the exact
/// realised row powers.
pub fn asymptotic_covariance_check<R: Rng + ?Sized>(
    a: &SensingMatrix,
    activity: &ActivityVector,
    sigma2: f64,
    antennas: usize,
    rng: &mut R,
) -> Result<CovarianceReport> {
    let (l, n) = (a.measurements(), a.devices());
    let h = sample_channels(n, antennas, rng)?;
    let x = build_signal(activity, &h)?.x;
    let z = sample_noise(l, antennas, sigma2, rng)?;
    let y = linear_measurement(a.matrix(), &x, &z)?;
    let sigma_hat = crate::autoencoder::sample_covariance(&y)?;

    let powers = row_powers(&x);
    let am = a.matrix();
    let mut scaled = am.clone();
    for (col, &p) in powers.iter().enumerate() {
        scaled.re.column_mut(col).mapv_inplace(|v| v * p);
        scaled.im.column_mut(col).mapv_inplace(|v| v * p);
    }
    let limit = scaled
        .matmul(&am.conj_transpose())?
        .add(&ComplexMatrix::identity(l).scaled(sigma2))?;
    let diff = sigma_hat.sub(&limit)?.frobenius_norm();
    let norm = limit.frobenius_norm();
    let relative_residual = if norm == 0.0 { diff } else { diff / norm };
    Ok(CovarianceReport {
        antennas,
        relative_residual,
    })
}
