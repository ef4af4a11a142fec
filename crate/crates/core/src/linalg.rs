//! Complex matrices stored as a pair of real matrices.
//!
//! Every complex product in the crate is carried out through the four real
//! products `Re(A)Re(B) - Im(A)Im(B)` and `Im(A)Re(B) + Re(A)Im(B)`, the same
//! decomposition a real-valued network layer uses.

use ndarray::{Array2, ArrayView1, Axis, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A complex matrix held as equal-shape real and imaginary parts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplexMatrix {
    pub re: Array2<f64>,
    pub im: Array2<f64>,
}

impl ComplexMatrix {
    pub fn new(re: Array2<f64>, im: Array2<f64>) -> Result<Self> {
        if re.dim() != im.dim() {
            return Err(Error::dims(
                "ComplexMatrix::new",
                format!("{:?}", re.dim()),
                format!("{:?}", im.dim()),
            ));
        }
        Ok(Self { re, im })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            re: Array2::zeros((rows, cols)),
            im: Array2::zeros((rows, cols)),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            re: Array2::eye(n),
            im: Array2::zeros((n, n)),
        }
    }

    /// Real matrix embedded with zero imaginary part.
    pub fn from_real(re: Array2<f64>) -> Self {
        let im = Array2::zeros(re.dim());
        Self { re, im }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> (f64, f64)) -> Self {
        let mut out = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                let (a, b) = f(r, c);
                out.re[[r, c]] = a;
                out.im[[r, c]] = b;
            }
        }
        out
    }

    pub fn nrows(&self) -> usize {
        self.re.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.re.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.re.dim()
    }

    pub fn get(&self, r: usize, c: usize) -> (f64, f64) {
        (self.re[[r, c]], self.im[[r, c]])
    }

    pub fn set(&mut self, r: usize, c: usize, value: (f64, f64)) {
        self.re[[r, c]] = value.0;
        self.im[[r, c]] = value.1;
    }

    /// `self * rhs` through four real matrix products.
    pub fn matmul(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        if self.ncols() != rhs.nrows() {
            return Err(Error::dims(
                "ComplexMatrix::matmul",
                format!("rhs with {} rows", self.ncols()),
                format!("{} rows", rhs.nrows()),
            ));
        }
        let re = self.re.dot(&rhs.re) - self.im.dot(&rhs.im);
        let im = self.im.dot(&rhs.re) + self.re.dot(&rhs.im);
        Ok(ComplexMatrix { re, im })
    }

    /// `self^H`.
    pub fn conj_transpose(&self) -> ComplexMatrix {
        ComplexMatrix {
            re: self.re.t().to_owned(),
            im: self.im.t().mapv(|v| -v),
        }
    }

    /// Elementwise complex conjugate.
    pub fn conj(&self) -> ComplexMatrix {
        ComplexMatrix {
            re: self.re.clone(),
            im: self.im.mapv(|v| -v),
        }
    }

    pub fn add(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.check_same_shape(rhs, "ComplexMatrix::add")?;
        Ok(ComplexMatrix {
            re: &self.re + &rhs.re,
            im: &self.im + &rhs.im,
        })
    }

    pub fn sub(&self, rhs: &ComplexMatrix) -> Result<ComplexMatrix> {
        self.check_same_shape(rhs, "ComplexMatrix::sub")?;
        Ok(ComplexMatrix {
            re: &self.re - &rhs.re,
            im: &self.im - &rhs.im,
        })
    }

    pub fn scaled(&self, factor: f64) -> ComplexMatrix {
        ComplexMatrix {
            re: &self.re * factor,
            im: &self.im * factor,
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        let sq: f64 = self.re.iter().chain(self.im.iter()).map(|v| v * v).sum();
        sq.sqrt()
    }

    /// Euclidean norm of every column.
    pub fn column_norms(&self) -> Vec<f64> {
        Zip::from(self.re.columns())
            .and(self.im.columns())
            .map_collect(|re, im| (re.dot(&re) + im.dot(&im)).sqrt())
            .to_vec()
    }

    /// Squared Euclidean norm of every row.
    pub fn row_norms_sq(&self) -> Vec<f64> {
        self.re
            .axis_iter(Axis(0))
            .zip(self.im.axis_iter(Axis(0)))
            .map(|(re, im)| re.dot(&re) + im.dot(&im))
            .collect()
    }

    pub fn column(&self, c: usize) -> (ArrayView1<'_, f64>, ArrayView1<'_, f64>) {
        (self.re.column(c), self.im.column(c))
    }

    pub fn is_zero(&self) -> bool {
        self.re.iter().chain(self.im.iter()).all(|&v| v == 0.0)
    }

    /// Largest absolute entrywise difference of real or imaginary parts.
    pub fn max_abs_diff(&self, rhs: &ComplexMatrix) -> f64 {
        let re = Zip::from(&self.re)
            .and(&rhs.re)
            .fold(0.0f64, |acc, a, b| acc.max((a - b).abs()));
        let im = Zip::from(&self.im)
            .and(&rhs.im)
            .fold(0.0f64, |acc, a, b| acc.max((a - b).abs()));
        re.max(im)
    }

    fn check_same_shape(&self, rhs: &ComplexMatrix, context: &'static str) -> Result<()> {
        if self.shape() != rhs.shape() {
            return Err(Error::dims(
                context,
                format!("{:?}", self.shape()),
                format!("{:?}", rhs.shape()),
            ));
        }
        Ok(())
    }
}

/// Scalar complex number used inside small dense kernels.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub(crate) struct Cx {
    pub re: f64,
    pub im: f64,
}

impl Cx {
    pub fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }

    pub fn conj(self) -> Self {
        Self::new(self.re, -self.im)
    }

    pub fn norm_sq(self) -> f64 {
        self.re * self.re + self.im * self.im
    }

    pub fn scale(self, s: f64) -> Self {
        Self::new(self.re * s, self.im * s)
    }
}

impl std::ops::Add for Cx {
    type Output = Cx;
    fn add(self, rhs: Cx) -> Cx {
        Cx::new(self.re + rhs.re, self.im + rhs.im)
    }
}

impl std::ops::Sub for Cx {
    type Output = Cx;
    fn sub(self, rhs: Cx) -> Cx {
        Cx::new(self.re - rhs.re, self.im - rhs.im)
    }
}

impl std::ops::Mul for Cx {
    type Output = Cx;
    fn mul(self, rhs: Cx) -> Cx {
        Cx::new(
            self.re * rhs.re - self.im * rhs.im,
            self.re * rhs.im + self.im * rhs.re,
        )
    }
}

/// Cholesky factorisation of a Hermitian positive-definite matrix.
///
/// Returns `(log det S, S^{-1})`.
pub fn hermitian_logdet_inverse(s: &ComplexMatrix) -> Result<(f64, ComplexMatrix)> {
    let n = s.nrows();
    if s.ncols() != n {
        return Err(Error::dims(
            "hermitian_logdet_inverse",
            "square matrix",
            format!("{:?}", s.shape()),
        ));
    }
    // lower-triangular factor, row-major
    let mut chol = vec![Cx::default(); n * n];
    for j in 0..n {
        let mut d = s.re[[j, j]];
        for k in 0..j {
            d -= chol[j * n + k].norm_sq();
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::Numerical(format!(
                "matrix is not positive definite (pivot {j} = {d})"
            )));
        }
        let djj = d.sqrt();
        chol[j * n + j] = Cx::new(djj, 0.0);
        for i in (j + 1)..n {
            let mut v = Cx::new(s.re[[i, j]], s.im[[i, j]]);
            for k in 0..j {
                v = v - chol[i * n + k] * chol[j * n + k].conj();
            }
            chol[i * n + j] = v.scale(1.0 / djj);
        }
    }
    let logdet = 2.0 * (0..n).map(|i| chol[i * n + i].re.ln()).sum::<f64>();

    // inverse of the lower factor by forward substitution
    let mut linv = vec![Cx::default(); n * n];
    for i in 0..n {
        linv[i * n + i] = Cx::new(1.0 / chol[i * n + i].re, 0.0);
        for j in 0..i {
            let mut acc = Cx::default();
            for k in j..i {
                acc = acc + chol[i * n + k] * linv[k * n + j];
            }
            linv[i * n + j] = acc.scale(-1.0 / chol[i * n + i].re);
        }
    }
    // S^{-1} = L^{-H} L^{-1}
    let mut inv = ComplexMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let mut acc = Cx::default();
            for k in i.max(j)..n {
                acc = acc + linv[k * n + i].conj() * linv[k * n + j];
            }
            inv.set(i, j, (acc.re, acc.im));
        }
    }
    Ok((logdet, inv))
}

/// Largest eigenvalue of a symmetric positive semi-definite matrix by power iteration.
pub(crate) fn spectral_radius_psd(gram: &Array2<f64>, iterations: usize) -> f64 {
    let n = gram.nrows();
    if n == 0 {
        return 0.0;
    }
    let mut v = ndarray::Array1::from_elem(n, 1.0 / (n as f64).sqrt());
    let mut lambda = 0.0;
    for _ in 0..iterations {
        let w = gram.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            return 0.0;
        }
        let next = norm;
        v = w / norm;
        if (next - lambda).abs() <= 1e-13 * next {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda
}

/// Spectral norm squared of a complex matrix, `||A||_2^2`.
pub fn spectral_norm_sq(a: &ComplexMatrix) -> f64 {
    // A A^H and A^H A share their nonzero spectrum; iterate on the smaller one.
    // Its real embedding [[Re, -Im], [Im, Re]] repeats every eigenvalue twice.
    let gram = if a.nrows() <= a.ncols() {
        a.matmul(&a.conj_transpose())
    } else {
        a.conj_transpose().matmul(a)
    }
    .expect("square by construction");
    let n = gram.nrows();
    let mut embed = Array2::zeros((2 * n, 2 * n));
    for i in 0..n {
        for j in 0..n {
            embed[[i, j]] = gram.re[[i, j]];
            embed[[i + n, j + n]] = gram.re[[i, j]];
            embed[[i, j + n]] = -gram.im[[i, j]];
            embed[[i + n, j]] = gram.im[[i, j]];
        }
    }
    spectral_radius_psd(&embed, 10_000)
}
