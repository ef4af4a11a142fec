//! Trainable linear encoder: the real and imaginary parts of the pilot matrix.

use ndarray::Array2;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::rng::gaussian;
use crate::signal::{linear_measurement, SensingMatrix};

/// Columns whose norm falls below this are re-drawn before rescaling.
pub const DEGENERATE_COLUMN_NORM: f64 = 1e-12;

/// Largest relative column-norm error accepted by [`extract_sensing_matrix`].
pub const EXTRACT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderWeights {
    pub re: Array2<f64>,
    pub im: Array2<f64>,
}

impl EncoderWeights {
    pub fn new(re: Array2<f64>, im: Array2<f64>) -> Result<Self> {
        if re.dim() != im.dim() {
            return Err(Error::dims(
                "EncoderWeights::new",
                format!("{:?}", re.dim()),
                format!("{:?}", im.dim()),
            ));
        }
        Ok(Self { re, im })
    }

    pub fn from_matrix(a: &ComplexMatrix) -> Self {
        Self {
            re: a.re.clone(),
            im: a.im.clone(),
        }
    }

    /// Standard complex Gaussian entries, then column projection.
    pub fn random<R: Rng + ?Sized>(measurements: usize, devices: usize, rng: &mut R) -> Self {
        let a = crate::signal::sample_complex_gaussian(measurements, devices, 1.0, rng);
        let mut w = Self { re: a.re, im: a.im };
        w.project_columns(rng);
        w
    }

    pub fn measurements(&self) -> usize {
        self.re.nrows()
    }

    pub fn devices(&self) -> usize {
        self.re.ncols()
    }

    pub fn as_matrix(&self) -> ComplexMatrix {
        ComplexMatrix {
            re: self.re.clone(),
            im: self.im.clone(),
        }
    }

    /// Rescales every complex column to norm `sqrt(L)`.
    ///
    /// A column with norm below [`DEGENERATE_COLUMN_NORM`] is replaced by a fresh
    /// standard complex Gaussian draw first.
    pub fn project_columns<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let l = self.measurements();
        let target = (l as f64).sqrt();
        for n in 0..self.devices() {
            let mut norm = column_norm(&self.re, &self.im, n);
            while norm < DEGENERATE_COLUMN_NORM {
                for k in 0..l {
                    self.re[[k, n]] = gaussian(rng, 0.5);
                    self.im[[k, n]] = gaussian(rng, 0.5);
                }
                norm = column_norm(&self.re, &self.im, n);
            }
            let scale = target / norm;
            self.re.column_mut(n).mapv_inplace(|v| v * scale);
            self.im.column_mut(n).mapv_inplace(|v| v * scale);
        }
    }

    /// Largest relative deviation of a column norm from `sqrt(L)`.
    pub fn column_norm_violation(&self) -> f64 {
        let target = (self.measurements() as f64).sqrt();
        (0..self.devices())
            .map(|n| (column_norm(&self.re, &self.im, n) - target).abs() / target)
            .fold(0.0, f64::max)
    }
}

fn column_norm(re: &Array2<f64>, im: &Array2<f64>, n: usize) -> f64 {
    let (r, i) = (re.column(n), im.column(n));
    (r.dot(&r) + i.dot(&i)).sqrt()
}

/// `Y = A X + Z` via the two real identities for `Re(Y)` and `Im(Y)`.
pub fn encoder_forward(
    x: &ComplexMatrix,
    w: &EncoderWeights,
    noise: &ComplexMatrix,
) -> Result<ComplexMatrix> {
    let a = ComplexMatrix {
        re: w.re.clone(),
        im: w.im.clone(),
    };
    linear_measurement(&a, x, noise)
}

/// Copies the encoder weights out as a pilot matrix, checking the norm constraint.
pub fn extract_sensing_matrix(w: &EncoderWeights) -> Result<SensingMatrix> {
    let target = (w.measurements() as f64).sqrt();
    for n in 0..w.devices() {
        let norm = column_norm(&w.re, &w.im, n);
        if (norm - target).abs() > EXTRACT_TOLERANCE * target {
            return Err(Error::ColumnNorm {
                column: n,
                norm,
                expected: target,
            });
        }
    }
    Ok(SensingMatrix::new(w.as_matrix()))
}
