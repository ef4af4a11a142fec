//! Decoder input features computed from the received block `Y`.

use ndarray::{s, Array1, Array2, ArrayView2, ArrayViewMut1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;

/// Which statistic of `Y` the decoder consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    /// `vec(Re(YY^H)/M)` followed by `vec(Im(YY^H)/M)`, width `2L^2`.
    Covariance,
    /// `vec(Re(Y))` followed by `vec(Im(Y))`, width `2LM`.
    Raw,
}

impl FeatureKind {
    pub fn width(self, measurements: usize, antennas: usize) -> usize {
        match self {
            FeatureKind::Covariance => 2 * measurements * measurements,
            FeatureKind::Raw => 2 * measurements * antennas,
        }
    }
}

/// Covariance features of one received block (column-major `vec`).
#[derive(Debug, Clone, PartialEq)]
pub struct CovFeatures {
    values: Array1<f64>,
    measurements: usize,
}

impl CovFeatures {
    pub fn values(&self) -> &Array1<f64> {
        &self.values
    }

    pub fn measurements(&self) -> usize {
        self.measurements
    }

    /// `Re(YY^H)/M` as an `L x L` matrix.
    pub fn re_block(&self) -> Array2<f64> {
        self.block(0)
    }

    /// `Im(YY^H)/M` as an `L x L` matrix.
    pub fn im_block(&self) -> Array2<f64> {
        self.block(1)
    }

    /// The sample covariance `YY^H / M`.
    pub fn covariance(&self) -> ComplexMatrix {
        ComplexMatrix {
            re: self.re_block(),
            im: self.im_block(),
        }
    }

    fn block(&self, which: usize) -> Array2<f64> {
        let l = self.measurements;
        let off = which * l * l;
        Array2::from_shape_fn((l, l), |(k, j)| self.values[off + k + j * l])
    }
}

/// `Re(YY^H)/M` and `Im(YY^H)/M` from the real and imaginary parts of `Y`.
pub fn covariance_features(y: &ComplexMatrix) -> Result<CovFeatures> {
    let (l, m) = y.shape();
    if m == 0 {
        return Err(Error::InvalidArgument("covariance needs at least one column".into()));
    }
    let mut values = Array1::zeros(2 * l * l);
    write_covariance(y.re.view(), y.im.view(), values.view_mut());
    Ok(CovFeatures {
        values,
        measurements: l,
    })
}

/// Sample covariance `YY^H / M` as a complex matrix.
pub fn sample_covariance(y: &ComplexMatrix) -> Result<ComplexMatrix> {
    Ok(covariance_features(y)?.covariance())
}

/// Writes covariance features of `(y_re, y_im)` into `out` (length `2L^2`).
pub(crate) fn write_covariance(
    y_re: ArrayView2<'_, f64>,
    y_im: ArrayView2<'_, f64>,
    mut out: ArrayViewMut1<'_, f64>,
) {
    let (l, m) = y_re.dim();
    let inv_m = 1.0 / m as f64;
    // Re(YY^H) = Re(Y)Re(Y)^T + Im(Y)Im(Y)^T
    let re = (y_re.dot(&y_re.t()) + y_im.dot(&y_im.t())) * inv_m;
    // Im(YY^H) = Im(Y)Re(Y)^T - Re(Y)Im(Y)^T
    let im = (y_im.dot(&y_re.t()) - y_re.dot(&y_im.t())) * inv_m;
    for j in 0..l {
        for k in 0..l {
            out[k + j * l] = re[[k, j]];
            out[l * l + k + j * l] = im[[k, j]];
        }
    }
}

/// Writes raw features `vec(Re Y), vec(Im Y)` into `out` (length `2LM`).
pub(crate) fn write_raw(
    y_re: ArrayView2<'_, f64>,
    y_im: ArrayView2<'_, f64>,
    mut out: ArrayViewMut1<'_, f64>,
) {
    let (l, m) = y_re.dim();
    for c in 0..m {
        for r in 0..l {
            out[r + c * l] = y_re[[r, c]];
            out[l * m + r + c * l] = y_im[[r, c]];
        }
    }
}

/// Gradient of the covariance features with respect to `Y`.
///
/// `grad` holds `dLoss/df` for one sample; returns `(dLoss/dRe(Y), dLoss/dIm(Y))`.
pub(crate) fn covariance_backward(
    y_re: ArrayView2<'_, f64>,
    y_im: ArrayView2<'_, f64>,
    grad: ndarray::ArrayView1<'_, f64>,
) -> (Array2<f64>, Array2<f64>) {
    let (l, m) = y_re.dim();
    let inv_m = 1.0 / m as f64;
    let g_re = Array2::from_shape_fn((l, l), |(k, j)| grad[k + j * l]);
    let g_im = Array2::from_shape_fn((l, l), |(k, j)| grad[l * l + k + j * l]);
    let sym = &g_re + &g_re.t();
    let skew = &g_im.t() - &g_im;
    // d/dRe(Y) = [(G_r + G_r^T) Re(Y) + (G_i^T - G_i) Im(Y)] / M
    // d/dIm(Y) = [(G_r + G_r^T) Im(Y) - (G_i^T - G_i) Re(Y)] / M
    let d_re = (sym.dot(&y_re) + skew.dot(&y_im)) * inv_m;
    let d_im = (sym.dot(&y_im) - skew.dot(&y_re)) * inv_m;
    (d_re, d_im)
}

/// Gradient of the raw features with respect to `Y`.
pub(crate) fn raw_backward(
    l: usize,
    m: usize,
    grad: ndarray::ArrayView1<'_, f64>,
) -> (Array2<f64>, Array2<f64>) {
    let d_re = Array2::from_shape_fn((l, m), |(r, c)| grad[r + c * l]);
    let d_im = Array2::from_shape_fn((l, m), |(r, c)| grad[l * m + r + c * l]);
    (d_re, d_im)
}

/// Features for a stacked batch: `y_re`, `y_im` are `L x (B*M)`.
pub(crate) fn batch_features(
    kind: FeatureKind,
    y_re: &Array2<f64>,
    y_im: &Array2<f64>,
    antennas: usize,
) -> Array2<f64> {
    let l = y_re.nrows();
    let batch = y_re.ncols() / antennas;
    let width = kind.width(l, antennas);
    let mut out = Array2::zeros((batch, width));
    for b in 0..batch {
        let cols = s![.., b * antennas..(b + 1) * antennas];
        let (re, im) = (y_re.slice(cols), y_im.slice(cols));
        match kind {
            FeatureKind::Covariance => write_covariance(re, im, out.row_mut(b)),
            FeatureKind::Raw => write_raw(re, im, out.row_mut(b)),
        }
    }
    out
}
