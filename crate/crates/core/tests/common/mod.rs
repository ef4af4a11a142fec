//! Reference implementations shared by the integration tests. Everything here
//! is written with plain loops over `num_complex::Complex64` so it shares no
//! code with the library.
#![allow(dead_code)]

use jssr_core::autoencoder::{DecoderWeights, Model};
use jssr_core::signal::ActivityVector;
use jssr_core::thresholding::SoftScores;
use jssr_core::ComplexMatrix;
use num_complex::Complex64;

pub type Dense = Vec<Vec<Complex64>>;

pub fn to_dense(m: &ComplexMatrix) -> Dense {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| Complex64::new(m.re[[r, c]], m.im[[r, c]])).collect())
        .collect()
}

pub fn from_dense(d: &Dense) -> ComplexMatrix {
    ComplexMatrix::from_fn(d.len(), d[0].len(), |r, c| (d[r][c].re, d[r][c].im))
}

pub fn matmul(a: &Dense, b: &Dense) -> Dense {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    assert_eq!(a[0].len(), k);
    let mut out = vec![vec![Complex64::new(0.0, 0.0); m]; n];
    for i in 0..n {
        for j in 0..m {
            for t in 0..k {
                out[i][j] += a[i][t] * b[t][j];
            }
        }
    }
    out
}

pub fn adjoint(a: &Dense) -> Dense {
    (0..a[0].len())
        .map(|c| (0..a.len()).map(|r| a[r][c].conj()).collect())
        .collect()
}

pub fn add(a: &Dense, b: &Dense) -> Dense {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(u, v)| u + v).collect())
        .collect()
}

pub fn scale(a: &Dense, s: f64) -> Dense {
    a.iter().map(|row| row.iter().map(|v| v * s).collect()).collect()
}

pub fn max_abs(a: &Dense) -> f64 {
    a.iter().flatten().fold(0.0, |m, v| m.max(v.re.abs()).max(v.im.abs()))
}

/// Largest entrywise deviation of the parts, over the largest entry of `expected`.
pub fn rel_diff(got: &ComplexMatrix, expected: &Dense) -> f64 {
    let mut diff: f64 = 0.0;
    for (r, row) in expected.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            diff = diff.max((got.re[[r, c]] - v.re).abs()).max((got.im[[r, c]] - v.im).abs());
        }
    }
    diff / max_abs(expected).max(f64::MIN_POSITIVE)
}

/// `Y Y^H / M`.
pub fn covariance(y: &Dense) -> Dense {
    let m = y[0].len() as f64;
    scale(&matmul(y, &adjoint(y)), 1.0 / m)
}

/// Gauss-Jordan inverse with partial pivoting.
pub fn inverse(a: &Dense) -> Dense {
    let n = a.len();
    let mut w: Dense = a
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let mut r = row.clone();
            r.extend((0..n).map(|j| Complex64::new(if i == j { 1.0 } else { 0.0 }, 0.0)));
            r
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| w[x][col].norm().total_cmp(&w[y][col].norm())).unwrap();
        w.swap(col, pivot);
        let p = w[col][col];
        for v in w[col].iter_mut() {
            *v /= p;
        }
        for row in 0..n {
            if row != col {
                let f = w[row][col];
                let pivot_row = w[col].clone();
                for (v, pv) in w[row].iter_mut().zip(&pivot_row) {
                    *v -= f * pv;
                }
            }
        }
    }
    w.into_iter().map(|r| r[n..].to_vec()).collect()
}

/// `ln |det a|` by Gaussian elimination.
pub fn log_abs_det(a: &Dense) -> f64 {
    let n = a.len();
    let mut w = a.clone();
    let mut acc = 0.0;
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| w[x][col].norm().total_cmp(&w[y][col].norm())).unwrap();
        w.swap(col, pivot);
        let p = w[col][col];
        acc += p.norm().ln();
        for row in col + 1..n {
            let f = w[row][col] / p;
            for k in col..n {
                let v = w[col][k];
                w[row][k] -= f * v;
            }
        }
    }
    acc
}

/// `A diag(gamma) A^H + sigma2 I`.
pub fn model_covariance(a: &Dense, gamma: &[f64], sigma2: f64) -> Dense {
    let l = a.len();
    let mut s = vec![vec![Complex64::new(0.0, 0.0); l]; l];
    for i in 0..l {
        s[i][i].re += sigma2;
        for j in 0..l {
            for (n, g) in gamma.iter().enumerate() {
                s[i][j] += a[i][n] * a[j][n].conj() * g;
            }
        }
    }
    s
}

/// `ln det Sigma + tr(Sigma^{-1} Sigma_hat)`.
pub fn nll(sigma_hat: &Dense, a: &Dense, gamma: &[f64], sigma2: f64) -> f64 {
    let s = model_covariance(a, gamma, sigma2);
    let prod = matmul(&inverse(&s), sigma_hat);
    log_abs_det(&s) + (0..prod.len()).map(|i| prod[i][i].re).sum::<f64>()
}

/// Golden-section minimiser of a unimodal `f` on `[lo, hi]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iterations: usize) -> f64 {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..iterations {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = f(x2);
        }
    }
    let mid = 0.5 * (lo + hi);
    [(lo, f(lo)), (mid, f(mid)), (hi, f(hi))]
        .into_iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
        .0
}

/// Scalar-loop decoder: ReLU hidden layers, sigmoid output, clamp.
pub fn decoder_oracle(input: &[f64], w: &DecoderWeights, clamp: f64) -> Vec<f64> {
    let mut h = input.to_vec();
    let last = w.layers.len() - 1;
    for (k, layer) in w.layers.iter().enumerate() {
        let (rows, cols) = layer.weights.dim();
        let mut z = vec![0.0; rows];
        for i in 0..rows {
            let mut acc = layer.bias[i];
            for j in 0..cols {
                acc += layer.weights[[i, j]] * h[j];
            }
            z[i] = if k == last {
                (1.0 / (1.0 + (-acc).exp())).clamp(clamp, 1.0 - clamp)
            } else {
                acc.max(0.0)
            };
        }
        h = z;
    }
    h
}

/// `-(1 / NU) sum [a ln s + (1 - a) ln(1 - s)]`.
pub fn bce_oracle(truth: &[ActivityVector], scores: &[SoftScores]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for (t, s) in truth.iter().zip(scores) {
        for (&a, &p) in t.as_slice().iter().zip(s.as_slice()) {
            total += if a == 1 { p.ln() } else { (1.0 - p).ln() };
            count += 1;
        }
    }
    -total / count as f64
}

/// Covariance feature vector of `y`: column-major `vec(Re)` then `vec(Im)`.
pub fn feature_oracle(y: &Dense) -> Vec<f64> {
    let c = covariance(y);
    let l = c.len();
    let mut out = Vec::with_capacity(2 * l * l);
    for col in 0..l {
        for row in 0..l {
            out.push(c[row][col].re);
        }
    }
    for col in 0..l {
        for row in 0..l {
            out.push(c[row][col].im);
        }
    }
    out
}

/// Error count of every grid point, one decision at a time.
pub fn exhaustive_scan(scores: &[SoftScores], truth: &[ActivityVector], grid: &[f64]) -> (f64, usize) {
    let mut best = (f64::NAN, usize::MAX);
    for &r in grid {
        let mut errors = 0;
        for (s, t) in scores.iter().zip(truth) {
            for (&p, &a) in s.as_slice().iter().zip(t.as_slice()) {
                if u8::from(p >= r) != a {
                    errors += 1;
                }
            }
        }
        if errors < best.1 {
            best = (r, errors);
        }
    }
    best
}

/// Mean BCE of `model` over explicit signal/noise pairs, via the oracles above.
pub fn model_loss_oracle(
    model: &Model,
    signals: &[&ComplexMatrix],
    noise: &[&ComplexMatrix],
    truth: &[ActivityVector],
) -> f64 {
    let a = to_dense(&model.encoder.as_matrix());
    let scores: Vec<SoftScores> = signals
        .iter()
        .zip(noise)
        .map(|(x, z)| {
            let y = add(&matmul(&a, &to_dense(x)), &to_dense(z));
            let f = feature_oracle(&y);
            SoftScores::new(decoder_oracle(&f, &model.decoder, jssr_core::autoencoder::CLAMP))
        })
        .collect();
    bce_oracle(truth, &scores)
}

/// Gradients smaller than this are compared on an absolute scale.
pub const GRADIENT_FLOOR: f64 = 1e-3;

/// Worst `|analytic - numeric| / max(|analytic|, |numeric|, GRADIENT_FLOOR)`
/// over every parameter, using central differences with step `h`, plus the
/// number of coordinates checked.
pub fn gradient_check(
    model: &Model,
    signals: &[&ComplexMatrix],
    noise: &[&ComplexMatrix],
    truth: &[&ActivityVector],
    h: f64,
) -> (f64, usize) {
    use jssr_core::autoencoder::{batch_loss_value, loss_and_gradients, parameter_tensors};
    let (_, grads) = loss_and_gradients(model, signals, noise, truth).unwrap();
    let analytic: Vec<Vec<f64>> = grads.tensors().into_iter().map(|t| t.to_vec()).collect();
    let mut probe = model.clone();
    let sizes: Vec<usize> = parameter_tensors(&mut probe).iter().map(|t| t.len()).collect();
    assert_eq!(sizes, analytic.iter().map(|t| t.len()).collect::<Vec<_>>());
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (t, size) in sizes.into_iter().enumerate() {
        for i in 0..size {
            let original = parameter_tensors(&mut probe)[t][i];
            parameter_tensors(&mut probe)[t][i] = original + h;
            let plus = batch_loss_value(&probe, signals, noise, truth).unwrap();
            parameter_tensors(&mut probe)[t][i] = original - h;
            let minus = batch_loss_value(&probe, signals, noise, truth).unwrap();
            parameter_tensors(&mut probe)[t][i] = original;
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[t][i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRADIENT_FLOOR);
            worst = worst.max(rel);
            checked += 1;
        }
    }
    (worst, checked)
}

/// Coordinate step minimising `ln(1 + d q) - d s / (1 + d q)` over `d >= -gamma`
/// by golden-section search. The objective is re-expressed as a difference
/// from the current best point, which removes the constant that would
/// otherwise swamp the comparison near the minimum; three rounds of search
/// around successive estimates settle the answer to rounding level.
pub fn ml_step_oracle(q: f64, s: f64, gamma: f64) -> f64 {
    let hi = 10.0 * (s / (q * q) + 1.0);
    let mut d0 = 0.0;
    let mut lo_b = -gamma;
    let mut hi_b = hi;
    for _ in 0..3 {
        let w0 = 1.0 + d0 * q;
        let delta = |t: f64| (q * t / w0).ln_1p() - s * t / (w0 * (w0 + q * t));
        let t = golden_section(delta, lo_b - d0, hi_b - d0, 200);
        d0 += t;
        let width = 1e-4 * (1.0 + d0.abs());
        lo_b = (d0 - width).max(-gamma);
        hi_b = d0 + width;
    }
    d0
}
