//! The full encoder / feature / decoder network, batched forward and backward.

use ndarray::{s, Array1, Array2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::decoder::{clamp_score, decoder_forward_values, sigmoid, DecoderConfig, DecoderWeights, CLAMP};
use super::encoder::EncoderWeights;
use super::features::{batch_features, covariance_backward, raw_backward, write_covariance, write_raw, FeatureKind};
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::signal::{ActivityVector, SensingMatrix};
use crate::thresholding::{apply_threshold, SoftScores};

/// Trained (or initial) parameters of the whole pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub arch: DecoderConfig,
    pub encoder: EncoderWeights,
    pub decoder: DecoderWeights,
    pub sigma2: f64,
    /// Calibrated decision threshold `r*`, once known.
    pub threshold: Option<f64>,
    pub seed: u64,
}

impl Model {
    /// Gaussian encoder (projected) and Glorot-uniform decoder.
    pub fn init<R: Rng + ?Sized>(arch: DecoderConfig, sigma2: f64, seed: u64, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let encoder = EncoderWeights::random(arch.measurements, arch.devices, rng);
        let decoder = DecoderWeights::glorot(&arch, rng);
        Ok(Self {
            arch,
            encoder,
            decoder,
            sigma2,
            threshold: None,
            seed,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        let shape = (self.arch.measurements, self.arch.devices);
        if self.encoder.re.dim() != shape || self.encoder.im.dim() != shape {
            return Err(Error::dims(
                "encoder weights",
                format!("{shape:?}"),
                format!("{:?}", self.encoder.re.dim()),
            ));
        }
        self.decoder.check_shapes(&self.arch)
    }

    pub fn sensing_matrix(&self) -> Result<SensingMatrix> {
        super::encoder::extract_sensing_matrix(&self.encoder)
    }

    /// Decoder input for one received block.
    pub fn features(&self, y: &ComplexMatrix) -> Result<Array1<f64>> {
        let (l, m) = y.shape();
        if l != self.arch.measurements {
            return Err(Error::dims(
                "received block",
                format!("{} rows", self.arch.measurements),
                format!("{l}"),
            ));
        }
        if m == 0 || (self.arch.features == FeatureKind::Raw && m != self.arch.antennas) {
            return Err(Error::dims(
                "received block",
                format!("{} columns", self.arch.antennas),
                format!("{m}"),
            ));
        }
        let mut f = Array1::zeros(self.arch.features.width(l, m));
        match self.arch.features {
            FeatureKind::Covariance => write_covariance(y.re.view(), y.im.view(), f.view_mut()),
            FeatureKind::Raw => write_raw(y.re.view(), y.im.view(), f.view_mut()),
        }
        Ok(f)
    }

    /// Soft scores for one received block.
    pub fn scores(&self, y: &ComplexMatrix) -> Result<SoftScores> {
        let f = self.features(y)?;
        Ok(decoder_forward_values(&f, &self.decoder)?.0)
    }

    /// Hard decisions at the calibrated threshold.
    pub fn detect(&self, y: &ComplexMatrix) -> Result<ActivityVector> {
        let r = self
            .threshold
            .ok_or_else(|| Error::InvalidArgument("model has no calibrated threshold".into()))?;
        Ok(apply_threshold(&self.scores(y)?, r))
    }
}

/// Intermediate values of a batched forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    antennas: usize,
    /// `N x (B*M)`: sample `b` occupies columns `b*M .. (b+1)*M`.
    x_re: Array2<f64>,
    x_im: Array2<f64>,
    /// `L x (B*M)`.
    pub y_re: Array2<f64>,
    pub y_im: Array2<f64>,
    /// Input of every decoder layer, `B x fan_in`.
    inputs: Vec<Array2<f64>>,
    /// Pre-activation of every decoder layer, `B x fan_out`.
    pre: Vec<Array2<f64>>,
    /// Sigmoid outputs before clamping, `B x N`.
    unclamped: Array2<f64>,
}

impl ForwardCache {
    pub fn batch_size(&self) -> usize {
        self.batch
    }

    /// Clamped scores of sample `b`.
    pub fn scores(&self, b: usize) -> SoftScores {
        SoftScores::new(self.unclamped.row(b).iter().map(|&v| clamp_score(v)).collect())
    }

    pub fn clamped(&self) -> Array2<f64> {
        self.unclamped.mapv(clamp_score)
    }
}

/// Gradients with the same layout as the trainable parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub encoder_re: Array2<f64>,
    pub encoder_im: Array2<f64>,
    pub layers: Vec<(Array2<f64>, Array1<f64>)>,
}

impl Gradients {
    /// Flat views in the canonical parameter order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = vec![
            self.encoder_re.as_slice().expect("standard layout"),
            self.encoder_im.as_slice().expect("standard layout"),
        ];
        for (w, b) in &self.layers {
            out.push(w.as_slice().expect("standard layout"));
            out.push(b.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.tensors()
            .into_iter()
            .flat_map(|t| t.iter())
            .fold(0.0, |acc, v| acc.max(v.abs()))
    }
}

/// Mutable flat views of every trainable tensor, canonical order:
/// `Re(A), Im(A), W_1, b_1, ..., W_out, b_out`.
pub fn parameter_tensors(model: &mut Model) -> Vec<&mut [f64]> {
    let mut out: Vec<&mut [f64]> = vec![
        model.encoder.re.as_slice_mut().expect("standard layout"),
        model.encoder.im.as_slice_mut().expect("standard layout"),
    ];
    for layer in &mut model.decoder.layers {
        out.push(layer.weights.as_slice_mut().expect("standard layout"));
        out.push(layer.bias.as_slice_mut().expect("standard layout"));
    }
    out
}

fn stack(blocks: &[&ComplexMatrix], rows: usize, cols: usize, what: &'static str) -> Result<(Array2<f64>, Array2<f64>)> {
    let mut re = Array2::zeros((rows, blocks.len() * cols));
    let mut im = Array2::zeros((rows, blocks.len() * cols));
    for (b, m) in blocks.iter().enumerate() {
        if m.shape() != (rows, cols) {
            return Err(Error::dims(what, format!("{:?}", (rows, cols)), format!("{:?}", m.shape())));
        }
        re.slice_mut(s![.., b * cols..(b + 1) * cols]).assign(&m.re);
        im.slice_mut(s![.., b * cols..(b + 1) * cols]).assign(&m.im);
    }
    Ok((re, im))
}

/// Forward pass over a batch of signals with explicit noise blocks.
pub fn forward_batch(model: &Model, signals: &[&ComplexMatrix], noise: &[&ComplexMatrix]) -> Result<ForwardCache> {
    let arch = &model.arch;
    let (l, n, m) = (arch.measurements, arch.devices, arch.antennas);
    if signals.is_empty() || signals.len() != noise.len() {
        return Err(Error::dims(
            "forward_batch",
            format!("{} noise blocks", signals.len()),
            format!("{}", noise.len()),
        ));
    }
    let (x_re, x_im) = stack(signals, n, m, "signal block")?;
    let (z_re, z_im) = stack(noise, l, m, "noise block")?;
    let a = &model.encoder;
    let y_re = a.re.dot(&x_re) - a.im.dot(&x_im) + z_re;
    let y_im = a.im.dot(&x_re) + a.re.dot(&x_im) + z_im;

    let features = batch_features(arch.features, &y_re, &y_im, m);
    let last = model.decoder.layers.len() - 1;
    let mut inputs = Vec::with_capacity(last + 1);
    let mut pre = Vec::with_capacity(last + 1);
    let mut act = features;
    for (i, layer) in model.decoder.layers.iter().enumerate() {
        let z = act.dot(&layer.weights.t()) + &layer.bias;
        inputs.push(act);
        act = if i == last { z.mapv(sigmoid) } else { z.mapv(|v| v.max(0.0)) };
        pre.push(z);
    }
    Ok(ForwardCache {
        batch: signals.len(),
        antennas: m,
        x_re,
        x_im,
        y_re,
        y_im,
        inputs,
        pre,
        unclamped: act,
    })
}

/// Mean binary cross-entropy over a batch of clamped scores.
pub fn bce_loss(truth: &[ActivityVector], scores: &[SoftScores]) -> Result<f64> {
    if truth.len() != scores.len() || truth.is_empty() {
        return Err(Error::dims(
            "bce_loss",
            format!("{} score vectors", truth.len()),
            format!("{}", scores.len()),
        ));
    }
    let n = truth[0].len();
    let mut total = 0.0;
    for (t, s) in truth.iter().zip(scores) {
        if t.len() != n || s.len() != n {
            return Err(Error::dims("bce_loss", format!("length {n}"), format!("{} / {}", t.len(), s.len())));
        }
        for (&a, &p) in t.as_slice().iter().zip(s.as_slice()) {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::Numerical(format!("score {p} outside (0, 1)")));
            }
            total += if a == 1 { p.ln() } else { (1.0 - p).ln() };
        }
    }
    Ok(-total / (n * truth.len()) as f64)
}

fn batch_loss(cache: &ForwardCache, truth: &[&ActivityVector]) -> Result<f64> {
    let (b, n) = cache.unclamped.dim();
    let mut total = 0.0;
    for (i, t) in truth.iter().enumerate() {
        if t.len() != n {
            return Err(Error::dims("activity", format!("length {n}"), format!("{}", t.len())));
        }
        for (j, &a) in t.as_slice().iter().enumerate() {
            let p = clamp_score(cache.unclamped[[i, j]]);
            total += if a == 1 { p.ln() } else { (1.0 - p).ln() };
        }
    }
    Ok(-total / (b * n) as f64)
}

/// Loss of a cached forward pass.
pub fn loss_of(cache: &ForwardCache, truth: &[&ActivityVector]) -> Result<f64> {
    if truth.len() != cache.batch {
        return Err(Error::dims("loss", format!("{} labels", cache.batch), format!("{}", truth.len())));
    }
    batch_loss(cache, truth)
}

/// Exact gradient of the mean BCE loss with respect to every parameter.
pub fn backward(model: &Model, cache: &ForwardCache, truth: &[&ActivityVector]) -> Result<Gradients> {
    if truth.len() != cache.batch {
        return Err(Error::dims("backward", format!("{} labels", cache.batch), format!("{}", truth.len())));
    }
    let arch = &model.arch;
    let (l, n, m) = (arch.measurements, arch.devices, cache.antennas);
    let batch = cache.batch;
    let scale = 1.0 / (batch * n) as f64;

    // dLoss/dlogit = (s - alpha) / (N B) where the clamp is inactive, 0 otherwise.
    let mut delta = Array2::zeros((batch, n));
    for (i, t) in truth.iter().enumerate() {
        if t.len() != n {
            return Err(Error::dims("activity", format!("length {n}"), format!("{}", t.len())));
        }
        for (j, &a) in t.as_slice().iter().enumerate() {
            let s = cache.unclamped[[i, j]];
            if (CLAMP..=1.0 - CLAMP).contains(&s) {
                delta[[i, j]] = (s - f64::from(a)) * scale;
            }
        }
    }

    let mut layer_grads = Vec::with_capacity(model.decoder.layers.len());
    for (k, layer) in model.decoder.layers.iter().enumerate().rev() {
        if k != model.decoder.layers.len() - 1 {
            Zip::from(&mut delta).and(&cache.pre[k]).for_each(|d, &z| {
                if z <= 0.0 {
                    *d = 0.0;
                }
            });
        }
        let dw = delta.t().dot(&cache.inputs[k]);
        let db = delta.sum_axis(Axis(0));
        layer_grads.push((dw, db));
        delta = delta.dot(&layer.weights);
    }
    layer_grads.reverse();

    // delta is now dLoss/dfeatures, B x width
    let mut dy_re = Array2::zeros((l, batch * m));
    let mut dy_im = Array2::zeros((l, batch * m));
    for b in 0..batch {
        let cols = s![.., b * m..(b + 1) * m];
        let (gr, gi) = match arch.features {
            FeatureKind::Covariance => covariance_backward(
                cache.y_re.slice(cols),
                cache.y_im.slice(cols),
                delta.row(b),
            ),
            FeatureKind::Raw => raw_backward(l, m, delta.row(b)),
        };
        dy_re.slice_mut(cols).assign(&gr);
        dy_im.slice_mut(cols).assign(&gi);
    }

    // Re(Y) = Ar Xr - Ai Xi, Im(Y) = Ai Xr + Ar Xi
    let encoder_re = dy_re.dot(&cache.x_re.t()) + dy_im.dot(&cache.x_im.t());
    let encoder_im = dy_im.dot(&cache.x_re.t()) - dy_re.dot(&cache.x_im.t());

    Ok(Gradients {
        encoder_re,
        encoder_im,
        layers: layer_grads,
    })
}

/// Loss and gradients in one call.
pub fn loss_and_gradients(
    model: &Model,
    signals: &[&ComplexMatrix],
    noise: &[&ComplexMatrix],
    truth: &[&ActivityVector],
) -> Result<(f64, Gradients)> {
    let cache = forward_batch(model, signals, noise)?;
    let loss = loss_of(&cache, truth)?;
    Ok((loss, backward(model, &cache, truth)?))
}

/// Loss only.
pub fn batch_loss_value(
    model: &Model,
    signals: &[&ComplexMatrix],
    noise: &[&ComplexMatrix],
    truth: &[&ActivityVector],
) -> Result<f64> {
    let cache = forward_batch(model, signals, noise)?;
    loss_of(&cache, truth)
}
