//! Fully connected decoder: `V` ReLU hidden layers and a sigmoid output layer.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::features::{CovFeatures, FeatureKind};
use crate::error::{Error, Result};
use crate::thresholding::SoftScores;

/// Sigmoid outputs are clamped to `[CLAMP, 1 - CLAMP]` before the log loss.
pub const CLAMP: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecoderConfig {
    /// `V`, the number of hidden layers.
    pub hidden_layers: usize,
    /// `Q`, neurons per hidden layer.
    pub hidden_width: usize,
    /// `L`.
    pub measurements: usize,
    /// `N`.
    pub devices: usize,
    /// `M`; only the raw-feature decoder's input width depends on it.
    pub antennas: usize,
    pub features: FeatureKind,
}

impl DecoderConfig {
    /// Covariance-feature decoder with the default width `Q = 2N`.
    pub fn covariance(measurements: usize, devices: usize, antennas: usize, hidden_layers: usize) -> Self {
        Self {
            hidden_layers,
            hidden_width: 2 * devices,
            measurements,
            devices,
            antennas,
            features: FeatureKind::Covariance,
        }
    }

    pub fn with_features(mut self, features: FeatureKind) -> Self {
        self.features = features;
        self
    }

    pub fn with_hidden_width(mut self, width: usize) -> Self {
        self.hidden_width = width;
        self
    }

    pub fn input_width(&self) -> usize {
        self.features.width(self.measurements, self.antennas)
    }

    /// `(fan_out, fan_in)` of every layer, input to output.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden_layers + 1);
        let mut fan_in = self.input_width();
        for _ in 0..self.hidden_layers {
            shapes.push((self.hidden_width, fan_in));
            fan_in = self.hidden_width;
        }
        shapes.push((self.devices, fan_in));
        shapes
    }

    pub fn validate(&self) -> Result<()> {
        if self.measurements == 0 || self.devices == 0 || self.antennas == 0 {
            return Err(Error::Config(format!(
                "decoder needs positive L, N, M; got {}, {}, {}",
                self.measurements, self.devices, self.antennas
            )));
        }
        if self.hidden_layers > 0 && self.hidden_width == 0 {
            return Err(Error::Config("hidden width must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    /// `fan_out x fan_in`.
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

impl DenseLayer {
    pub fn zeros(fan_out: usize, fan_in: usize) -> Self {
        Self {
            weights: Array2::zeros((fan_out, fan_in)),
            bias: Array1::zeros(fan_out),
        }
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng + ?Sized>(fan_out: usize, fan_in: usize, rng: &mut R) -> Self {
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let weights = Array2::from_shape_fn((fan_out, fan_in), |_| rng.random_range(-limit..=limit));
        Self {
            weights,
            bias: Array1::zeros(fan_out),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecoderWeights {
    pub layers: Vec<DenseLayer>,
}

impl DecoderWeights {
    pub fn zeros(cfg: &DecoderConfig) -> Self {
        Self {
            layers: cfg
                .layer_shapes()
                .into_iter()
                .map(|(o, i)| DenseLayer::zeros(o, i))
                .collect(),
        }
    }

    pub fn glorot<R: Rng + ?Sized>(cfg: &DecoderConfig, rng: &mut R) -> Self {
        Self {
            layers: cfg
                .layer_shapes()
                .into_iter()
                .map(|(o, i)| DenseLayer::glorot(o, i, rng))
                .collect(),
        }
    }

    pub fn input_width(&self) -> usize {
        self.layers.first().map_or(0, |l| l.weights.ncols())
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.weights.nrows())
    }

    pub fn check_shapes(&self, cfg: &DecoderConfig) -> Result<()> {
        let expected = cfg.layer_shapes();
        let actual: Vec<_> = self
            .layers
            .iter()
            .map(|l| (l.weights.nrows(), l.weights.ncols()))
            .collect();
        let bias_ok = self
            .layers
            .iter()
            .all(|l| l.bias.len() == l.weights.nrows());
        if expected != actual || !bias_ok {
            return Err(Error::dims(
                "decoder layers",
                format!("{expected:?}"),
                format!("{actual:?}"),
            ));
        }
        Ok(())
    }
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn clamp_score(s: f64) -> f64 {
    s.clamp(CLAMP, 1.0 - CLAMP)
}

/// Per-layer values kept from a single-sample forward pass.
#[derive(Debug, Clone)]
pub struct DecoderCache {
    /// Input of every layer (`inputs[0]` is the feature vector).
    pub inputs: Vec<Array1<f64>>,
    /// Pre-activation of every layer.
    pub pre_activations: Vec<Array1<f64>>,
    /// Sigmoid outputs before clamping.
    pub unclamped: Array1<f64>,
}

/// Forward pass on an arbitrary feature vector.
pub fn decoder_forward_values(
    features: &Array1<f64>,
    w: &DecoderWeights,
) -> Result<(SoftScores, DecoderCache)> {
    if features.len() != w.input_width() {
        return Err(Error::dims(
            "decoder input",
            format!("{}", w.input_width()),
            format!("{}", features.len()),
        ));
    }
    let last = w.layers.len() - 1;
    let mut inputs = Vec::with_capacity(w.layers.len());
    let mut pre_activations = Vec::with_capacity(w.layers.len());
    let mut act = features.clone();
    for (i, layer) in w.layers.iter().enumerate() {
        let pre = layer.weights.dot(&act) + &layer.bias;
        inputs.push(act);
        act = if i == last {
            pre.mapv(sigmoid)
        } else {
            pre.mapv(|v| v.max(0.0))
        };
        pre_activations.push(pre);
    }
    let scores = SoftScores::new(act.iter().map(|&s| clamp_score(s)).collect());
    Ok((
        scores,
        DecoderCache {
            inputs,
            pre_activations,
            unclamped: act,
        },
    ))
}

/// Soft activity scores from covariance features.
pub fn decoder_forward(f: &CovFeatures, w: &DecoderWeights) -> Result<(SoftScores, DecoderCache)> {
    decoder_forward_values(f.values(), w)
}
