//! Decoder ablation that reads the raw measurements `[vec Re(Y); vec Im(Y)]`
//! (width `2LM`) instead of covariance features. Training, projection, loss
//! and thresholding are shared with the covariance autoencoder.

use crate::autoencoder::{train, DecoderConfig, FeatureKind, Model, TrainConfig, TrainOutcome};
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::signal::JointSignal;
use crate::thresholding::SoftScores;

/// Same layer layout as the covariance decoder, raw-measurement input.
pub fn naive_config(measurements: usize, devices: usize, antennas: usize, hidden_layers: usize) -> DecoderConfig {
    DecoderConfig::covariance(measurements, devices, antennas, hidden_layers).with_features(FeatureKind::Raw)
}

fn require_raw(arch: &DecoderConfig) -> Result<()> {
    if arch.features != FeatureKind::Raw {
        return Err(Error::Config("naive decoder needs raw-measurement features".into()));
    }
    Ok(())
}

pub fn naive_decoder_train(
    train_set: &[JointSignal],
    val_set: &[JointSignal],
    cfg: &TrainConfig,
    arch: &DecoderConfig,
) -> Result<TrainOutcome> {
    require_raw(arch)?;
    train(train_set, val_set, cfg, arch)
}

pub fn naive_decoder_infer(model: &Model, y: &ComplexMatrix) -> Result<SoftScores> {
    require_raw(&model.arch)?;
    model.scores(y)
}
