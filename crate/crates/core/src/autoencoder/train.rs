//! Minibatch ADAM training with early stopping on validation loss.

use std::time::Instant;

use log::{debug, info};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::decoder::DecoderConfig;
use super::network::{backward, forward_batch, loss_of, Model};
use crate::dataset::noise_block;
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::rng::{derive_seed, stream};
use crate::signal::{sample_noise, ActivityVector, JointSignal};
use crate::thresholding::SoftScores;

const STREAM_INIT: u64 = 0;
const STREAM_TRAIN: u64 = 1;
const LABEL_VALIDATION_NOISE: u64 = 0x5641_4c4e;
const LABEL_FIXED_NOISE: u64 = 0x4649_584e;
const EVAL_CHUNK: usize = 256;

/// When the training noise `Z` is drawn.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NoisePolicy {
    /// A fresh draw on every forward pass.
    #[default]
    Fresh,
    /// One draw per training sample, reused every epoch.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    #[serde(flatten)]
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub sigma2: f64,
    pub noise: NoisePolicy,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            batch_size: 128,
            epochs: 200,
            patience: 20,
            seed: 0,
            sigma2: 0.1,
            noise: NoisePolicy::Fresh,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.adam.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epoch count must be positive".into()));
        }
        if !(self.sigma2 >= 0.0) {
            return Err(Error::Config("sigma2 must be non-negative".into()));
        }
        Ok(())
    }

    /// Seed of the fixed noise stream used for validation loss.
    pub fn validation_noise_seed(&self) -> u64 {
        derive_seed(self.seed, LABEL_VALIDATION_NOISE)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation loss.
    pub model: Model,
    pub log: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub initial_val_loss: f64,
    /// Parameters after the last epoch that ran.
    pub final_model: Model,
}

/// Mean loss of `model` on `samples`, noise for sample `i` from `(noise_seed, i)`.
pub fn evaluate_loss(model: &Model, samples: &[JointSignal], noise_seed: u64, sigma2: f64) -> Result<f64> {
    let mut total = 0.0;
    for (c, chunk) in samples.chunks(EVAL_CHUNK).enumerate() {
        let noise = chunk_noise(model, chunk.len(), c * EVAL_CHUNK, noise_seed, sigma2)?;
        let xs: Vec<&ComplexMatrix> = chunk.iter().map(|s| &s.x).collect();
        let zs: Vec<&ComplexMatrix> = noise.iter().collect();
        let truth: Vec<&ActivityVector> = chunk.iter().map(|s| &s.activity).collect();
        let cache = forward_batch(model, &xs, &zs)?;
        total += loss_of(&cache, &truth)? * chunk.len() as f64;
    }
    Ok(total / samples.len() as f64)
}

/// Soft scores of `model` on `samples`, noise for sample `i` from `(noise_seed, i)`.
pub fn score_samples(model: &Model, samples: &[JointSignal], noise_seed: u64, sigma2: f64) -> Result<Vec<SoftScores>> {
    let mut out = Vec::with_capacity(samples.len());
    for (c, chunk) in samples.chunks(EVAL_CHUNK).enumerate() {
        let noise = chunk_noise(model, chunk.len(), c * EVAL_CHUNK, noise_seed, sigma2)?;
        let xs: Vec<&ComplexMatrix> = chunk.iter().map(|s| &s.x).collect();
        let zs: Vec<&ComplexMatrix> = noise.iter().collect();
        let cache = forward_batch(model, &xs, &zs)?;
        out.extend((0..chunk.len()).map(|b| cache.scores(b)));
    }
    Ok(out)
}

fn chunk_noise(model: &Model, len: usize, offset: usize, seed: u64, sigma2: f64) -> Result<Vec<ComplexMatrix>> {
    let (l, m) = (model.arch.measurements, model.arch.antennas);
    (0..len)
        .map(|i| noise_block(seed, (offset + i) as u64, l, m, sigma2))
        .collect()
}

fn check_dataset(samples: &[JointSignal], arch: &DecoderConfig, what: &str) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument(format!("{what} set is empty")));
    }
    for s in samples {
        if s.x.shape() != (arch.devices, arch.antennas) || s.activity.len() != arch.devices {
            return Err(Error::dims(
                "training sample",
                format!("{:?}", (arch.devices, arch.antennas)),
                format!("{:?}", s.x.shape()),
            ));
        }
    }
    Ok(())
}

/// Trains encoder and decoder jointly; returns the best-validation parameters.
pub fn train(
    train_set: &[JointSignal],
    val_set: &[JointSignal],
    cfg: &TrainConfig,
    arch: &DecoderConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    arch.validate()?;
    check_dataset(train_set, arch, "training")?;
    check_dataset(val_set, arch, "validation")?;

    let mut init_rng = stream(cfg.seed, STREAM_INIT);
    let mut model = Model::init(*arch, cfg.sigma2, cfg.seed, &mut init_rng)?;
    let mut state = AdamState::new(&mut model);
    let mut rng = stream(cfg.seed, STREAM_TRAIN);
    let val_seed = cfg.validation_noise_seed();
    let fixed_seed = derive_seed(cfg.seed, LABEL_FIXED_NOISE);
    let (l, m) = (arch.measurements, arch.antennas);

    let initial_val_loss = evaluate_loss(&model, val_set, val_seed, cfg.sigma2)?;
    let mut best = (model.clone(), initial_val_loss, 0usize);
    let mut log = Vec::new();
    let mut stale = 0usize;
    let started = Instant::now();
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let noise: Vec<ComplexMatrix> = match cfg.noise {
                NoisePolicy::Fresh => batch
                    .iter()
                    .map(|_| sample_noise(l, m, cfg.sigma2, &mut rng))
                    .collect::<Result<_>>()?,
                NoisePolicy::Fixed => batch
                    .iter()
                    .map(|&i| noise_block(fixed_seed, i as u64, l, m, cfg.sigma2))
                    .collect::<Result<_>>()?,
            };
            let xs: Vec<&ComplexMatrix> = batch.iter().map(|&i| &train_set[i].x).collect();
            let zs: Vec<&ComplexMatrix> = noise.iter().collect();
            let truth: Vec<&ActivityVector> = batch.iter().map(|&i| &train_set[i].activity).collect();
            let cache = forward_batch(&model, &xs, &zs)?;
            let loss = loss_of(&cache, &truth)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            let grads = backward(&model, &cache, &truth)?;
            adam_step(&mut model, &grads, &mut state, &cfg.adam, &mut rng)?;
            total += loss * batch.len() as f64;
        }
        let train_loss = total / train_set.len() as f64;
        let val_loss = evaluate_loss(&model, val_set, val_seed, cfg.sigma2)?;
        if !val_loss.is_finite() {
            return Err(Error::Divergence { epoch, loss: val_loss });
        }
        let entry = EpochLog {
            epoch,
            train_loss,
            val_loss,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        debug!("epoch {epoch}: train {train_loss:.6} val {val_loss:.6}");
        log.push(entry);

        if val_loss < best.1 {
            best = (model.clone(), val_loss, epoch);
            stale = 0;
        } else {
            stale += 1;
            if cfg.patience > 0 && stale >= cfg.patience {
                info!("early stop at epoch {epoch}, best epoch {}", best.2);
                break;
            }
        }
    }

    let (best_model, best_val_loss, best_epoch) = best;
    info!(
        "training finished: best val loss {best_val_loss:.6} at epoch {best_epoch} (initial {initial_val_loss:.6})"
    );
    Ok(TrainOutcome {
        model: best_model,
        log,
        best_epoch,
        best_val_loss,
        initial_val_loss,
        final_model: model,
    })
}

/// Training log as CSV: `epoch,train_loss,val_loss,wall_seconds`.
pub fn write_log_csv<W: std::io::Write>(log: &[EpochLog], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for e in log {
        wtr.serialize(e)?;
    }
    wtr.flush()?;
    Ok(())
}
