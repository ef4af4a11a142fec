//! Model checkpoint file.
//!
//! One line of compact JSON ([`CheckpointHeader`]) terminated by `\n`, then
//! little-endian `f64` arrays in this order: `Re(A)` and `Im(A)` (`L x N`,
//! row-major), then for every decoder layer from input to output its weight
//! matrix (`fan_out x fan_in`, row-major) followed by its bias vector.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use super::decoder::{DecoderConfig, DecoderWeights, DenseLayer};
use super::encoder::EncoderWeights;
use super::features::FeatureKind;
use super::network::Model;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    #[serde(rename = "N")]
    pub devices: usize,
    #[serde(rename = "L")]
    pub measurements: usize,
    #[serde(rename = "M")]
    pub antennas: usize,
    #[serde(rename = "V")]
    pub hidden_layers: usize,
    #[serde(rename = "Q")]
    pub hidden_width: usize,
    pub sigma2: f64,
    pub threshold: Option<f64>,
    pub seed: u64,
    #[serde(default = "default_features")]
    pub features: FeatureKind,
}

fn default_features() -> FeatureKind {
    FeatureKind::Covariance
}

impl CheckpointHeader {
    pub fn of(model: &Model) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            devices: model.arch.devices,
            measurements: model.arch.measurements,
            antennas: model.arch.antennas,
            hidden_layers: model.arch.hidden_layers,
            hidden_width: model.arch.hidden_width,
            sigma2: model.sigma2,
            threshold: model.threshold,
            seed: model.seed,
            features: model.arch.features,
        }
    }

    pub fn arch(&self) -> DecoderConfig {
        DecoderConfig {
            hidden_layers: self.hidden_layers,
            hidden_width: self.hidden_width,
            measurements: self.measurements,
            devices: self.devices,
            antennas: self.antennas,
            features: self.features,
        }
    }
}

fn put<W: Write>(w: &mut W, values: impl Iterator<Item = f64>) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn write_model<W: Write>(model: &Model, mut w: W) -> Result<()> {
    model.validate()?;
    serde_json::to_writer(&mut w, &CheckpointHeader::of(model))?;
    w.write_all(b"\n")?;
    put(&mut w, model.encoder.re.iter().copied())?;
    put(&mut w, model.encoder.im.iter().copied())?;
    for layer in &model.decoder.layers {
        put(&mut w, layer.weights.iter().copied())?;
        put(&mut w, layer.bias.iter().copied())?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    write_model(model, BufWriter::new(File::create(path)?))
}

fn take<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>> {
    let mut buf = vec![0u8; count * 8];
    r.read_exact(&mut buf)
        .map_err(|e| Error::Format(format!("truncated checkpoint: {e}")))?;
    Ok(buf
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
        .collect())
}

pub fn read_model<R: BufRead>(mut r: R) -> Result<Model> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: CheckpointHeader = serde_json::from_str(line.trim_end())?;
    if header.version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {}", header.version)));
    }
    let arch = header.arch();
    arch.validate()?;
    let (l, n) = (arch.measurements, arch.devices);
    let shape = |v: Vec<f64>, rows, cols| {
        Array2::from_shape_vec((rows, cols), v).map_err(|e| Error::Format(e.to_string()))
    };
    let re = shape(take(&mut r, l * n)?, l, n)?;
    let im = shape(take(&mut r, l * n)?, l, n)?;
    let mut layers = Vec::new();
    for (fan_out, fan_in) in arch.layer_shapes() {
        let weights = shape(take(&mut r, fan_out * fan_in)?, fan_out, fan_in)?;
        let bias = Array1::from(take(&mut r, fan_out)?);
        layers.push(DenseLayer { weights, bias });
    }
    let mut rest = Vec::new();
    r.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Format(format!("{} trailing bytes in checkpoint", rest.len())));
    }
    let model = Model {
        arch,
        encoder: EncoderWeights::new(re, im)?,
        decoder: DecoderWeights { layers },
        sigma2: header.sigma2,
        threshold: header.threshold,
        seed: header.seed,
    };
    model.validate()?;
    Ok(model)
}

pub fn load_model(path: &Path) -> Result<Model> {
    read_model(BufReader::new(File::open(path)?))
}
