//! Seeded dataset generation and the binary dataset file.
//!
//! File layout: one line of compact JSON (the [`DatasetHeader`]) terminated by
//! `\n`, followed by `count` records. Each record is `X.re` (N x M, row-major),
//! `X.im` (N x M, row-major) and `alpha` (N values), all little-endian `f64`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::rng::stream;
use crate::signal::{
    build_signal, sample_activity, sample_channels, sample_noise, ActivityVector, GroupSparsityConfig,
    JointSignal,
};

pub const DATASET_VERSION: u32 = 1;
pub const DEFAULT_CHUNK: usize = 1024;

/// Sample `index` of the dataset identified by `seed`.
pub fn generate_sample(
    cfg: &GroupSparsityConfig,
    antennas: usize,
    seed: u64,
    index: u64,
) -> Result<JointSignal> {
    let mut rng = stream(seed, index);
    let activity = sample_activity(cfg, &mut rng)?;
    let channels = sample_channels(cfg.devices, antennas, &mut rng)?;
    build_signal(&activity, &channels)
}

/// Noise block for sample `index` of a measurement stream; the same
/// `(seed, index)` always gives the same block, whatever the sensing matrix.
pub fn noise_block(seed: u64, index: u64, measurements: usize, antennas: usize, sigma2: f64) -> Result<ComplexMatrix> {
    sample_noise(measurements, antennas, sigma2, &mut stream(seed, index))
}

/// `count` samples, generated chunk by chunk.
pub fn generate_dataset(
    cfg: &GroupSparsityConfig,
    antennas: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<JointSignal>> {
    let mut out = Vec::with_capacity(count);
    for chunk in DatasetStream::new(*cfg, antennas, count, seed, DEFAULT_CHUNK)? {
        out.extend(chunk?);
    }
    Ok(out)
}

/// Iterator over consecutive chunks of a seeded dataset; at most `chunk_size`
/// samples are alive per step.
#[derive(Debug, Clone)]
pub struct DatasetStream {
    cfg: GroupSparsityConfig,
    antennas: usize,
    count: usize,
    seed: u64,
    chunk_size: usize,
    next: usize,
}

impl DatasetStream {
    pub fn new(
        cfg: GroupSparsityConfig,
        antennas: usize,
        count: usize,
        seed: u64,
        chunk_size: usize,
    ) -> Result<Self> {
        cfg.validate()?;
        if count == 0 {
            return Err(Error::InvalidArgument("dataset count must be at least 1".into()));
        }
        if antennas == 0 {
            return Err(Error::InvalidArgument("antenna count must be at least 1".into()));
        }
        if chunk_size == 0 {
            return Err(Error::InvalidArgument("chunk size must be at least 1".into()));
        }
        Ok(Self {
            cfg,
            antennas,
            count,
            seed,
            chunk_size,
            next: 0,
        })
    }
}

impl Iterator for DatasetStream {
    type Item = Result<Vec<JointSignal>>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.count {
            return None;
        }
        let end = (self.next + self.chunk_size).min(self.count);
        let range = self.next..end;
        self.next = end;
        Some(
            range
                .into_par_iter()
                .map(|i| generate_sample(&self.cfg, self.antennas, self.seed, i as u64))
                .collect(),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub version: u32,
    #[serde(rename = "N")]
    pub devices: usize,
    #[serde(rename = "M")]
    pub antennas: usize,
    #[serde(rename = "G")]
    pub groups: usize,
    pub p1: f64,
    pub p2: f64,
    pub sigma2: f64,
    pub count: usize,
    pub seed: u64,
}

impl DatasetHeader {
    pub fn new(cfg: &GroupSparsityConfig, antennas: usize, sigma2: f64, count: usize, seed: u64) -> Self {
        Self {
            version: DATASET_VERSION,
            devices: cfg.devices,
            antennas,
            groups: cfg.groups,
            p1: cfg.p1,
            p2: cfg.p2,
            sigma2,
            count,
            seed,
        }
    }

    pub fn activity_config(&self) -> Result<GroupSparsityConfig> {
        GroupSparsityConfig::new(self.devices, self.groups, self.p1, self.p2)
    }

    fn record_len(&self) -> usize {
        2 * self.devices * self.antennas + self.devices
    }
}

fn write_f64s<W: Write>(w: &mut W, values: impl Iterator<Item = f64>) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Regenerates the dataset described by `header` and streams it to `path`.
pub fn write_dataset(path: &Path, header: &DatasetHeader, chunk_size: usize) -> Result<()> {
    let cfg = header.activity_config()?;
    let stream = DatasetStream::new(cfg, header.antennas, header.count, header.seed, chunk_size)?;
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    for chunk in stream {
        for s in chunk? {
            // iter() on a standard-layout array is row-major
            write_f64s(&mut w, s.x.re.iter().copied())?;
            write_f64s(&mut w, s.x.im.iter().copied())?;
            write_f64s(&mut w, s.activity.as_slice().iter().map(|&b| f64::from(b)))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Sequential reader over a dataset file.
pub struct DatasetReader {
    header: DatasetHeader,
    reader: BufReader<File>,
    remaining: usize,
    buf: Vec<u8>,
}

impl DatasetReader {
    pub fn open(path: &Path) -> Result<Self> {
        let mut reader = BufReader::new(File::open(path)?);
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let header: DatasetHeader = serde_json::from_str(line.trim_end())?;
        if header.version != DATASET_VERSION {
            return Err(Error::Format(format!(
                "unsupported dataset version {}",
                header.version
            )));
        }
        header.activity_config()?;
        let remaining = header.count;
        let buf = vec![0u8; header.record_len() * 8];
        Ok(Self {
            header,
            reader,
            remaining,
            buf,
        })
    }

    pub fn header(&self) -> &DatasetHeader {
        &self.header
    }
}

impl Iterator for DatasetReader {
    type Item = Result<JointSignal>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        self.remaining -= 1;
        if let Err(e) = self.reader.read_exact(&mut self.buf) {
            self.remaining = 0;
            return Some(Err(Error::Format(format!("truncated dataset record: {e}"))));
        }
        let values: Vec<f64> = self
            .buf
            .chunks_exact(8)
            .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
            .collect();
        let (n, m) = (self.header.devices, self.header.antennas);
        let nm = n * m;
        let re = Array2::from_shape_vec((n, m), values[..nm].to_vec()).expect("record shape");
        let im = Array2::from_shape_vec((n, m), values[nm..2 * nm].to_vec()).expect("record shape");
        let activity = match ActivityVector::from_f64(&values[2 * nm..]) {
            Ok(a) => a,
            Err(e) => return Some(Err(e)),
        };
        Some(Ok(JointSignal {
            x: ComplexMatrix { re, im },
            activity,
        }))
    }
}

pub fn read_dataset(path: &Path) -> Result<(DatasetHeader, Vec<JointSignal>)> {
    let reader = DatasetReader::open(path)?;
    let header = reader.header().clone();
    let samples = reader.collect::<Result<Vec<_>>>()?;
    Ok((header, samples))
}
