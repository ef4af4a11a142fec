//! Sweep specification file.
//!
//! TOML, one table per concern:
//!
//! ```toml
//! version = 1
//! name = "desk"
//!
//! [signal]
//! devices = 100
//! groups = 10
//! p = 0.1
//! p1_over_p2 = 3.0
//! antennas = 4
//! L_over_N = 0.14
//! sigma2 = 0.1
//!
//! [samples]
//! train = 20000
//! validation = 2000
//! test = 2000
//! timing = 200
//!
//! [autoencoder]          # optional, defaults shown
//! hidden_layers = 1
//! # hidden_width = 200   # defaults to 2N
//! learning_rate = 0.001
//! batch_size = 128
//! epochs = 200
//! patience = 20
//! noise = "fresh"
//!
//! [baselines]            # optional, defaults shown
//! lambda_exponents = [-10, 0]
//! lambda_validation = 1000
//! max_iterations = 1000
//! tolerance = 1e-6
//! amp_iterations = 50
//! amp_damping = 0.0
//! ml_sweeps = 15
//! ml_tolerance = 1e-6
//!
//! [sweep]
//! axis = "L_over_N"      # L_over_N | p | M | p1_over_p2 | G
//! values = [0.08, 0.14, 0.20]
//! schemes = ["proposed", "naive", "lasso", "glasso", "amp", "ml"]
//! seeds = [0]
//! timing_reps = 5
//! timing = true
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autoencoder::{AdamConfig, DecoderConfig, NoisePolicy, TrainConfig};
use crate::error::{Error, Result};
use crate::signal::GroupSparsityConfig;

pub const SPEC_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalConfig {
    pub devices: usize,
    pub groups: usize,
    pub p: f64,
    pub p1_over_p2: f64,
    pub antennas: usize,
    #[serde(rename = "L_over_N")]
    pub l_over_n: f64,
    pub sigma2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleCounts {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    /// Test samples used for the timed passes.
    #[serde(default = "default_timing_samples")]
    pub timing: usize,
}

fn default_timing_samples() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AutoencoderSettings {
    pub hidden_layers: usize,
    pub hidden_width: Option<usize>,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub patience: usize,
    pub noise: NoisePolicy,
}

impl Default for AutoencoderSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            hidden_layers: 1,
            hidden_width: None,
            learning_rate: t.adam.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            patience: t.patience,
            noise: t.noise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSettings {
    /// Inclusive range `[k_min, k_max]` of the grid `2^k * lambda_max`.
    pub lambda_exponents: (i32, i32),
    /// Validation samples used for the lambda search.
    pub lambda_validation: usize,
    pub max_iterations: usize,
    pub tolerance: f64,
    pub amp_iterations: usize,
    pub amp_damping: f64,
    pub ml_sweeps: usize,
    pub ml_tolerance: f64,
}

impl Default for BaselineSettings {
    fn default() -> Self {
        Self {
            lambda_exponents: (-10, 0),
            lambda_validation: 1000,
            max_iterations: 1000,
            tolerance: 1e-6,
            amp_iterations: 50,
            amp_damping: 0.0,
            ml_sweeps: 15,
            ml_tolerance: 1e-6,
        }
    }
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    #[serde(rename = "L_over_N")]
    LOverN,
    #[serde(rename = "p")]
    P,
    #[serde(rename = "M")]
    M,
    #[serde(rename = "p1_over_p2")]
    P1OverP2,
    #[serde(rename = "G")]
    G,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::LOverN => "L_over_N",
            Axis::P => "p",
            Axis::M => "M",
            Axis::P1OverP2 => "p1_over_p2",
            Axis::G => "G",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Proposed,
    Naive,
    Lasso,
    Glasso,
    Amp,
    Ml,
    /// Returns the true activity; checks the harness plumbing.
    Oracle,
}

impl Scheme {
    pub const ALL: [Scheme; 7] = [
        Scheme::Proposed,
        Scheme::Naive,
        Scheme::Lasso,
        Scheme::Glasso,
        Scheme::Amp,
        Scheme::Ml,
        Scheme::Oracle,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Proposed => "proposed",
            Scheme::Naive => "naive",
            Scheme::Lasso => "lasso",
            Scheme::Glasso => "glasso",
            Scheme::Amp => "amp",
            Scheme::Ml => "ml",
            Scheme::Oracle => "oracle",
        }
    }

    pub fn is_learned(self) -> bool {
        matches!(self, Scheme::Proposed | Scheme::Naive)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub schemes: Vec<Scheme>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_reps")]
    pub timing_reps: usize,
    #[serde(default = "default_true")]
    pub timing: bool,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_reps() -> usize {
    5
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub version: u32,
    pub name: String,
    pub signal: SignalConfig,
    pub samples: SampleCounts,
    #[serde(default)]
    pub autoencoder: AutoencoderSettings,
    #[serde(default)]
    pub baselines: BaselineSettings,
    pub sweep: SweepAxis,
}

/// Fully resolved parameters of one sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct PointConfig {
    pub axis_value: f64,
    pub devices: usize,
    pub measurements: usize,
    pub antennas: usize,
    pub groups: usize,
    pub p: f64,
    pub p1_over_p2: f64,
    pub sigma2: f64,
}

impl PointConfig {
    pub fn l_over_n(&self) -> f64 {
        self.measurements as f64 / self.devices as f64
    }

    pub fn activity(&self) -> Result<GroupSparsityConfig> {
        GroupSparsityConfig::from_mean_and_ratio(self.devices, self.groups, self.p, self.p1_over_p2)
    }
}

fn as_count(value: f64, what: &str) -> Result<usize> {
    if value >= 1.0 && value.fract() == 0.0 && value.is_finite() {
        Ok(value as usize)
    } else {
        Err(Error::Config(format!("{what} = {value} must be a positive integer")))
    }
}

impl SweepSpec {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let spec: SweepSpec = toml::from_str(s)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Loads `path` with every table and key it sets laid over `base`.
    pub fn load_over(base: &SweepSpec, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let overlay: toml::Table = toml::from_str(&text)?;
        let mut merged: toml::Table = toml::from_str(&base.to_toml_string()?)?;
        merge_tables(&mut merged, overlay);
        let spec: SweepSpec = merged.try_into()?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SPEC_VERSION {
            return Err(Error::Config(format!(
                "sweep spec version {} is not supported (expected {SPEC_VERSION})",
                self.version
            )));
        }
        let s = &self.samples;
        if s.train == 0 || s.validation == 0 || s.test == 0 {
            return Err(Error::Config("sample counts must be positive".into()));
        }
        if !(self.signal.sigma2 >= 0.0) {
            return Err(Error::Config("sigma2 must be non-negative".into()));
        }
        let sw = &self.sweep;
        if sw.values.is_empty() {
            return Err(Error::Config("sweep needs at least one axis value".into()));
        }
        if sw.schemes.is_empty() {
            return Err(Error::Config("sweep needs at least one scheme".into()));
        }
        if sw.seeds.is_empty() {
            return Err(Error::Config("sweep needs at least one seed".into()));
        }
        if sw.timing && sw.timing_reps == 0 {
            return Err(Error::Config("timing_reps must be positive".into()));
        }
        let b = &self.baselines;
        if b.lambda_exponents.0 > b.lambda_exponents.1 {
            return Err(Error::Config("lambda_exponents must be [low, high]".into()));
        }
        if b.lambda_validation == 0 || b.amp_iterations == 0 || b.ml_sweeps == 0 || b.max_iterations == 0 {
            return Err(Error::Config("baseline iteration and sample counts must be positive".into()));
        }
        self.train_config(0)?.validate()?;
        for &v in &sw.values {
            let point = self.point(v)?;
            point.activity()?;
            self.decoder_config(&point).validate()?;
        }
        Ok(())
    }

    /// Resolves the base configuration with the swept axis set to `value`.
    pub fn point(&self, value: f64) -> Result<PointConfig> {
        let s = &self.signal;
        let mut pc = PointConfig {
            axis_value: value,
            devices: s.devices,
            measurements: 0,
            antennas: s.antennas,
            groups: s.groups,
            p: s.p,
            p1_over_p2: s.p1_over_p2,
            sigma2: s.sigma2,
        };
        let mut l_over_n = s.l_over_n;
        match self.sweep.axis {
            Axis::LOverN => l_over_n = value,
            Axis::P => pc.p = value,
            Axis::M => pc.antennas = as_count(value, "M")?,
            Axis::P1OverP2 => pc.p1_over_p2 = value,
            Axis::G => pc.groups = as_count(value, "G")?,
        }
        if !(l_over_n > 0.0) {
            return Err(Error::Config(format!("L/N = {l_over_n} must be positive")));
        }
        pc.measurements = as_count((l_over_n * s.devices as f64).round().max(1.0), "L")?;
        if pc.antennas == 0 {
            return Err(Error::Config("M must be positive".into()));
        }
        Ok(pc)
    }

    /// The `[signal]` table as a point, with no axis override.
    pub fn base_point(&self) -> Result<PointConfig> {
        let s = &self.signal;
        let value = match self.sweep.axis {
            Axis::LOverN => s.l_over_n,
            Axis::P => s.p,
            Axis::M => s.antennas as f64,
            Axis::P1OverP2 => s.p1_over_p2,
            Axis::G => s.groups as f64,
        };
        self.point(value)
    }

    pub fn decoder_config(&self, point: &PointConfig) -> DecoderConfig {
        let arch = DecoderConfig::covariance(
            point.measurements,
            point.devices,
            point.antennas,
            self.autoencoder.hidden_layers,
        );
        match self.autoencoder.hidden_width {
            Some(q) => arch.with_hidden_width(q),
            None => arch,
        }
    }

    pub fn train_config(&self, seed: u64) -> Result<TrainConfig> {
        let a = &self.autoencoder;
        Ok(TrainConfig {
            adam: AdamConfig {
                learning_rate: a.learning_rate,
                ..AdamConfig::default()
            },
            batch_size: a.batch_size,
            epochs: a.epochs,
            patience: a.patience,
            seed,
            sigma2: self.signal.sigma2,
            noise: a.noise,
        })
    }
}

fn merge_tables(base: &mut toml::Table, overlay: toml::Table) {
    for (k, v) in overlay {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_tables(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

fn preset(
    name: &str,
    devices: usize,
    groups: usize,
    train: usize,
    validation: usize,
    test: usize,
) -> SweepSpec {
    SweepSpec {
        version: SPEC_VERSION,
        name: name.into(),
        signal: SignalConfig {
            devices,
            groups,
            p: 0.1,
            p1_over_p2: 3.0,
            antennas: 4,
            l_over_n: 0.14,
            sigma2: 0.1,
        },
        samples: SampleCounts {
            train,
            validation,
            test,
            timing: 200,
        },
        autoencoder: AutoencoderSettings::default(),
        baselines: BaselineSettings::default(),
        sweep: SweepAxis {
            axis: Axis::LOverN,
            values: vec![0.08, 0.14, 0.20],
            schemes: vec![
                Scheme::Proposed,
                Scheme::Naive,
                Scheme::Lasso,
                Scheme::Glasso,
                Scheme::Amp,
                Scheme::Ml,
            ],
            seeds: vec![0],
            timing_reps: 5,
            timing: true,
        },
    }
}

/// Desk-scale configuration: `N = 100`, `G = 10`, 2e4 / 2e3 / 2e3 samples.
pub fn desk() -> SweepSpec {
    preset("desk", 100, 10, 20_000, 2_000, 2_000)
}

/// Full-scale configuration: `N = 500`, `G = 50`, 9e4 / 1e4 / 1e4 samples.
pub fn paper_full() -> SweepSpec {
    preset("paper-full", 500, 50, 90_000, 10_000, 10_000)
}

pub fn default_configs() -> Vec<(&'static str, SweepSpec)> {
    vec![("desk", desk()), ("paper-full", paper_full())]
}
