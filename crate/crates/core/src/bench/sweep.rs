//! Sweep runner.
//!
//! For every `(axis value, seed)` point one training, validation and test set
//! is drawn. Every scheme sees the same test signals `X` and the same test
//! noise blocks `Z`; only the pilot matrix differs (learned for the decoders,
//! one shared i.i.d. Gaussian draw for the classical detectors).

use std::path::Path;

use log::{info, warn};
use rayon::prelude::*;

use super::config::{PointConfig, Scheme, SweepSpec};
use super::record::{decisions_path, save_decisions, save_records, DecisionEntry, SweepRecord};
use super::timing::{time_detection, time_passes};
use crate::autoencoder::{score_samples, train, EpochLog, FeatureKind, Model};
use crate::baselines::{
    gaussian_pilots, AmpDetector, AmpPrior, CovLassoDetector, Detector, GroupLassoDetector, MlDetector,
    SolverConfig,
};
use crate::dataset::{generate_dataset, noise_block};
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;
use crate::rng::{derive_seed, stream};
use crate::signal::{linear_measurement, ActivityVector, JointSignal, SensingMatrix};
use crate::thresholding::{apply_threshold, calibrate_threshold, error_counts, error_rate, SoftScores, ThresholdGrid};

const LABEL_POINT: u64 = 0x504f_494e;
const LABEL_TRAIN: u64 = 1;
const LABEL_VALIDATION: u64 = 2;
const LABEL_TEST: u64 = 3;
const LABEL_VALIDATION_NOISE: u64 = 4;
const LABEL_TEST_NOISE: u64 = 5;
const LABEL_PILOTS: u64 = 6;
const LABEL_MODEL: u64 = 7;

/// Data shared by every scheme at one sweep point.
#[derive(Debug, Clone)]
pub struct PointData {
    pub config: PointConfig,
    pub seed: u64,
    /// Empty when no learned scheme is requested.
    pub train: Vec<JointSignal>,
    pub validation: Vec<JointSignal>,
    pub test: Vec<JointSignal>,
    pub validation_noise_seed: u64,
    pub test_noise_seed: u64,
    /// I.i.d. CN(0, 1) pilots for the classical detectors.
    pub pilots: SensingMatrix,
}

impl PointData {
    pub fn generate(spec: &SweepSpec, value_index: usize, seed: u64, with_training: bool) -> Result<Self> {
        let config = spec.point(spec.sweep.values[value_index])?;
        let base = derive_seed(derive_seed(seed, LABEL_POINT), value_index as u64);
        let activity = config.activity()?;
        let m = config.antennas;
        let s = &spec.samples;
        let train = if with_training {
            generate_dataset(&activity, m, s.train, derive_seed(base, LABEL_TRAIN))?
        } else {
            Vec::new()
        };
        let pilots = gaussian_pilots(
            config.devices,
            config.measurements,
            &mut stream(derive_seed(base, LABEL_PILOTS), 0),
        )?;
        Ok(Self {
            train,
            validation: generate_dataset(&activity, m, s.validation, derive_seed(base, LABEL_VALIDATION))?,
            test: generate_dataset(&activity, m, s.test, derive_seed(base, LABEL_TEST))?,
            validation_noise_seed: derive_seed(base, LABEL_VALIDATION_NOISE),
            test_noise_seed: derive_seed(base, LABEL_TEST_NOISE),
            pilots,
            config,
            seed: base,
        })
    }

    pub fn test_truth(&self) -> Vec<ActivityVector> {
        self.test.iter().map(|s| s.activity.clone()).collect()
    }

    pub fn validation_truth(&self) -> Vec<ActivityVector> {
        self.validation.iter().map(|s| s.activity.clone()).collect()
    }

    pub fn model_seed(&self, scheme: Scheme) -> u64 {
        derive_seed(derive_seed(self.seed, LABEL_MODEL), scheme as u64)
    }
}

/// `Y_i = A X_i + Z_i` with `Z_i` from `(noise_seed, i)`.
pub fn measure_samples(a: &ComplexMatrix, samples: &[JointSignal], noise_seed: u64, sigma2: f64) -> Result<Vec<ComplexMatrix>> {
    let (l, m) = (a.nrows(), samples.first().map_or(0, |s| s.x.ncols()));
    samples
        .par_iter()
        .enumerate()
        .map(|(i, s)| linear_measurement(a, &s.x, &noise_block(noise_seed, i as u64, l, m, sigma2)?))
        .collect()
}

/// Scores of every block plus the number of blocks whose solver did not converge.
pub fn score_blocks(detector: &dyn Detector, blocks: &[ComplexMatrix]) -> Result<(Vec<SoftScores>, usize)> {
    let out: Vec<_> = blocks
        .par_iter()
        .map(|y| detector.detect(y))
        .collect::<Result<Vec<_>>>()?;
    let nonconverged = out.iter().filter(|d| !d.converged).count();
    Ok((out.into_iter().map(|d| d.scores).collect(), nonconverged))
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub scheme: Scheme,
    pub axis_value: f64,
    pub seed: u64,
    pub model: Model,
    pub log: Vec<EpochLog>,
}

/// Everything produced by [`run_sweep`].
#[derive(Debug, Clone, Default)]
pub struct SweepOutput {
    pub records: Vec<SweepRecord>,
    pub decisions: Vec<DecisionEntry>,
    pub models: Vec<TrainedModel>,
}

impl SweepOutput {
    /// Writes the CSV and its `.decisions.jsonl` sidecar.
    pub fn save(&self, csv_path: &Path) -> Result<()> {
        save_records(&self.records, csv_path)?;
        save_decisions(&self.decisions, &decisions_path(csv_path))
    }
}

struct Evaluated {
    test_scores: Vec<SoftScores>,
    threshold: f64,
    flags: Vec<String>,
    time: Option<f64>,
    model: Option<(Model, Vec<EpochLog>)>,
}

fn flag_nonconverged(flags: &mut Vec<String>, what: &str, count: usize) {
    if count > 0 {
        flags.push(format!("{what}={count}"));
    }
}

fn timing_blocks(spec: &SweepSpec, blocks: &[ComplexMatrix]) -> usize {
    spec.samples.timing.min(blocks.len()).max(1)
}

fn time_if(spec: &SweepSpec, detector: &dyn Detector, blocks: &[ComplexMatrix]) -> Result<Option<f64>> {
    if !spec.sweep.timing {
        return Ok(None);
    }
    let n = timing_blocks(spec, blocks);
    time_detection(detector, &blocks[..n], spec.sweep.timing_reps).map(Some)
}

fn evaluate_learned(spec: &SweepSpec, data: &PointData, scheme: Scheme) -> Result<Evaluated> {
    let features = if scheme == Scheme::Naive {
        FeatureKind::Raw
    } else {
        FeatureKind::Covariance
    };
    let arch = spec.decoder_config(&data.config).with_features(features);
    let cfg = spec.train_config(data.model_seed(scheme))?;
    let outcome = train(&data.train, &data.validation, &cfg, &arch)?;
    let mut model = outcome.model;
    let grid = ThresholdGrid::default();
    let sigma2 = data.config.sigma2;
    let val_scores = score_samples(&model, &data.validation, data.validation_noise_seed, sigma2)?;
    let threshold = calibrate_threshold(&val_scores, &data.validation_truth(), &grid)?;
    model.threshold = Some(threshold);
    let a = model.encoder.as_matrix();
    let blocks = measure_samples(&a, &data.test, data.test_noise_seed, sigma2)?;
    let (test_scores, _) = score_blocks(&model, &blocks)?;
    let time = time_if(spec, &model, &blocks)?;
    Ok(Evaluated {
        test_scores,
        threshold,
        flags: vec![format!("best_epoch={}", outcome.best_epoch)],
        time,
        model: Some((model, outcome.log)),
    })
}

/// Scores on the validation set, threshold, and error count.
fn validate(detector: &dyn Detector, blocks: &[ComplexMatrix], truth: &[ActivityVector]) -> Result<(f64, usize, usize)> {
    let grid = ThresholdGrid::default();
    let (scores, nonconverged) = score_blocks(detector, blocks)?;
    let counts = error_counts(&scores, truth, &grid)?;
    let (best, &count) = counts
        .iter()
        .enumerate()
        .min_by_key(|&(i, &c)| (c, i))
        .expect("grid is non-empty");
    Ok((grid.points()[best], count, nonconverged))
}

fn evaluate_classical(spec: &SweepSpec, data: &PointData, scheme: Scheme) -> Result<Evaluated> {
    let b = &spec.baselines;
    let sigma2 = data.config.sigma2;
    let a = data.pilots.matrix();
    let val_blocks = measure_samples(a, &data.validation, data.validation_noise_seed, sigma2)?;
    let val_truth = data.validation_truth();
    let test_blocks = measure_samples(a, &data.test, data.test_noise_seed, sigma2)?;
    let solver = SolverConfig {
        max_iterations: b.max_iterations,
        tolerance: b.tolerance,
        ..SolverConfig::default()
    };
    let mut flags = Vec::new();

    let (detector, threshold): (Box<dyn Detector>, f64) = match scheme {
        Scheme::Lasso | Scheme::Glasso => {
            let k = b.lambda_validation.min(val_blocks.len());
            let make = |exp: i32| -> Box<dyn Detector> {
                let factor = 2f64.powi(exp);
                if scheme == Scheme::Lasso {
                    Box::new(CovLassoDetector::new(&data.pilots, solver).with_relative_lambda(factor))
                } else {
                    Box::new(GroupLassoDetector::new(&data.pilots, solver).with_relative_lambda(factor))
                }
            };
            let mut best: Option<(usize, i32, f64)> = None;
            for exp in b.lambda_exponents.0..=b.lambda_exponents.1 {
                let (r, count, _) = validate(make(exp).as_ref(), &val_blocks[..k], &val_truth[..k])?;
                if best.is_none_or(|(c, _, _)| count < c) {
                    best = Some((count, exp, r));
                }
            }
            let (_, exp, r) = best.expect("non-empty lambda grid");
            flags.push(format!("lambda_exp={exp}"));
            (make(exp), r)
        }
        Scheme::Amp => {
            let prior = AmpPrior {
                activity: data.config.p,
                channel_variance: 1.0,
            };
            let cfg = SolverConfig {
                max_iterations: b.amp_iterations,
                damping: b.amp_damping,
                ..solver
            };
            let det = AmpDetector::new(&data.pilots, prior, cfg)?;
            let (r, _, nc) = validate(&det, &val_blocks, &val_truth)?;
            flag_nonconverged(&mut flags, "val_diverged", nc);
            (Box::new(det), r)
        }
        Scheme::Ml => {
            let mut det = MlDetector::new(&data.pilots, sigma2);
            det.cfg.max_iterations = b.ml_sweeps;
            det.cfg.tolerance = b.ml_tolerance;
            let (r, _, _) = validate(&det, &val_blocks, &val_truth)?;
            (Box::new(det), r)
        }
        _ => unreachable!("classical scheme"),
    };
    let (test_scores, nonconverged) = score_blocks(detector.as_ref(), &test_blocks)?;
    flag_nonconverged(&mut flags, "nonconverged", nonconverged);
    let time = time_if(spec, detector.as_ref(), &test_blocks)?;
    Ok(Evaluated {
        test_scores,
        threshold,
        flags,
        time,
        model: None,
    })
}

fn evaluate_oracle(spec: &SweepSpec, data: &PointData) -> Result<Evaluated> {
    let truth = data.test_truth();
    let scores: Vec<SoftScores> = truth.iter().map(|t| SoftScores::new(t.to_f64())).collect();
    let val: Vec<SoftScores> = data
        .validation
        .iter()
        .map(|s| SoftScores::new(s.activity.to_f64()))
        .collect();
    let threshold = calibrate_threshold(&val, &data.validation_truth(), &ThresholdGrid::default())?;
    let time = if spec.sweep.timing {
        let n = spec.samples.timing.min(truth.len()).max(1);
        Some(time_passes(n, spec.sweep.timing_reps, |i| {
            std::hint::black_box(SoftScores::new(truth[i].to_f64()));
            Ok(())
        })?)
    } else {
        None
    };
    Ok(Evaluated {
        test_scores: scores,
        threshold,
        flags: Vec::new(),
        time,
        model: None,
    })
}

/// Evaluates one scheme at one point; failures become flagged records.
pub fn evaluate_scheme(
    spec: &SweepSpec,
    data: &PointData,
    scheme: Scheme,
    seed: u64,
    out: &mut SweepOutput,
) -> SweepRecord {
    let mut rec = SweepRecord::new(scheme.name(), spec.sweep.axis.name(), &data.config, seed);
    let result = match scheme {
        Scheme::Proposed | Scheme::Naive => evaluate_learned(spec, data, scheme),
        Scheme::Oracle => evaluate_oracle(spec, data),
        _ => evaluate_classical(spec, data, scheme),
    };
    let ev = match result {
        Ok(ev) => ev,
        Err(e) => {
            warn!("{scheme} failed at {} = {}: {e}", spec.sweep.axis, data.config.axis_value);
            rec.flagged = true;
            rec.solver_flags = format!("failed={}", e.to_string().replace([',', ';', '\n'], " "));
            return rec;
        }
    };
    let truth = data.test_truth();
    let decisions: Vec<ActivityVector> = ev.test_scores.iter().map(|s| apply_threshold(s, ev.threshold)).collect();
    match error_rate(&truth, &decisions) {
        Ok(e) => rec.error_rate = Some(e),
        Err(e) => {
            rec.flagged = true;
            rec.solver_flags = format!("failed={e}");
            return rec;
        }
    }
    rec.threshold_used = Some(ev.threshold);
    rec.time_per_sample_s = ev.time;
    rec.solver_flags = ev.flags.join(";");
    out.decisions.push(DecisionEntry::Decisions {
        scheme: scheme.name().into(),
        axis_value: data.config.axis_value,
        seed,
        threshold: ev.threshold,
        alpha_hat: decisions.iter().map(ActivityVector::to_bit_string).collect(),
    });
    if let Some((model, log)) = ev.model {
        out.models.push(TrainedModel {
            scheme,
            axis_value: data.config.axis_value,
            seed,
            model,
            log,
        });
    }
    rec
}

/// Runs every `(axis value, seed, scheme)` combination of `spec`.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepOutput> {
    spec.validate()?;
    let learned = spec.sweep.schemes.iter().any(|s| s.is_learned());
    let mut out = SweepOutput::default();
    for (vi, &value) in spec.sweep.values.iter().enumerate() {
        for &seed in &spec.sweep.seeds {
            info!("{} = {value}, seed {seed}", spec.sweep.axis);
            let data = PointData::generate(spec, vi, seed, learned)?;
            out.decisions.push(DecisionEntry::Truth {
                axis_value: value,
                seed,
                alpha: data.test.iter().map(|s| s.activity.to_bit_string()).collect(),
            });
            for &scheme in &spec.sweep.schemes {
                let rec = evaluate_scheme(spec, &data, scheme, seed, &mut out);
                info!(
                    "  {scheme}: error rate {:?}, time {:?}, flags [{}]",
                    rec.error_rate, rec.time_per_sample_s, rec.solver_flags
                );
                out.records.push(rec);
            }
        }
    }
    Ok(out)
}

/// `JSSR_THREADS` as a positive integer, if set.
pub fn thread_cap() -> Result<Option<usize>> {
    match std::env::var("JSSR_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(Error::Config(format!("JSSR_THREADS = {v:?} is not a positive integer"))),
        },
        Err(std::env::VarError::NotPresent) => Ok(None),
        Err(e) => Err(Error::Config(format!("JSSR_THREADS: {e}"))),
    }
}

/// Sizes the global rayon pool from `JSSR_THREADS`; returns the thread count in use.
pub fn configure_threads() -> Result<usize> {
    if let Some(n) = thread_cap()? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(rayon::current_num_threads())
}
