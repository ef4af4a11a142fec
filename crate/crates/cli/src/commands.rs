use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use jssr_core::autoencoder::{load_model, save_model, score_samples, train as train_model, write_log_csv, FeatureKind, Model};
use jssr_core::baselines::gaussian_pilots;
use jssr_core::bench::{
    audit as audit_records, decisions_path, desk, evaluate_scheme, load_decisions, load_records, measure_samples,
    paper_full, run_sweep, score_blocks, summarize, time_detection, write_records, Axis, DecisionEntry, PointConfig,
    PointData, Scheme, SweepOutput, SweepRecord, SweepSpec,
};
use jssr_core::dataset::{generate_dataset, read_dataset, write_dataset, DatasetHeader, DEFAULT_CHUNK};
use jssr_core::rng::{derive_seed, stream};
use jssr_core::thresholding::{apply_threshold, calibrate_threshold, error_rate, ThresholdGrid};
use jssr_core::{ActivityVector, JointSignal};
use log::{info, warn};

use crate::{AuditArgs, BaselineArgs, BenchArgs, CalibrateArgs, GenerateArgs, Preset, TrainArgs};

const LABEL_NOISE: u64 = 0x4e4f_4953;
const LABEL_TRAIN: u64 = 1;
const LABEL_VALIDATION: u64 = 2;
const LABEL_PILOTS: u64 = 6;

/// Measurement noise for a dataset file comes from a stream tied to the
/// dataset's own seed, so every command sees the same `Z_i`.
fn noise_seed(header: &DatasetHeader) -> u64 {
    derive_seed(header.seed, LABEL_NOISE)
}

fn preset_spec(preset: Preset) -> SweepSpec {
    match preset {
        Preset::Desk => desk(),
        Preset::PaperFull => paper_full(),
    }
}

fn load_spec(path: Option<&Path>, preset: Preset) -> Result<SweepSpec> {
    let base = preset_spec(preset);
    match path {
        Some(p) => SweepSpec::load_over(&base, p).with_context(|| format!("reading {}", p.display())),
        None => Ok(base),
    }
}

fn read_data(path: &Path) -> Result<(DatasetHeader, Vec<JointSignal>)> {
    read_dataset(path).with_context(|| format!("reading {}", path.display()))
}

fn check_header(header: &DatasetHeader, devices: usize, antennas: usize, what: &Path) -> Result<()> {
    ensure!(
        header.devices == devices && header.antennas == antennas,
        "{} has N = {}, M = {} but N = {devices}, M = {antennas} is expected",
        what.display(),
        header.devices,
        header.antennas
    );
    Ok(())
}

fn truth_of(samples: &[JointSignal]) -> Vec<ActivityVector> {
    samples.iter().map(|s| s.activity.clone()).collect()
}

pub fn preset(preset: Preset) -> Result<()> {
    print!("{}", preset_spec(preset).to_toml_string()?);
    Ok(())
}

pub fn generate(args: &GenerateArgs) -> Result<()> {
    ensure!(args.count > 0, "--count must be positive");
    let spec = load_spec(Some(&args.config), Preset::Desk)?;
    let point = spec.base_point()?;
    let header = DatasetHeader::new(&point.activity()?, point.antennas, point.sigma2, args.count, args.seed);
    write_dataset(&args.out, &header, DEFAULT_CHUNK).with_context(|| format!("writing {}", args.out.display()))?;
    info!(
        "wrote {} samples (N = {}, M = {}, G = {}) to {}",
        args.count,
        header.devices,
        header.antennas,
        header.groups,
        args.out.display()
    );
    Ok(())
}

fn log_path(args: &TrainArgs) -> PathBuf {
    args.log.clone().unwrap_or_else(|| args.out.with_extension("log.csv"))
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let spec = load_spec(Some(&args.config), Preset::Desk)?;
    let point = spec.base_point()?;
    let features = if args.naive { FeatureKind::Raw } else { FeatureKind::Covariance };
    let arch = spec.decoder_config(&point).with_features(features);
    let mut cfg = spec.train_config(args.seed)?;

    let (train_set, val_set) = match (&args.train, &args.val) {
        (Some(t), Some(v)) => {
            let (th, train_set) = read_data(t)?;
            let (vh, val_set) = read_data(v)?;
            check_header(&th, point.devices, point.antennas, t)?;
            check_header(&vh, point.devices, point.antennas, v)?;
            if th.sigma2 != point.sigma2 {
                warn!("training at sigma2 = {} from {} instead of {}", th.sigma2, t.display(), point.sigma2);
            }
            cfg.sigma2 = th.sigma2;
            (train_set, val_set)
        }
        _ => {
            let activity = point.activity()?;
            let s = &spec.samples;
            info!("generating {} training and {} validation samples", s.train, s.validation);
            (
                generate_dataset(&activity, point.antennas, s.train, derive_seed(args.seed, LABEL_TRAIN))?,
                generate_dataset(&activity, point.antennas, s.validation, derive_seed(args.seed, LABEL_VALIDATION))?,
            )
        }
    };

    info!(
        "training N = {}, L = {}, M = {}, {} epochs at most",
        point.devices, point.measurements, point.antennas, cfg.epochs
    );
    let outcome = train_model(&train_set, &val_set, &cfg, &arch)?;
    save_model(&outcome.model, &args.out).with_context(|| format!("writing {}", args.out.display()))?;
    let log = log_path(args);
    let w = BufWriter::new(File::create(&log).with_context(|| format!("creating {}", log.display()))?);
    write_log_csv(&outcome.log, w)?;
    info!(
        "best validation loss {:.6} at epoch {} (initial {:.6}); wrote {} and {}",
        outcome.best_val_loss,
        outcome.best_epoch,
        outcome.initial_val_loss,
        args.out.display(),
        log.display()
    );
    Ok(())
}

pub fn calibrate(args: &CalibrateArgs) -> Result<()> {
    let mut model = load_model(&args.model).with_context(|| format!("reading {}", args.model.display()))?;
    let (header, samples) = read_data(&args.data)?;
    check_header(&header, model.arch.devices, model.arch.antennas, &args.data)?;
    let scores = score_samples(&model, &samples, noise_seed(&header), header.sigma2)?;
    let truth = truth_of(&samples);
    let r = calibrate_threshold(&scores, &truth, &ThresholdGrid::default())?;
    let decisions: Vec<_> = scores.iter().map(|s| apply_threshold(s, r)).collect();
    let rate = error_rate(&truth, &decisions)?;
    if let Some(old) = model.threshold {
        info!("replacing threshold {old}");
    }
    model.threshold = Some(r);
    let out = args.out.as_ref().unwrap_or(&args.model);
    save_model(&model, out).with_context(|| format!("writing {}", out.display()))?;
    println!("threshold {r} (validation error rate {rate:.6} over {} samples)", samples.len());
    Ok(())
}

/// Rebuilds a spec whose base point is the test set's distribution.
fn spec_for_data(base: SweepSpec, header: &DatasetHeader, model: Option<&Model>, scheme: Scheme, seed: u64) -> Result<SweepSpec> {
    let activity = header.activity_config()?;
    ensure!(activity.p2 > 0.0, "p2 = 0 is not supported by the sweep configuration");
    let mut spec = base;
    spec.signal.devices = header.devices;
    spec.signal.groups = header.groups;
    spec.signal.antennas = header.antennas;
    spec.signal.sigma2 = header.sigma2;
    spec.signal.p = activity.mean_activity();
    spec.signal.p1_over_p2 = activity.p1 / activity.p2;
    if let Some(m) = model {
        ensure!(
            m.arch.devices == header.devices && m.arch.antennas == header.antennas,
            "checkpoint is for N = {}, M = {} but the data has N = {}, M = {}",
            m.arch.devices,
            m.arch.antennas,
            header.devices,
            header.antennas
        );
        spec.signal.l_over_n = m.arch.measurements as f64 / m.arch.devices as f64;
    }
    spec.sweep.axis = Axis::LOverN;
    spec.sweep.values = vec![spec.signal.l_over_n];
    spec.sweep.schemes = vec![scheme];
    spec.sweep.seeds = vec![seed];
    spec.validate()?;
    Ok(spec)
}

/// Scores `data.test` with a trained checkpoint, calibrating on the
/// validation set when the checkpoint carries no threshold.
fn evaluate_checkpoint(
    spec: &SweepSpec,
    data: &PointData,
    model: &Model,
    scheme: Scheme,
    seed: u64,
    out: &mut SweepOutput,
) -> Result<SweepRecord> {
    let want = if scheme == Scheme::Naive { FeatureKind::Raw } else { FeatureKind::Covariance };
    ensure!(
        model.arch.features == want,
        "checkpoint decoder uses {:?} features, {scheme} needs {want:?}",
        model.arch.features
    );
    let sigma2 = data.config.sigma2;
    let threshold = match model.threshold {
        Some(r) => r,
        None => {
            info!("checkpoint has no threshold; calibrating on the validation set");
            let scores = score_samples(model, &data.validation, data.validation_noise_seed, sigma2)?;
            calibrate_threshold(&scores, &truth_of(&data.validation), &ThresholdGrid::default())?
        }
    };
    let blocks = measure_samples(&model.encoder.as_matrix(), &data.test, data.test_noise_seed, sigma2)?;
    let (scores, _) = score_blocks(model, &blocks)?;
    let decisions: Vec<ActivityVector> = scores.iter().map(|s| apply_threshold(s, threshold)).collect();
    let mut rec = SweepRecord::new(scheme.name(), spec.sweep.axis.name(), &data.config, seed);
    rec.error_rate = Some(error_rate(&truth_of(&data.test), &decisions)?);
    rec.threshold_used = Some(threshold);
    if spec.sweep.timing {
        let n = spec.samples.timing.clamp(1, blocks.len());
        rec.time_per_sample_s = Some(time_detection(model, &blocks[..n], spec.sweep.timing_reps)?);
    }
    out.decisions.push(DecisionEntry::Decisions {
        scheme: scheme.name().into(),
        axis_value: data.config.axis_value,
        seed,
        threshold,
        alpha_hat: decisions.iter().map(ActivityVector::to_bit_string).collect(),
    });
    Ok(rec)
}

pub fn baseline(args: &BaselineArgs) -> Result<()> {
    let scheme = args.scheme;
    let (header, test) = read_data(&args.data)?;
    let model = match &args.model {
        Some(p) => Some(load_model(p).with_context(|| format!("reading {}", p.display()))?),
        None => None,
    };
    if model.is_some() && !scheme.is_learned() {
        warn!("--model is ignored by {scheme}");
    }
    let base = load_spec(args.config.as_deref(), Preset::Desk)?;
    let spec = spec_for_data(base, &header, model.as_ref().filter(|_| scheme.is_learned()), scheme, args.seed)?;
    let point: PointConfig = spec.point(spec.sweep.values[0])?;
    let activity = point.activity()?;

    let (validation, validation_noise_seed) = match &args.val {
        Some(v) => {
            let (vh, samples) = read_data(v)?;
            check_header(&vh, header.devices, header.antennas, v)?;
            (samples, noise_seed(&vh))
        }
        None => {
            let seed = derive_seed(header.seed, LABEL_VALIDATION);
            let samples = generate_dataset(&activity, point.antennas, spec.samples.validation, seed)?;
            (samples, derive_seed(seed, LABEL_NOISE))
        }
    };
    let needs_training = scheme.is_learned() && model.is_none();
    let train_set = if needs_training {
        info!("no --model given; training {scheme} on {} fresh samples", spec.samples.train);
        generate_dataset(&activity, point.antennas, spec.samples.train, derive_seed(header.seed, LABEL_TRAIN))?
    } else {
        Vec::new()
    };
    let pilots = gaussian_pilots(
        point.devices,
        point.measurements,
        &mut stream(derive_seed(args.seed, LABEL_PILOTS), 0),
    )?;
    let data = PointData {
        config: point.clone(),
        seed: args.seed,
        train: train_set,
        validation,
        test,
        validation_noise_seed,
        test_noise_seed: noise_seed(&header),
        pilots,
    };

    let mut out = SweepOutput::default();
    out.decisions.push(DecisionEntry::Truth {
        axis_value: point.axis_value,
        seed: args.seed,
        alpha: data.test.iter().map(|s| s.activity.to_bit_string()).collect(),
    });
    let rec = match (&model, scheme.is_learned()) {
        (Some(m), true) => evaluate_checkpoint(&spec, &data, m, scheme, args.seed, &mut out)?,
        _ => evaluate_scheme(&spec, &data, scheme, args.seed, &mut out),
    };
    if rec.flagged {
        warn!("{scheme} failed: {}", rec.solver_flags);
    }
    out.records.push(rec);
    match &args.out {
        Some(path) => {
            out.save(path).with_context(|| format!("writing {}", path.display()))?;
            info!("wrote {} and {}", path.display(), decisions_path(path).display());
        }
        None => {
            let stdout = io::stdout();
            write_records(&out.records, stdout.lock())?;
        }
    }
    Ok(())
}

fn save_models(dir: &Path, out: &SweepOutput) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    for m in &out.models {
        let stem = format!("{}-{}-seed{}", m.scheme, m.axis_value, m.seed);
        save_model(&m.model, &dir.join(format!("{stem}.ckpt")))?;
        let log = dir.join(format!("{stem}.log.csv"));
        write_log_csv(&m.log, BufWriter::new(File::create(&log)?))?;
    }
    Ok(())
}

pub fn bench(args: &BenchArgs) -> Result<bool> {
    let preset = if args.paper_full { Preset::PaperFull } else { Preset::Desk };
    let spec = load_spec(args.spec.as_deref(), preset)?;
    info!(
        "sweep {:?}: {} over {:?}, schemes {:?}, seeds {:?}",
        spec.name, spec.sweep.axis, spec.sweep.values, spec.sweep.schemes, spec.sweep.seeds
    );
    let out = run_sweep(&spec)?;
    out.save(&args.out).with_context(|| format!("writing {}", args.out.display()))?;
    if let Some(dir) = &args.models {
        save_models(dir, &out)?;
    }

    let mut err = io::stderr().lock();
    writeln!(err, "{:<10} {:>10} {:>5} {:>12} {:>12} {:>14}", "scheme", spec.sweep.axis, "runs", "error_rate", "std", "time/sample_s")?;
    for s in summarize(&out.records) {
        let opt = |v: Option<f64>, w: usize| v.map_or_else(|| format!("{:>w$}", "-"), |x| format!("{x:>w$.3e}"));
        writeln!(
            err,
            "{:<10} {:>10} {:>5} {} {} {}{}",
            s.scheme,
            s.axis_value,
            s.runs,
            opt(s.mean_error_rate, 12),
            opt(s.std_error_rate, 12),
            opt(s.median_time_per_sample_s, 14),
            if s.flagged > 0 { format!("  ({} flagged)", s.flagged) } else { String::new() }
        )?;
    }
    report_audit(&out.records, &out.decisions)
}

fn report_audit(records: &[SweepRecord], entries: &[DecisionEntry]) -> Result<bool> {
    let report = audit_records(records, entries);
    if report.passed() {
        println!(
            "audit passed: {} rows, {} error rates recomputed, {} flagged",
            report.rows, report.recomputed, report.flagged
        );
    } else {
        println!("audit FAILED: {} problem(s)", report.problems.len());
        for p in &report.problems {
            println!("  {p}");
        }
    }
    Ok(report.passed())
}

pub fn audit(args: &AuditArgs) -> Result<bool> {
    let records = load_records(&args.results).with_context(|| format!("reading {}", args.results.display()))?;
    let sidecar = args.decisions.clone().unwrap_or_else(|| decisions_path(&args.results));
    if !sidecar.exists() {
        bail!("decision sidecar {} not found", sidecar.display());
    }
    let entries = load_decisions(&sidecar).with_context(|| format!("reading {}", sidecar.display()))?;
    report_audit(&records, &entries)
}
