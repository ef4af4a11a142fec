//! Result rows, their CSV file, the per-sample decision sidecar and
//! aggregate statistics.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::PointConfig;
use crate::error::{Error, Result};

/// Bumped whenever a CSV column is added, removed or reinterpreted.
pub const CSV_SCHEMA_VERSION: u32 = 1;

/// One `(scheme, axis value, seed)` result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub schema_version: u32,
    pub scheme: String,
    pub axis: String,
    pub axis_value: f64,
    #[serde(rename = "N")]
    pub devices: usize,
    #[serde(rename = "L")]
    pub measurements: usize,
    #[serde(rename = "L_over_N")]
    pub l_over_n: f64,
    #[serde(rename = "M")]
    pub antennas: usize,
    pub p: f64,
    pub p1_over_p2: f64,
    #[serde(rename = "G")]
    pub groups: usize,
    pub seed: u64,
    pub error_rate: Option<f64>,
    pub time_per_sample_s: Option<f64>,
    pub threshold_used: Option<f64>,
    /// `;`-separated solver notes, e.g. `nonconverged=3;lambda_exp=-4`.
    pub solver_flags: String,
    /// The scheme failed outright; excluded from aggregates.
    pub flagged: bool,
}

impl SweepRecord {
    pub fn new(scheme: &str, axis: &str, point: &PointConfig, seed: u64) -> Self {
        Self {
            schema_version: CSV_SCHEMA_VERSION,
            scheme: scheme.into(),
            axis: axis.into(),
            axis_value: point.axis_value,
            devices: point.devices,
            measurements: point.measurements,
            l_over_n: point.l_over_n(),
            antennas: point.antennas,
            p: point.p,
            p1_over_p2: point.p1_over_p2,
            groups: point.groups,
            seed,
            error_rate: None,
            time_per_sample_s: None,
            threshold_used: None,
            solver_flags: String::new(),
            flagged: false,
        }
    }

    /// Range checks every row must satisfy.
    pub fn check(&self) -> std::result::Result<(), String> {
        if self.schema_version != CSV_SCHEMA_VERSION {
            return Err(format!("schema version {}", self.schema_version));
        }
        if let Some(e) = self.error_rate {
            if !(0.0..=1.0).contains(&e) {
                return Err(format!("error rate {e} outside [0, 1]"));
            }
        }
        if let Some(t) = self.time_per_sample_s {
            if !(t > 0.0) || !t.is_finite() {
                return Err(format!("time per sample {t} is not positive"));
            }
        }
        if let Some(r) = self.threshold_used {
            if !(0.0..=1.0).contains(&r) {
                return Err(format!("threshold {r} outside [0, 1]"));
            }
        }
        if !self.flagged && self.error_rate.is_none() {
            return Err("unflagged row without an error rate".into());
        }
        Ok(())
    }

    pub fn key(&self) -> RecordKey {
        RecordKey {
            scheme: self.scheme.clone(),
            axis_value_bits: self.axis_value.to_bits(),
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct RecordKey {
    pub scheme: String,
    pub axis_value_bits: u64,
    pub seed: u64,
}

pub fn write_records<W: Write>(records: &[SweepRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_records<R: Read>(r: R) -> Result<Vec<SweepRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut out = Vec::new();
    for row in rdr.deserialize() {
        let rec: SweepRecord = row?;
        if rec.schema_version != CSV_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "CSV schema version {} is not supported (expected {CSV_SCHEMA_VERSION})",
                rec.schema_version
            )));
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn save_records(records: &[SweepRecord], path: &Path) -> Result<()> {
    write_records(records, BufWriter::new(File::create(path)?))
}

pub fn load_records(path: &Path) -> Result<Vec<SweepRecord>> {
    read_records(BufReader::new(File::open(path)?))
}

/// Hard decisions stored next to a results CSV so error rates can be recomputed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecisionEntry {
    /// True activity of every test sample of one `(axis value, seed)` point.
    Truth {
        axis_value: f64,
        seed: u64,
        alpha: Vec<String>,
    },
    Decisions {
        scheme: String,
        axis_value: f64,
        seed: u64,
        threshold: f64,
        alpha_hat: Vec<String>,
    },
}

/// `results.csv` -> `results.decisions.jsonl`.
pub fn decisions_path(csv_path: &Path) -> PathBuf {
    let stem = csv_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "results".into());
    csv_path.with_file_name(format!("{stem}.decisions.jsonl"))
}

pub fn write_decisions<W: Write>(entries: &[DecisionEntry], mut w: W) -> Result<()> {
    for e in entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_decisions<R: BufRead>(r: R) -> Result<Vec<DecisionEntry>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub fn save_decisions(entries: &[DecisionEntry], path: &Path) -> Result<()> {
    write_decisions(entries, BufWriter::new(File::create(path)?))
}

pub fn load_decisions(path: &Path) -> Result<Vec<DecisionEntry>> {
    read_decisions(BufReader::new(File::open(path)?))
}

/// Statistics of one `(scheme, axis value)` cell over seeds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub scheme: String,
    pub axis_value: f64,
    pub runs: usize,
    pub flagged: usize,
    pub mean_error_rate: Option<f64>,
    /// Sample standard deviation over seeds; `None` with fewer than two runs.
    pub std_error_rate: Option<f64>,
    pub median_time_per_sample_s: Option<f64>,
}

/// Groups records by `(scheme, axis value)`; flagged rows are only counted.
pub fn summarize(records: &[SweepRecord]) -> Vec<Summary> {
    let mut cells: BTreeMap<(String, u64), Vec<&SweepRecord>> = BTreeMap::new();
    for r in records {
        cells
            .entry((r.scheme.clone(), r.axis_value.to_bits()))
            .or_default()
            .push(r);
    }
    let mut out: Vec<Summary> = cells
        .into_iter()
        .map(|((scheme, bits), rows)| {
            let errors: Vec<f64> = rows
                .iter()
                .filter(|r| !r.flagged)
                .filter_map(|r| r.error_rate)
                .collect();
            let mut times: Vec<f64> = rows
                .iter()
                .filter(|r| !r.flagged)
                .filter_map(|r| r.time_per_sample_s)
                .collect();
            times.sort_by(f64::total_cmp);
            let n = errors.len();
            let mean = (n > 0).then(|| errors.iter().sum::<f64>() / n as f64);
            let std = (n > 1).then(|| {
                let m = mean.unwrap_or(0.0);
                (errors.iter().map(|e| (e - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            });
            Summary {
                scheme,
                axis_value: f64::from_bits(bits),
                runs: n,
                flagged: rows.iter().filter(|r| r.flagged).count(),
                mean_error_rate: mean,
                std_error_rate: std,
                median_time_per_sample_s: median_sorted(&times),
            }
        })
        .collect();
    out.sort_by(|a, b| a.scheme.cmp(&b.scheme).then(a.axis_value.total_cmp(&b.axis_value)));
    out
}

pub(crate) fn median_sorted(v: &[f64]) -> Option<f64> {
    match v.len() {
        0 => None,
        n if n % 2 == 1 => Some(v[n / 2]),
        n => Some(0.5 * (v[n / 2 - 1] + v[n / 2])),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point() -> PointConfig {
        PointConfig {
            axis_value: 0.14,
            devices: 100,
            measurements: 14,
            antennas: 4,
            groups: 10,
            p: 0.1,
            p1_over_p2: 3.0,
            sigma2: 0.1,
        }
    }

    #[test]
    fn csv_round_trip_keeps_options() {
        let mut a = SweepRecord::new("ml", "L_over_N", &point(), 3);
        a.error_rate = Some(0.0123);
        a.time_per_sample_s = Some(1.5e-4);
        a.threshold_used = Some(0.42);
        let mut b = SweepRecord::new("amp", "L_over_N", &point(), 3);
        b.flagged = true;
        b.solver_flags = "failed=diverged".into();
        let mut bytes = Vec::new();
        write_records(&[a.clone(), b.clone()], &mut bytes).unwrap();
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.starts_with("schema_version,scheme,axis,axis_value,N,L,L_over_N,M,"));
        assert_eq!(read_records(&bytes[..]).unwrap(), vec![a, b]);
    }

    #[test]
    fn record_checks() {
        let mut r = SweepRecord::new("ml", "p", &point(), 0);
        assert!(r.check().is_err());
        r.error_rate = Some(0.5);
        assert!(r.check().is_ok());
        r.time_per_sample_s = Some(0.0);
        assert!(r.check().is_err());
        r.time_per_sample_s = Some(1e-6);
        r.error_rate = Some(1.5);
        assert!(r.check().is_err());
    }

    #[test]
    fn summary_skips_flagged() {
        let mut rows = Vec::new();
        for (seed, e) in [(0, 0.1), (1, 0.3)] {
            let mut r = SweepRecord::new("ml", "p", &point(), seed);
            r.error_rate = Some(e);
            rows.push(r);
        }
        let mut bad = SweepRecord::new("ml", "p", &point(), 2);
        bad.flagged = true;
        bad.error_rate = Some(0.9);
        rows.push(bad);
        let s = summarize(&rows);
        assert_eq!(s.len(), 1);
        assert_eq!((s[0].runs, s[0].flagged), (2, 1));
        assert!((s[0].mean_error_rate.unwrap() - 0.2).abs() < 1e-15);
        assert!((s[0].std_error_rate.unwrap() - 0.2f64.sqrt() * 0.1f64.sqrt() * 2f64.sqrt() / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn sidecar_path() {
        assert_eq!(
            decisions_path(Path::new("/tmp/out/results.csv")),
            PathBuf::from("/tmp/out/results.decisions.jsonl")
        );
    }
}
