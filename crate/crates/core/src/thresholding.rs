//! Hard decisions from soft scores and threshold calibration.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::ActivityVector;

/// Per-device activity scores in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftScores(Vec<f64>);

impl SoftScores {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Strictly increasing candidate thresholds inside `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdGrid(Vec<f64>);

impl ThresholdGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument("threshold grid is empty".into()));
        }
        if points.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::InvalidArgument("threshold grid leaves [0, 1]".into()));
        }
        if points.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "threshold grid is not strictly increasing".into(),
            ));
        }
        Ok(Self(points))
    }

    pub fn points(&self) -> &[f64] {
        &self.0
    }
}

impl Default for ThresholdGrid {
    /// `0.01, 0.02, ..., 0.99`.
    fn default() -> Self {
        Self((1..100).map(|k| k as f64 / 100.0).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    pub r: f64,
    pub grid: ThresholdGrid,
}

/// `alpha_hat(n) = 1` iff `alpha_tilde(n) >= r`.
pub fn apply_threshold(scores: &SoftScores, r: f64) -> ActivityVector {
    ActivityVector::from_bools(scores.as_slice().iter().map(|&s| s >= r))
}

fn check_batch(truth: &[ActivityVector], est_lens: impl Iterator<Item = usize>) -> Result<usize> {
    let n = truth.first().map_or(0, ActivityVector::len);
    for (i, len) in est_lens.enumerate() {
        if truth[i].len() != n || len != n {
            return Err(Error::dims(
                "activity batch",
                format!("length {n}"),
                format!("sample {i}: truth {} / estimate {len}", truth[i].len()),
            ));
        }
    }
    Ok(n)
}

/// Mean per-device Hamming error over a batch.
pub fn error_rate(truth: &[ActivityVector], est: &[ActivityVector]) -> Result<f64> {
    if truth.len() != est.len() {
        return Err(Error::dims(
            "error_rate",
            format!("{} estimates", truth.len()),
            format!("{}", est.len()),
        ));
    }
    if truth.is_empty() {
        return Err(Error::InvalidArgument("error rate of an empty batch".into()));
    }
    let n = check_batch(truth, est.iter().map(ActivityVector::len))?;
    if n == 0 {
        return Err(Error::InvalidArgument("activity vectors are empty".into()));
    }
    let errors: usize = truth
        .iter()
        .zip(est)
        .map(|(t, e)| {
            t.as_slice()
                .iter()
                .zip(e.as_slice())
                .filter(|(a, b)| a != b)
                .count()
        })
        .sum();
    Ok(errors as f64 / (n * truth.len()) as f64)
}

/// Error count at every grid point, via sorted scores of each class.
pub fn error_counts(scores: &[SoftScores], truth: &[ActivityVector], grid: &ThresholdGrid) -> Result<Vec<usize>> {
    if scores.len() != truth.len() {
        return Err(Error::dims(
            "calibrate_threshold",
            format!("{} score vectors", truth.len()),
            format!("{}", scores.len()),
        ));
    }
    if scores.is_empty() {
        return Err(Error::InvalidArgument("calibration batch is empty".into()));
    }
    check_batch(truth, scores.iter().map(SoftScores::len))?;
    let mut active = Vec::new();
    let mut inactive = Vec::new();
    for (s, t) in scores.iter().zip(truth) {
        for (&v, &a) in s.as_slice().iter().zip(t.as_slice()) {
            if a == 1 {
                active.push(v);
            } else {
                inactive.push(v);
            }
        }
    }
    active.sort_by(f64::total_cmp);
    inactive.sort_by(f64::total_cmp);
    Ok(grid
        .points()
        .iter()
        .map(|&r| {
            // misses: active with score < r; false alarms: inactive with score >= r
            let misses = active.partition_point(|&v| v < r);
            let false_alarms = inactive.len() - inactive.partition_point(|&v| v < r);
            misses + false_alarms
        })
        .collect())
}

/// Grid point minimising the empirical error rate; ties go to the smallest `r`.
pub fn calibrate_threshold(
    scores: &[SoftScores],
    truth: &[ActivityVector],
    grid: &ThresholdGrid,
) -> Result<f64> {
    let counts = error_counts(scores, truth, grid)?;
    let (best, _) = counts
        .iter()
        .enumerate()
        .min_by_key(|&(i, &c)| (c, i))
        .expect("grid is non-empty");
    Ok(grid.points()[best])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn av(bits: &[u8]) -> ActivityVector {
        ActivityVector::from_bools(bits.iter().map(|&b| b == 1))
    }

    #[test]
    fn threshold_examples() {
        let s = SoftScores::new(vec![0.2, 0.8]);
        assert_eq!(apply_threshold(&s, 0.5), av(&[0, 1]));
        assert_eq!(apply_threshold(&s, 0.0), av(&[1, 1]));
        assert_eq!(apply_threshold(&SoftScores::new(vec![0.5]), 0.5), av(&[1]));
    }

    #[test]
    fn error_rate_examples() {
        let t = vec![av(&[1, 0, 0, 1])];
        assert_eq!(error_rate(&t, &t).unwrap(), 0.0);
        assert_eq!(error_rate(&t, &[av(&[0, 1, 1, 0])]).unwrap(), 1.0);
        assert_eq!(error_rate(&t, &[av(&[1, 0, 1, 1])]).unwrap(), 0.25);
    }

    #[test]
    fn error_rate_shape_errors() {
        let t = vec![av(&[1, 0])];
        assert!(error_rate(&t, &[]).is_err());
        assert!(error_rate(&t, &[av(&[1, 0, 1])]).is_err());
        assert!(error_rate(&[], &[]).is_err());
    }

    #[test]
    fn calibration_tie_break_takes_smallest() {
        let grid = ThresholdGrid::new((2..=8).map(|k| k as f64 / 10.0).collect()).unwrap();
        let r = calibrate_threshold(&[SoftScores::new(vec![0.1, 0.9])], &[av(&[0, 1])], &grid).unwrap();
        assert_eq!(r, 0.2);
    }

    #[test]
    fn all_active_truth_picks_smallest_grid_point() {
        let grid = ThresholdGrid::default();
        let scores = vec![SoftScores::new(vec![0.3, 0.7, 0.05, 0.5])];
        let r = calibrate_threshold(&scores, &[av(&[1, 1, 1, 1])], &grid).unwrap();
        assert_eq!(r, 0.01);
    }

    #[test]
    fn calibration_rejects_empty_inputs() {
        assert!(calibrate_threshold(&[], &[], &ThresholdGrid::default()).is_err());
        assert!(ThresholdGrid::new(vec![]).is_err());
        assert!(ThresholdGrid::new(vec![0.5, 0.5]).is_err());
        assert!(ThresholdGrid::new(vec![0.5, 1.5]).is_err());
    }
}
