//! Single-threaded detection timing.

use std::hint::black_box;
use std::sync::Mutex;
use std::time::Instant;

use super::record::median_sorted;
use crate::baselines::Detector;
use crate::error::{Error, Result};
use crate::linalg::ComplexMatrix;

/// Held for the whole duration of every timed section so no two overlap.
static TIMING_TOKEN: Mutex<()> = Mutex::new(());

/// Median over `reps` passes of the per-sample wall time of `work(i)` for
/// `i in 0..count`, after one untimed warm-up pass. Runs on the calling
/// thread only.
pub fn time_passes(count: usize, reps: usize, mut work: impl FnMut(usize) -> Result<()>) -> Result<f64> {
    if count == 0 || reps == 0 {
        return Err(Error::InvalidArgument("timing needs samples and repetitions".into()));
    }
    let _token = TIMING_TOKEN.lock().unwrap_or_else(|e| e.into_inner());
    for i in 0..count {
        work(i)?;
    }
    let mut per_sample = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        for i in 0..count {
            work(i)?;
        }
        per_sample.push(start.elapsed().as_secs_f64() / count as f64);
    }
    per_sample.sort_by(f64::total_cmp);
    Ok(median_sorted(&per_sample).expect("reps > 0"))
}

/// Median per-sample detection time of `detector` over `blocks`.
pub fn time_detection(detector: &dyn Detector, blocks: &[ComplexMatrix], reps: usize) -> Result<f64> {
    time_passes(blocks.len(), reps, |i| {
        black_box(detector.detect(black_box(&blocks[i]))?);
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn positive_and_validated() {
        let t = time_passes(50, 3, |i| {
            black_box(i * i);
            Ok(())
        })
        .unwrap();
        assert!(t >= 0.0);
        assert!(time_passes(0, 3, |_| Ok(())).is_err());
        assert!(time_passes(3, 0, |_| Ok(())).is_err());
    }

    #[test]
    fn errors_propagate() {
        let r = time_passes(3, 1, |i| {
            if i == 2 {
                Err(Error::Numerical("boom".into()))
            } else {
                Ok(())
            }
        });
        assert!(r.is_err());
    }
}
