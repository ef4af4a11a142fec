//! Recomputes every stored error rate from the decision sidecar.

use std::collections::HashMap;

use super::record::{DecisionEntry, SweepRecord};
use crate::signal::ActivityVector;
use crate::thresholding::error_rate;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AuditReport {
    pub rows: usize,
    pub recomputed: usize,
    pub flagged: usize,
    pub problems: Vec<String>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.problems.is_empty()
    }
}

type PointKey = (u64, u64);

fn parse_all(bits: &[String]) -> Result<Vec<ActivityVector>, String> {
    bits.iter()
        .map(|b| ActivityVector::from_bit_string(b).map_err(|e| e.to_string()))
        .collect()
}

/// Checks every row's ranges, then recomputes `error_rate` of each unflagged
/// row from its stored decisions and the stored truth; the values must agree
/// bit for bit, and so must the thresholds.
pub fn audit(records: &[SweepRecord], entries: &[DecisionEntry]) -> AuditReport {
    let mut report = AuditReport {
        rows: records.len(),
        ..AuditReport::default()
    };
    let mut truth: HashMap<PointKey, &Vec<String>> = HashMap::new();
    let mut decisions: HashMap<(String, PointKey), (f64, &Vec<String>)> = HashMap::new();
    for e in entries {
        match e {
            DecisionEntry::Truth { axis_value, seed, alpha } => {
                truth.insert((axis_value.to_bits(), *seed), alpha);
            }
            DecisionEntry::Decisions {
                scheme,
                axis_value,
                seed,
                threshold,
                alpha_hat,
            } => {
                decisions.insert((scheme.clone(), (axis_value.to_bits(), *seed)), (*threshold, alpha_hat));
            }
        }
    }

    for (i, rec) in records.iter().enumerate() {
        let row = format!("row {} ({} at {} = {}, seed {})", i + 1, rec.scheme, rec.axis, rec.axis_value, rec.seed);
        if let Err(e) = rec.check() {
            report.problems.push(format!("{row}: {e}"));
            continue;
        }
        if rec.flagged {
            report.flagged += 1;
            continue;
        }
        let point = (rec.axis_value.to_bits(), rec.seed);
        let Some(t) = truth.get(&point) else {
            report.problems.push(format!("{row}: no stored truth"));
            continue;
        };
        let Some(&(threshold, d)) = decisions.get(&(rec.scheme.clone(), point)) else {
            report.problems.push(format!("{row}: no stored decisions"));
            continue;
        };
        if rec.threshold_used != Some(threshold) {
            report.problems.push(format!(
                "{row}: threshold {:?} in CSV, {threshold} in decisions",
                rec.threshold_used
            ));
        }
        let recomputed = parse_all(t).and_then(|t| {
            let d = parse_all(d)?;
            error_rate(&t, &d).map_err(|e| e.to_string())
        });
        match recomputed {
            Ok(e) if Some(e) == rec.error_rate => report.recomputed += 1,
            Ok(e) => report
                .problems
                .push(format!("{row}: error rate {:?} in CSV, {e} recomputed", rec.error_rate)),
            Err(e) => report.problems.push(format!("{row}: {e}")),
        }
    }
    report
}
