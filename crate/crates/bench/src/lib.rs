//! Inputs shared by the criterion benches.

use std::collections::BTreeMap;

use missdiag_core::equity::{AblationTable, Orientation, PerfMetric};
use missdiag_core::learning::GradTrace;
use missdiag_core::protocol::{MaskPattern, RateVector};

/// Rates spread evenly over `[0.1, 0.7]`.
pub fn spread_rates(m: usize) -> RateVector {
    let rates = (0..m).map(|j| 0.1 + 0.6 * j as f64 / (m.max(2) - 1) as f64).collect();
    RateVector::from_rates(rates).expect("valid rates")
}

/// Complete ablation table where each observed modality adds a fixed gain.
pub fn additive_table(m: usize) -> AblationTable {
    let scores: BTreeMap<MaskPattern, f64> = MaskPattern::all(m)
        .map(|p| {
            let gain: f64 = p.bits().enumerate().filter(|(_, b)| *b).map(|(j, _)| 0.05 * (j + 1) as f64).sum();
            (p, 0.3 + gain + 0.001 * (p.observed_count() as f64).sin())
        })
        .collect();
    AblationTable::from_scores(m, PerfMetric::new("score", Orientation::HigherBetter), &scores)
        .expect("complete table")
}

/// Deterministic `steps x m` gradient-norm grid.
pub fn wavy_trace(steps: usize, m: usize) -> GradTrace {
    let rows = (0..steps)
        .map(|t| (0..m).map(|j| 1.0 + ((t * (j + 1)) as f64 * 0.37).sin().abs()).collect())
        .collect();
    GradTrace::from_rows(rows).expect("valid trace")
}
