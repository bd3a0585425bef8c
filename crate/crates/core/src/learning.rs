//! Modality Learning Index.
//!
//! `G_m(t)` is the mean, over model modules, of the L2 norm of the gradient
//! of the modality-restricted loss `L_m` at step `t`. MLI measures how far the
//! per-modality step-to-step changes `delta_m(t) = |G_m(t) - G_m(t-1)|`
//! stray from their cross-modal mean, normalised by the largest mean change
//! and taken to the power `1/M`.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `L_m`: mean loss over the samples in which the modality is observed.
///
/// Returns `Ok(None)` when no sample observes the modality.
pub fn modality_loss(per_sample_losses: &[f64], mask_column: &[u8]) -> Result<Option<f64>> {
    if per_sample_losses.len() != mask_column.len() {
        return Err(Error::Dimension {
            context: "losses vs mask column",
            expected: per_sample_losses.len(),
            got: mask_column.len(),
        });
    }
    if per_sample_losses.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (sum, count) = per_sample_losses
        .iter()
        .zip(mask_column)
        .filter(|(_, &e)| e != 0)
        .fold((0.0, 0usize), |(s, c), (l, _)| (s + l, c + 1));
    Ok((count > 0).then(|| sum / count as f64))
}

/// One logged norm `||dL_m / d theta_k||_2` at an optimizer step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradSample {
    pub step: u64,
    pub modality: usize,
    pub module: usize,
    pub grad_l2: f64,
}

/// `G_m(t)` from the per-module norms of one `(step, modality)` cell.
///
/// `norms` holds `(module, norm)` pairs and must cover every module index
/// below `module_count` exactly once.
pub fn aggregate_g(norms: &[(usize, f64)], module_count: usize) -> Result<f64> {
    if module_count == 0 {
        return Err(Error::IncompleteTrace("module count must be positive".into()));
    }
    let mut seen = vec![false; module_count];
    let mut total = 0.0;
    for &(k, v) in norms {
        if k >= module_count {
            return Err(Error::IncompleteTrace(format!(
                "module {k} out of range for {module_count} modules"
            )));
        }
        if std::mem::replace(&mut seen[k], true) {
            return Err(Error::IncompleteTrace(format!("module {k} reported twice")));
        }
        total += v;
    }
    if let Some(k) = seen.iter().position(|s| !s) {
        return Err(Error::IncompleteTrace(format!("module {k} missing")));
    }
    Ok(total / module_count as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TraceWarning {
    /// Step numbering jumped from `after` to `next`; steps were re-indexed.
    StepGap { after: u64, next: u64 },
    /// Undefined cells of a modality were filled from neighbouring steps.
    Imputed { modality: usize, cells: usize },
}

impl std::fmt::Display for TraceWarning {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TraceWarning::StepGap { after, next } => {
                write!(f, "step ids jump from {after} to {next}; steps re-indexed")
            }
            TraceWarning::Imputed { modality, cells } => {
                write!(f, "modality {modality}: {cells} undefined steps filled from neighbours")
            }
        }
    }
}

/// `G_m(t)` on a contiguous step grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradTrace {
    modalities: usize,
    /// Step ids as logged, one per row.
    source_steps: Vec<u64>,
    values: Vec<Vec<f64>>,
    /// Whether `L_m` was defined at the step, before imputation.
    defined: Vec<Vec<bool>>,
}

impl GradTrace {
    /// A fully defined trace from rows of `G` values (one row per step).
    pub fn from_rows(values: Vec<Vec<f64>>) -> Result<Self> {
        let modalities = values.first().map_or(0, Vec::len);
        let cells = values
            .iter()
            .map(|row| {
                if row.len() != modalities {
                    return Err(Error::Dimension {
                        context: "trace row width",
                        expected: modalities,
                        got: row.len(),
                    });
                }
                Ok(row.iter().map(|&v| Some(v)).collect::<Vec<_>>())
            })
            .collect::<Result<Vec<_>>>()?;
        let steps = (1..=values.len() as u64).collect();
        Self::from_cells(modalities, steps, cells).map(|(t, _)| t)
    }

    /// Build from per-modality series `series[m][t]`.
    pub fn from_series(series: &[Vec<f64>]) -> Result<Self> {
        let t = series.first().map_or(0, Vec::len);
        if let Some(s) = series.iter().find(|s| s.len() != t) {
            return Err(Error::Dimension {
                context: "series length",
                expected: t,
                got: s.len(),
            });
        }
        Self::from_rows((0..t).map(|i| series.iter().map(|s| s[i]).collect()).collect())
    }

    fn from_cells(
        modalities: usize,
        source_steps: Vec<u64>,
        cells: Vec<Vec<Option<f64>>>,
    ) -> Result<(Self, Vec<TraceWarning>)> {
        let mut warnings = Vec::new();
        for row in &cells {
            for v in row.iter().flatten() {
                if !v.is_finite() || *v < 0.0 {
                    return Err(Error::InvalidTrace(format!(
                        "gradient magnitude {v} is negative or not finite"
                    )));
                }
            }
        }
        let t = cells.len();
        let mut values = vec![vec![0.0; modalities]; t];
        let defined: Vec<Vec<bool>> = cells
            .iter()
            .map(|row| row.iter().map(Option::is_some).collect())
            .collect();
        for m in 0..modalities {
            let first = cells.iter().find_map(|row| row[m]);
            let Some(first) = first else {
                if t == 0 {
                    continue;
                }
                return Err(Error::InvalidTrace(format!(
                    "modality {m} is undefined at every step"
                )));
            };
            let mut last = first;
            let mut imputed = 0;
            for (row, out) in cells.iter().zip(values.iter_mut()) {
                match row[m] {
                    Some(v) => last = v,
                    None => imputed += 1,
                }
                out[m] = last;
            }
            if imputed > 0 {
                warnings.push(TraceWarning::Imputed {
                    modality: m,
                    cells: imputed,
                });
            }
        }
        Ok((
            GradTrace {
                modalities,
                source_steps,
                values,
                defined,
            },
            warnings,
        ))
    }

    pub fn steps(&self) -> usize {
        self.values.len()
    }

    pub fn modalities(&self) -> usize {
        self.modalities
    }

    pub fn source_steps(&self) -> &[u64] {
        &self.source_steps
    }

    /// `G` at step index `t` (0-based), modality `m`.
    pub fn g(&self, t: usize, m: usize) -> f64 {
        self.values[t][m]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn is_defined(&self, t: usize, m: usize) -> bool {
        self.defined[t][m]
    }

    /// Every `stride`-th step starting from the first.
    pub fn strided(&self, stride: usize) -> GradTrace {
        let stride = stride.max(1);
        fn keep<T: Clone>(v: &[T], stride: usize) -> Vec<T> {
            v.iter().step_by(stride).cloned().collect()
        }
        GradTrace {
            modalities: self.modalities,
            source_steps: self.source_steps.iter().step_by(stride).copied().collect(),
            values: keep(&self.values, stride),
            defined: keep(&self.defined, stride),
        }
    }

    /// Mean of `G` over consecutive blocks of `steps_per_epoch` steps; a
    /// trailing partial block is averaged over its own length.
    pub fn epoch_averaged(&self, steps_per_epoch: usize) -> GradTrace {
        let size = steps_per_epoch.max(1);
        let mut values = Vec::new();
        let mut defined = Vec::new();
        let mut source_steps = Vec::new();
        for (i, (chunk, flags)) in self.values.chunks(size).zip(self.defined.chunks(size)).enumerate() {
            let n = chunk.len() as f64;
            values.push(
                (0..self.modalities)
                    .map(|m| chunk.iter().map(|r| r[m]).sum::<f64>() / n)
                    .collect(),
            );
            defined.push(
                (0..self.modalities)
                    .map(|m| flags.iter().any(|r| r[m]))
                    .collect(),
            );
            source_steps.push(i as u64 + 1);
        }
        GradTrace {
            modalities: self.modalities,
            source_steps,
            values,
            defined,
        }
    }

    /// Per-modality count of steps where `L_m` was defined.
    pub fn defined_counts(&self) -> Vec<usize> {
        (0..self.modalities)
            .map(|m| self.defined.iter().filter(|r| r[m]).count())
            .collect()
    }
}

/// Group raw per-module samples into a trace.
///
/// Steps are sorted and re-indexed contiguously; a gap in the logged step
/// numbers is reported as a warning. A `(step, modality)` cell with no
/// samples is undefined and imputed from the previous defined step (or the
/// next one at the start of the trace). Identical duplicate samples are
/// tolerated; conflicting ones are rejected.
pub fn assemble_trace(
    samples: &[GradSample],
    modalities: usize,
    module_count: usize,
) -> Result<(GradTrace, Vec<TraceWarning>)> {
    let mut cells: BTreeMap<(u64, usize), BTreeMap<usize, f64>> = BTreeMap::new();
    let mut steps = BTreeSet::new();
    for s in samples {
        if s.modality >= modalities {
            return Err(Error::InvalidTrace(format!(
                "modality {} out of range for {modalities} modalities",
                s.modality
            )));
        }
        if s.module >= module_count {
            return Err(Error::InvalidTrace(format!(
                "module {} out of range for {module_count} modules",
                s.module
            )));
        }
        if !s.grad_l2.is_finite() || s.grad_l2 < 0.0 {
            return Err(Error::InvalidTrace(format!(
                "grad_l2 {} at step {} is negative or not finite",
                s.grad_l2, s.step
            )));
        }
        steps.insert(s.step);
        let cell = cells.entry((s.step, s.modality)).or_default();
        if let Some(&prev) = cell.get(&s.module) {
            if prev.to_bits() != s.grad_l2.to_bits() {
                return Err(Error::DuplicateSample {
                    step: s.step,
                    modality: s.modality,
                    module: s.module,
                });
            }
            continue;
        }
        cell.insert(s.module, s.grad_l2);
    }
    let grid = steps
        .iter()
        .map(|&step| {
            (0..modalities)
                .map(|m| match cells.get(&(step, m)) {
                    None => Ok(None),
                    Some(norms) => {
                        let pairs: Vec<(usize, f64)> = norms.iter().map(|(&k, &v)| (k, v)).collect();
                        aggregate_g(&pairs, module_count)
                            .map(Some)
                            .map_err(|e| match e {
                                Error::IncompleteTrace(msg) => Error::IncompleteTrace(format!(
                                    "step {step}, modality {m}: {msg}"
                                )),
                                other => other,
                            })
                    }
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    finish(modalities, steps, grid)
}

/// Group pre-aggregated `(step, modality, G)` rows into a trace.
pub fn assemble_aggregated(
    rows: &[(u64, usize, f64)],
    modalities: usize,
) -> Result<(GradTrace, Vec<TraceWarning>)> {
    let samples: Vec<GradSample> = rows
        .iter()
        .map(|&(step, modality, g)| GradSample {
            step,
            modality,
            module: 0,
            grad_l2: g,
        })
        .collect();
    assemble_trace(&samples, modalities, 1)
}

fn finish(
    modalities: usize,
    steps: BTreeSet<u64>,
    grid: Vec<Vec<Option<f64>>>,
) -> Result<(GradTrace, Vec<TraceWarning>)> {
    let steps: Vec<u64> = steps.into_iter().collect();
    let mut warnings: Vec<TraceWarning> = steps
        .windows(2)
        .filter(|w| w[1] != w[0] + 1)
        .map(|w| TraceWarning::StepGap {
            after: w[0],
            next: w[1],
        })
        .collect();
    let (trace, more) = GradTrace::from_cells(modalities, steps, grid)?;
    warnings.extend(more);
    Ok((trace, warnings))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSeries {
    /// `delta[t][m]` for `t = 2..T`, stored from index 0.
    pub delta: Vec<Vec<f64>>,
    pub mean_delta: Vec<f64>,
}

pub fn delta_series(trace: &GradTrace) -> Result<DeltaSeries> {
    if trace.steps() < 2 {
        return Err(Error::InsufficientTrace(trace.steps()));
    }
    let m = trace.modalities as f64;
    let delta: Vec<Vec<f64>> = trace
        .values
        .windows(2)
        .map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| (b - a).abs()).collect())
        .collect();
    let mean_delta = delta.iter().map(|row| row.iter().sum::<f64>() / m).collect();
    Ok(DeltaSeries { delta, mean_delta })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MliResult {
    pub value: f64,
    /// The bracketed quantity before the `1/M` root.
    pub raw_inner: f64,
    /// Set when `raw_inner^(1/M)` exceeded 1 and was clamped.
    pub clamped: bool,
    pub steps: usize,
    pub modalities: usize,
    pub max_mean_delta: f64,
}

pub fn mli(trace: &GradTrace) -> Result<MliResult> {
    if trace.modalities < 2 {
        return Err(Error::TooFewModalities {
            min: 2,
            got: trace.modalities,
        });
    }
    let DeltaSeries { delta, mean_delta } = delta_series(trace)?;
    let max_mean_delta = mean_delta.iter().copied().fold(0.0, f64::max);
    let t = trace.steps();
    let m = trace.modalities;
    if max_mean_delta == 0.0 {
        return Ok(MliResult {
            value: 0.0,
            raw_inner: 0.0,
            clamped: false,
            steps: t,
            modalities: m,
            max_mean_delta,
        });
    }
    let dispersion: f64 = delta
        .iter()
        .zip(&mean_delta)
        .map(|(row, mean)| {
            // equal changes are exactly balanced; the rounded mean need not be
            if row.windows(2).all(|w| w[0] == w[1]) {
                0.0
            } else {
                row.iter().map(|d| (mean - d).abs()).sum::<f64>()
            }
        })
        .sum();
    let raw_inner = dispersion / (max_mean_delta * (t - 1) as f64 * m as f64);
    let rooted = raw_inner.powf(1.0 / m as f64);
    Ok(MliResult {
        value: rooted.clamp(0.0, 1.0),
        raw_inner,
        clamped: rooted > 1.0,
        steps: t,
        modalities: m,
        max_mean_delta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn modality_loss_examples() {
        assert_eq!(modality_loss(&[1.0, 2.0, 3.0], &[1, 1, 1]).unwrap(), Some(2.0));
        assert_eq!(modality_loss(&[1.0, 2.0, 3.0, 4.0], &[1, 0, 1, 0]).unwrap(), Some(2.0));
        assert_eq!(modality_loss(&[1.0, 2.0], &[0, 0]).unwrap(), None);
        assert!(modality_loss(&[1.0, 2.0], &[0]).is_err());
    }

    #[test]
    fn aggregate_examples() {
        assert_eq!(aggregate_g(&[(0, 0.0), (1, 0.0), (2, 0.0)], 3).unwrap(), 0.0);
        assert_eq!(aggregate_g(&[(1, 2.0), (0, 1.0)], 2).unwrap(), 1.5);
        assert!(aggregate_g(&[(0, 1.0)], 2).is_err());
        assert!(aggregate_g(&[(0, 1.0), (0, 1.0)], 2).is_err());
        assert!(aggregate_g(&[(0, 1.0), (2, 1.0)], 2).is_err());
    }

    fn hand_trace() -> GradTrace {
        GradTrace::from_series(&[vec![1.0, 2.0, 4.0], vec![1.0, 1.0, 1.0]]).unwrap()
    }

    #[test]
    fn delta_hand_example() {
        let d = delta_series(&hand_trace()).unwrap();
        assert_eq!(d.delta, vec![vec![1.0, 0.0], vec![2.0, 0.0]]);
        assert_eq!(d.mean_delta, vec![0.5, 1.0]);
    }

    #[test]
    fn mli_hand_example() {
        let r = mli(&hand_trace()).unwrap();
        assert_abs_diff_eq!(r.raw_inner, 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(r.value, 0.75f64.sqrt(), epsilon = 1e-15);
        assert!(!r.clamped);
        assert_eq!(r.max_mean_delta, 1.0);
    }

    #[test]
    fn mli_identical_and_static() {
        let s = vec![0.3, 1.7, 0.2, 5.0];
        let r = mli(&GradTrace::from_series(&[s.clone(), s.clone(), s]).unwrap()).unwrap();
        assert_eq!(r.value, 0.0);
        let r = mli(&GradTrace::from_series(&[vec![0.0; 4], vec![0.0; 4]]).unwrap()).unwrap();
        assert_eq!(r.value, 0.0);
        assert!(!r.clamped);
    }

    #[test]
    fn mli_needs_two_steps() {
        let t = GradTrace::from_series(&[vec![1.0], vec![2.0]]).unwrap();
        assert!(matches!(mli(&t), Err(Error::InsufficientTrace(1))));
    }

    #[test]
    fn rejects_negative() {
        assert!(matches!(
            GradTrace::from_series(&[vec![1.0, -1.0], vec![1.0, 1.0]]),
            Err(Error::InvalidTrace(_))
        ));
        assert!(GradTrace::from_series(&[vec![1.0, f64::NAN], vec![1.0, 1.0]]).is_err());
    }

    #[test]
    fn clamp_can_trigger_for_three_modalities() {
        // one modality moves while two stay put: raw_inner = 4/3
        let t = GradTrace::from_series(&[vec![0.0, 1.0], vec![0.0, 0.0], vec![0.0, 0.0]]).unwrap();
        let r = mli(&t).unwrap();
        assert_abs_diff_eq!(r.raw_inner, 4.0 / 3.0, epsilon = 1e-12);
        assert!(r.clamped);
        assert_eq!(r.value, 1.0);
    }

    fn s(step: u64, modality: usize, module: usize, grad_l2: f64) -> GradSample {
        GradSample { step, modality, module, grad_l2 }
    }

    #[test]
    fn assembly_is_order_independent() {
        let mut samples = vec![];
        for step in 1..=4 {
            for m in 0..2 {
                for k in 0..3 {
                    samples.push(s(step, m, k, (step * 7 + m as u64 * 3 + k as u64) as f64 / 10.0));
                }
            }
        }
        let (a, wa) = assemble_trace(&samples, 2, 3).unwrap();
        samples.reverse();
        samples.swap(0, 5);
        let (b, wb) = assemble_trace(&samples, 2, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(wa, wb);
        assert!(wa.is_empty());
        assert_abs_diff_eq!(a.g(0, 1), (1.0 + 1.1 + 1.2) / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn assembly_reindexes_gaps() {
        let samples = [s(1, 0, 0, 1.0), s(1, 1, 0, 1.0), s(2, 0, 0, 2.0), s(2, 1, 0, 1.0), s(4, 0, 0, 4.0), s(4, 1, 0, 1.0)];
        let (t, w) = assemble_trace(&samples, 2, 1).unwrap();
        assert_eq!(t.steps(), 3);
        assert_eq!(t.source_steps(), &[1, 2, 4]);
        assert_eq!(w, vec![TraceWarning::StepGap { after: 2, next: 4 }]);
        assert_eq!(mli(&t).unwrap(), mli(&hand_trace()).unwrap());
    }

    #[test]
    fn assembly_imputes_undefined_cells() {
        let samples = [s(1, 0, 0, 1.0), s(2, 0, 0, 2.0), s(2, 1, 0, 5.0), s(3, 0, 0, 3.0)];
        let (t, w) = assemble_trace(&samples, 2, 1).unwrap();
        assert_eq!(t.rows(), &[vec![1.0, 5.0], vec![2.0, 5.0], vec![3.0, 5.0]]);
        assert!(!t.is_defined(0, 1) && t.is_defined(1, 1) && !t.is_defined(2, 1));
        assert_eq!(w, vec![TraceWarning::Imputed { modality: 1, cells: 2 }]);
        assert_eq!(t.defined_counts(), vec![3, 1]);
    }

    #[test]
    fn assembly_errors() {
        assert!(matches!(
            assemble_trace(&[s(1, 0, 0, 1.0), s(1, 0, 0, 2.0)], 1, 1),
            Err(Error::DuplicateSample { step: 1, modality: 0, module: 0 })
        ));
        assert!(assemble_trace(&[s(1, 0, 0, 1.0), s(1, 0, 0, 1.0), s(1, 1, 0, 1.0)], 2, 1).is_ok());
        assert!(matches!(
            assemble_trace(&[s(1, 0, 0, 1.0), s(1, 1, 0, 1.0)], 2, 2),
            Err(Error::IncompleteTrace(_))
        ));
        assert!(matches!(
            assemble_trace(&[s(1, 0, 0, 1.0), s(2, 0, 0, 1.0)], 2, 1),
            Err(Error::InvalidTrace(_))
        ));
        let single = assemble_trace(&[s(5, 0, 0, 1.0), s(5, 1, 0, 1.0)], 2, 1).unwrap().0;
        assert!(matches!(mli(&single), Err(Error::InsufficientTrace(1))));
    }

    #[test]
    fn stride_and_epoch_average() {
        let t = GradTrace::from_series(&[vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![0.0; 5]]).unwrap();
        assert_eq!(t.strided(2).rows(), &[vec![1.0, 0.0], vec![3.0, 0.0], vec![5.0, 0.0]]);
        assert_eq!(t.epoch_averaged(2).rows(), &[vec![1.5, 0.0], vec![3.5, 0.0], vec![5.0, 0.0]]);
    }

    fn trace_strategy() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (2usize..5, 2usize..10).prop_flat_map(|(m, t)| {
            proptest::collection::vec(proptest::collection::vec(0.0f64..10.0, t), m)
        })
    }

    proptest! {
        #[test]
        fn bounded(series in trace_strategy()) {
            let r = mli(&GradTrace::from_series(&series).unwrap()).unwrap();
            prop_assert!((0.0..=1.0).contains(&r.value));
            let m = series.len() as f64;
            prop_assert!(r.raw_inner <= 2.0 * (m - 1.0) / m + 1e-12);
        }

        #[test]
        fn scale_invariant(series in trace_strategy(), k in 0.01f64..100.0) {
            let a = mli(&GradTrace::from_series(&series).unwrap()).unwrap();
            let scaled: Vec<Vec<f64>> = series.iter().map(|s| s.iter().map(|v| v * k).collect()).collect();
            let b = mli(&GradTrace::from_series(&scaled).unwrap()).unwrap();
            prop_assert!((a.value - b.value).abs() < 1e-12);
        }

        #[test]
        fn permutation_and_reversal_invariant(series in trace_strategy(), rot in 0usize..4) {
            let a = mli(&GradTrace::from_series(&series).unwrap()).unwrap();
            let mut p = series.clone();
            let len = p.len();
            p.rotate_left(rot % len);
            let b = mli(&GradTrace::from_series(&p).unwrap()).unwrap();
            prop_assert!((a.value - b.value).abs() < 1e-12);
            let rev: Vec<Vec<f64>> = series.iter().map(|s| s.iter().rev().copied().collect()).collect();
            let c = mli(&GradTrace::from_series(&rev).unwrap()).unwrap();
            prop_assert!((a.value - c.value).abs() < 1e-12);
        }
    }
}
