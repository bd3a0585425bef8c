use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::equity::{Orientation, PerfMetric};
use crate::error::{Error, Result};
use crate::simtrainer::data::{argmax, Targets, Task};

/// Task metrics the simulated trainer can score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskMetric {
    /// Unweighted accuracy: mean per-class recall.
    #[serde(rename = "UA")]
    Ua,
    /// Weighted accuracy: plain accuracy.
    #[serde(rename = "WA")]
    Wa,
    /// Support-weighted F1.
    #[serde(rename = "F1")]
    F1,
    #[serde(rename = "MAE")]
    Mae,
    /// Pearson correlation.
    #[serde(rename = "Corr")]
    Corr,
    /// Sign agreement between prediction and target (negative vs non-negative).
    #[serde(rename = "Acc2")]
    Acc2,
}

impl TaskMetric {
    pub fn name(&self) -> &'static str {
        match self {
            TaskMetric::Ua => "UA",
            TaskMetric::Wa => "WA",
            TaskMetric::F1 => "F1",
            TaskMetric::Mae => "MAE",
            TaskMetric::Corr => "Corr",
            TaskMetric::Acc2 => "Acc2",
        }
    }

    pub fn orientation(&self) -> Orientation {
        match self {
            TaskMetric::Mae => Orientation::LowerBetter,
            _ => Orientation::HigherBetter,
        }
    }

    pub fn perf_metric(&self) -> PerfMetric {
        PerfMetric::new(self.name(), self.orientation())
    }

    pub fn applies_to(&self, task: Task) -> bool {
        let classification = matches!(task, Task::Classification { .. });
        matches!(self, TaskMetric::Ua | TaskMetric::Wa | TaskMetric::F1) == classification
    }

    pub fn defaults_for(task: Task) -> Vec<TaskMetric> {
        match task {
            Task::Classification { .. } => vec![TaskMetric::Ua, TaskMetric::Wa, TaskMetric::F1],
            Task::Regression => vec![TaskMetric::Mae, TaskMetric::Corr, TaskMetric::Acc2],
        }
    }
}

impl fmt::Display for TaskMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TaskMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_uppercase().as_str() {
            "UA" => TaskMetric::Ua,
            "WA" => TaskMetric::Wa,
            "F1" | "W-F1" => TaskMetric::F1,
            "MAE" => TaskMetric::Mae,
            "CORR" => TaskMetric::Corr,
            "ACC2" | "ACC-2" => TaskMetric::Acc2,
            _ => return Err(Error::config("metrics", format!("unknown metric `{s}`"))),
        })
    }
}

/// Score model outputs (one vector per sample) against targets.
pub fn score(metric: TaskMetric, outputs: &[Vec<f64>], targets: &Targets) -> Result<f64> {
    match (metric, targets) {
        (TaskMetric::Ua | TaskMetric::Wa | TaskMetric::F1, Targets::Classes(y)) => {
            let classes = outputs.first().map_or(0, Vec::len);
            let pred: Vec<usize> = outputs.iter().map(|o| argmax(o)).collect();
            Ok(classification_score(metric, &pred, y, classes))
        }
        (TaskMetric::Mae | TaskMetric::Corr | TaskMetric::Acc2, Targets::Values(y)) => {
            let pred: Vec<f64> = outputs.iter().map(|o| o[0]).collect();
            Ok(regression_score(metric, &pred, y))
        }
        _ => Err(Error::config(
            "metrics",
            format!("metric {metric} does not apply to this task"),
        )),
    }
}

fn classification_score(metric: TaskMetric, pred: &[usize], y: &[usize], classes: usize) -> f64 {
    let mut tp = vec![0.0; classes];
    let mut support = vec![0.0; classes];
    let mut predicted = vec![0.0; classes];
    for (&p, &t) in pred.iter().zip(y) {
        support[t] += 1.0;
        predicted[p] += 1.0;
        if p == t {
            tp[t] += 1.0;
        }
    }
    let n = y.len() as f64;
    match metric {
        TaskMetric::Wa => tp.iter().sum::<f64>() / n,
        TaskMetric::Ua => {
            let present: Vec<usize> = (0..classes).filter(|&c| support[c] > 0.0).collect();
            present.iter().map(|&c| tp[c] / support[c]).sum::<f64>() / present.len() as f64
        }
        TaskMetric::F1 => (0..classes)
            .filter(|&c| support[c] > 0.0)
            .map(|c| {
                let denom = support[c] + predicted[c];
                let f1 = if denom > 0.0 { 2.0 * tp[c] / denom } else { 0.0 };
                f1 * support[c] / n
            })
            .sum(),
        _ => unreachable!(),
    }
}

fn regression_score(metric: TaskMetric, pred: &[f64], y: &[f64]) -> f64 {
    let n = y.len() as f64;
    match metric {
        TaskMetric::Mae => pred.iter().zip(y).map(|(p, t)| (p - t).abs()).sum::<f64>() / n,
        TaskMetric::Acc2 => {
            pred.iter().zip(y).filter(|(p, t)| (**p >= 0.0) == (**t >= 0.0)).count() as f64 / n
        }
        TaskMetric::Corr => {
            let mp = pred.iter().sum::<f64>() / n;
            let my = y.iter().sum::<f64>() / n;
            let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
            for (p, t) in pred.iter().zip(y) {
                sxy += (p - mp) * (t - my);
                sxx += (p - mp).powi(2);
                syy += (t - my).powi(2);
            }
            // constant predictions carry no correlation
            if sxx == 0.0 || syy == 0.0 {
                0.0
            } else {
                sxy / (sxx * syy).sqrt()
            }
        }
        _ => unreachable!(),
    }
}
