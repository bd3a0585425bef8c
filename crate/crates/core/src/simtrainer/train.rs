use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::equity::{mei_entries, AblationTable, MeiEntry, MeiMode, TableMei, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::learning::{assemble_trace, mli, GradSample, GradTrace, MliResult, TraceWarning};
use crate::protocol::{generate_mask_matrix, MaskMatrix, MaskPattern, RateVector};
use crate::report::sha256_hex;
use crate::rng::{self, Domain};
use crate::simtrainer::data::{gen_synthetic, Dataset, SynthSpec, Task};
use crate::simtrainer::metrics::{score, TaskMetric};
use crate::simtrainer::model::{loss_and_grad, ToyModel};

fn one() -> usize {
    1
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

/// Optimisation settings shared by every run of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub hidden: usize,
    pub seed: u64,
    /// Validation ablations run every this many epochs.
    #[serde(default = "one")]
    pub mei_epoch_stride: usize,
    /// Modality gradients are logged every this many steps.
    #[serde(default = "one")]
    pub grad_log_stride: usize,
    /// MLI is computed on every this many logged steps.
    #[serde(default = "one")]
    pub mli_stride: usize,
    /// Draw fresh training masks every epoch instead of fixing them per sample.
    #[serde(default)]
    pub resample_masks_per_epoch: bool,
    /// Empty means the task's default metrics.
    #[serde(default)]
    pub metrics: Vec<TaskMetric>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

impl TrainSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("hidden", self.hidden),
            ("mei_epoch_stride", self.mei_epoch_stride),
            ("grad_log_stride", self.grad_log_stride),
            ("mli_stride", self.mli_stride),
        ];
        for (field, v) in positive {
            if v == 0 {
                return Err(Error::config(format!("simulation.train.{field}"), "must be positive"));
            }
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::config("simulation.train.learning_rate", "must be finite and nonnegative"));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::config("simulation.train.epsilon", "must be positive"));
        }
        Ok(())
    }

    pub fn metrics_for(&self, task: Task) -> Vec<TaskMetric> {
        if self.metrics.is_empty() {
            TaskMetric::defaults_for(task)
        } else {
            self.metrics.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(flatten)]
    pub settings: TrainSettings,
    /// Missing-rate protocol for the training masks. Evaluation ablations
    /// always use clean data.
    pub protocol: RateVector,
}

/// What one optimizer step logged.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepLog {
    pub step: u64,
    pub loss: f64,
    /// `L_m`, or `None` when no sample in the batch observed the modality.
    pub modality_losses: Vec<Option<f64>>,
    pub grads: Vec<GradSample>,
}

/// One plain gradient-descent step on the mean task loss of `batch`.
///
/// When `log_grads` is set, the gradient of every defined `L_m` is also
/// computed at the pre-update parameters and its per-module L2 norms are
/// logged. These diagnostic passes never touch the parameters.
#[allow(clippy::too_many_arguments)]
pub fn train_step(
    model: &mut ToyModel,
    task: Task,
    data: &Dataset,
    batch: &[usize],
    masks: &[MaskPattern],
    learning_rate: f64,
    step: u64,
    log_grads: bool,
) -> Result<StepLog> {
    if batch.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if masks.len() < data.len() {
        return Err(Error::Dimension {
            context: "mask rows",
            expected: data.len(),
            got: masks.len(),
        });
    }
    model.forward(&data.sample(batch[0]), &masks[batch[0]])?;
    let n_mod = model.modalities();
    let mut acts = Vec::with_capacity(batch.len());
    let mut losses = Vec::with_capacity(batch.len());
    let mut d_out = Vec::with_capacity(batch.len());
    for &i in batch {
        let x = data.sample(i);
        let a = model.activations(&x, &masks[i]);
        let (l, g) = loss_and_grad(task, &a.output, data.target(i));
        acts.push(a);
        losses.push(l);
        d_out.push(g);
    }

    let weighted_grad = |weights: &[f64]| {
        let mut grad = model.zeros_like();
        for (j, &i) in batch.iter().enumerate() {
            if weights[j] != 0.0 {
                model.backward_into(&data.sample(i), &masks[i], &acts[j], &d_out[j], weights[j], &mut grad);
            }
        }
        grad
    };

    let mut modality_losses = Vec::with_capacity(n_mod);
    let mut grads = Vec::new();
    for m in 0..n_mod {
        let observed: Vec<f64> = batch
            .iter()
            .map(|&i| if masks[i].is_observed(m) { 1.0 } else { 0.0 })
            .collect();
        let count: f64 = observed.iter().sum();
        if count == 0.0 {
            modality_losses.push(None);
            continue;
        }
        let lm = observed.iter().zip(&losses).map(|(e, l)| e * l).sum::<f64>() / count;
        modality_losses.push(Some(lm));
        if log_grads {
            let weights: Vec<f64> = observed.iter().map(|e| e / count).collect();
            let g = weighted_grad(&weights);
            grads.extend(g.module_norms().into_iter().enumerate().map(|(k, norm)| GradSample {
                step,
                modality: m,
                module: k,
                grad_l2: norm,
            }));
        }
    }

    let uniform = vec![1.0 / batch.len() as f64; batch.len()];
    let grad = weighted_grad(&uniform);
    model.axpy(-learning_rate, &grad);

    Ok(StepLog {
        step,
        loss: losses.iter().sum::<f64>() / batch.len() as f64,
        modality_losses,
        grads,
    })
}

/// `sum_j weights[j] * loss(batch[j])` and its gradient, by backpropagation.
///
/// With uniform weights this is the update objective; with weights
/// `1/n_m` on samples observing modality `m` it is `L_m`.
pub fn weighted_loss_and_grad(
    model: &ToyModel,
    task: Task,
    data: &Dataset,
    batch: &[usize],
    masks: &[MaskPattern],
    weights: &[f64],
) -> Result<(f64, ToyModel)> {
    if weights.len() != batch.len() {
        return Err(Error::Dimension {
            context: "loss weights",
            expected: batch.len(),
            got: weights.len(),
        });
    }
    let mut grad = model.zeros_like();
    let mut total = 0.0;
    for (&i, &w) in batch.iter().zip(weights) {
        let x = data.sample(i);
        let pattern = masks.get(i).ok_or(Error::Dimension {
            context: "mask rows",
            expected: i + 1,
            got: masks.len(),
        })?;
        model.forward(&x, pattern)?;
        let a = model.activations(&x, pattern);
        let (l, g) = loss_and_grad(task, &a.output, data.target(i));
        total += w * l;
        model.backward_into(&x, pattern, &a, &g, w, &mut grad);
    }
    Ok((total, grad))
}

/// `L_m` over `batch` and its gradient, or `None` when no sample in the batch
/// observes modality `m`.
pub fn modality_loss_and_grad(
    model: &ToyModel,
    task: Task,
    data: &Dataset,
    batch: &[usize],
    masks: &[MaskPattern],
    m: usize,
) -> Result<Option<(f64, ToyModel)>> {
    let observed: Vec<f64> = batch
        .iter()
        .map(|&i| if masks[i].is_observed(m) { 1.0 } else { 0.0 })
        .collect();
    let count: f64 = observed.iter().sum();
    if count == 0.0 {
        return Ok(None);
    }
    let weights: Vec<f64> = observed.iter().map(|e| e / count).collect();
    weighted_loss_and_grad(model, task, data, batch, masks, &weights).map(Some)
}

/// Model outputs on the clean set with modalities outside `pattern` zeroed.
pub fn predict_under(model: &ToyModel, data: &Dataset, pattern: &MaskPattern) -> Result<Vec<Vec<f64>>> {
    (0..data.len())
        .map(|i| model.forward(&data.sample(i), pattern))
        .collect()
}

pub fn evaluate_under_combination(
    model: &ToyModel,
    data: &Dataset,
    pattern: &MaskPattern,
    metric: TaskMetric,
) -> Result<f64> {
    score(metric, &predict_under(model, data, pattern)?, data.targets())
}

/// Ablation tables for every metric, evaluating all `2^M - 1` combinations.
/// Combinations are evaluated in parallel; results do not depend on the
/// schedule.
pub fn ablation_tables(model: &ToyModel, data: &Dataset, metrics: &[TaskMetric]) -> Result<Vec<AblationTable>> {
    let m = model.modalities();
    let patterns: Vec<MaskPattern> = MaskPattern::all(m).collect();
    let scores: Vec<Vec<f64>> = patterns
        .par_iter()
        .map(|p| {
            let out = predict_under(model, data, p)?;
            metrics.iter().map(|&k| score(k, &out, data.targets())).collect()
        })
        .collect::<Result<_>>()?;
    metrics
        .iter()
        .enumerate()
        .map(|(j, metric)| {
            let map = patterns.iter().zip(&scores).map(|(p, s)| (*p, s[j])).collect();
            AblationTable::from_scores(m, metric.perf_metric(), &map)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub step: u64,
    pub epoch: usize,
    pub loss: f64,
    pub modality_losses: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochEval {
    pub epoch: usize,
    pub mean_train_loss: f64,
    pub tables: Vec<AblationTable>,
    pub mei: Vec<MeiEntry>,
}

/// Everything a simulated run produces. Identical inputs give an identical
/// log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunLog {
    pub config_hash: String,
    pub synth_seed: u64,
    pub train_seed: u64,
    pub modality_names: Vec<String>,
    pub module_count: usize,
    /// Mean training loss of the initial model over the whole training set.
    pub initial_loss: f64,
    pub steps: Vec<StepRecord>,
    pub grad_samples: Vec<GradSample>,
    pub validation: Vec<EpochEval>,
    pub test_tables: Vec<AblationTable>,
    pub mei: Vec<MeiEntry>,
    pub mli: Option<MliResult>,
    /// Why MLI could not be computed, when it could not.
    pub mli_error: Option<String>,
    pub trace_warnings: Vec<TraceWarning>,
    #[serde(skip)]
    pub train_masks: MaskMatrix,
    #[serde(skip)]
    pub trace: Option<GradTrace>,
    #[serde(skip)]
    pub model: ToyModel,
}

impl RunLog {
    pub fn mei_for(&self, metric: &str, mode: MeiMode) -> Option<&TableMei> {
        self.mei
            .iter()
            .find(|e| e.metric == metric && e.mode == mode)
            .and_then(|e| e.mei.as_ref())
    }
}

pub fn config_hash(spec: &SynthSpec, config: &TrainConfig) -> String {
    let echo = serde_json::json!({ "synth": spec, "train": config });
    sha256_hex(echo.to_string().as_bytes())
}

fn epoch_mask_seed(seed: u64, epoch: usize) -> u64 {
    seed ^ (epoch as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// Train on synthetic data under the configured missingness protocol and
/// compute MEI and MLI diagnostics.
pub fn run_experiment(spec: &SynthSpec, config: &TrainConfig) -> Result<RunLog> {
    spec.validate()?;
    let settings = &config.settings;
    settings.validate()?;
    let n_mod = spec.modalities();
    if config.protocol.len() != n_mod {
        return Err(Error::config(
            "protocol",
            format!("{} rates for {n_mod} modalities", config.protocol.len()),
        ));
    }
    let metrics = settings.metrics_for(spec.task);
    if let Some(bad) = metrics.iter().find(|m| !m.applies_to(spec.task)) {
        return Err(Error::config("simulation.train.metrics", format!("{bad} does not apply to this task")));
    }

    let data = gen_synthetic(spec)?;
    let n = data.train.len();
    let mut model = ToyModel::init(&spec.dims, settings.hidden, spec.task.output_dim(), settings.seed);
    let mut masks = generate_mask_matrix(&config.protocol, n, settings.seed)?;
    let first_masks = masks.clone();

    let initial_loss = (0..n)
        .map(|i| {
            let a = model.activations(&data.train.sample(i), &masks.row(i));
            loss_and_grad(spec.task, &a.output, data.train.target(i)).0
        })
        .sum::<f64>()
        / n as f64;

    let mut steps = Vec::new();
    let mut grad_samples = Vec::new();
    let mut validation = Vec::new();
    let mut step = 0u64;
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 1..=settings.epochs {
        if settings.resample_masks_per_epoch && epoch > 1 {
            masks = generate_mask_matrix(&config.protocol, n, epoch_mask_seed(settings.seed, epoch))?;
        }
        order.sort_unstable();
        order.shuffle(&mut rng::stream(settings.seed, Domain::Shuffle, epoch as u64));
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for batch in order.chunks(settings.batch_size) {
            step += 1;
            let log_grads = (step - 1) % settings.grad_log_stride as u64 == 0;
            let log = train_step(
                &mut model,
                spec.task,
                &data.train,
                batch,
                masks.masks(),
                settings.learning_rate,
                step,
                log_grads,
            )?;
            epoch_loss += log.loss;
            batches += 1;
            grad_samples.extend(log.grads);
            steps.push(StepRecord {
                step,
                epoch,
                loss: log.loss,
                modality_losses: log.modality_losses,
            });
        }
        if epoch % settings.mei_epoch_stride == 0 {
            let tables = ablation_tables(&model, &data.valid, &metrics)?;
            let mei = mei_entries(&tables, settings.epsilon)?;
            validation.push(EpochEval {
                epoch,
                mean_train_loss: epoch_loss / batches as f64,
                tables,
                mei,
            });
        }
    }

    let test_tables = ablation_tables(&model, &data.test, &metrics)?;
    let mei = mei_entries(&test_tables, settings.epsilon)?;

    let (trace, trace_warnings, mli_result, mli_error) =
        match assemble_trace(&grad_samples, n_mod, model.module_count()) {
            Ok((trace, warnings)) => {
                let strided = trace.strided(settings.mli_stride);
                match mli(&strided) {
                    Ok(r) => (Some(trace), warnings, Some(r), None),
                    Err(e) => (Some(trace), warnings, None, Some(e.to_string())),
                }
            }
            Err(e) => (None, Vec::new(), None, Some(e.to_string())),
        };

    Ok(RunLog {
        config_hash: config_hash(spec, config),
        synth_seed: spec.seed,
        train_seed: settings.seed,
        modality_names: config.protocol.names().to_vec(),
        module_count: model.module_count(),
        initial_loss,
        steps,
        grad_samples,
        validation,
        test_tables,
        mei,
        mli: mli_result,
        mli_error,
        trace_warnings,
        train_masks: if settings.resample_masks_per_epoch { first_masks } else { masks },
        trace,
        model,
    })
}
