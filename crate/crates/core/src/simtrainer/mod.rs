//! A small deterministic multimodal trainer on synthetic data.
//!
//! It exists to exercise the diagnostics end to end: training masks come
//! from a missing-rate protocol, every step logs modality-specific gradient
//! norms for MLI, and clean-data ablations feed MEI.

mod artifacts;
mod data;
mod metrics;
mod model;
mod train;

pub use artifacts::{contribution_trajectory_csv, loss_curve_csv, write_run_artifacts, RunManifest};
pub use data::{gen_synthetic, Dataset, SynthData, SynthSpec, Target, Targets, Task};
pub use metrics::{score, TaskMetric};
pub use model::{loss_and_grad, Affine, ToyModel};
pub use train::{
    ablation_tables, config_hash, evaluate_under_combination, modality_loss_and_grad,
    predict_under, run_experiment, train_step, weighted_loss_and_grad, EpochEval, RunLog, StepLog, StepRecord, TrainConfig,
    TrainSettings,
};
