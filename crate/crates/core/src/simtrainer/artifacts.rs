//! Files written for a simulated run.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::formats::{write_ablation_tables, write_grad_agg, write_grad_samples, write_mask_matrix};
use crate::report::{sha256_hex, write_atomic, FileChecksum};
use crate::simtrainer::data::SynthSpec;
use crate::simtrainer::train::{RunLog, TrainConfig};

/// Run manifest: seeds, the configuration echo, every written file with its
/// checksum and the configuration hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub label: String,
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub synth: SynthSpec,
    pub train: TrainConfig,
    pub files: Vec<FileChecksum>,
}

/// Per-epoch validation contribution profiles, one row per
/// `(epoch, metric, mode, modality)`.
pub fn contribution_trajectory_csv(run: &RunLog) -> String {
    let mut out = String::from("epoch,metric,mode,modality,mu,sigma,zeta,p,mei\n");
    for eval in &run.validation {
        for entry in &eval.mei {
            let Some(t) = &entry.mei else { continue };
            for (m, c) in t.contributions.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{}",
                    eval.epoch,
                    entry.metric,
                    entry.mode,
                    run.modality_names[m],
                    c.mu,
                    c.sigma,
                    c.zeta,
                    t.result.p[m],
                    t.result.value
                )
                .unwrap();
            }
        }
    }
    out
}

/// Per-step task loss and `L_m`; undefined `L_m` cells are left empty.
pub fn loss_curve_csv(run: &RunLog) -> String {
    let mut out = String::from("step,epoch,loss");
    for name in &run.modality_names {
        write!(out, ",L_{name}").unwrap();
    }
    out.push('\n');
    for rec in &run.steps {
        write!(out, "{},{},{}", rec.step, rec.epoch, rec.loss).unwrap();
        for lm in &rec.modality_losses {
            match lm {
                Some(v) => write!(out, ",{v}").unwrap(),
                None => out.push(','),
            }
        }
        out.push('\n');
    }
    out
}

/// Write the run's artifacts into `dir` with file names prefixed by
/// `label`, then the manifest `<label>.manifest.json`. Returns the manifest.
pub fn write_run_artifacts(
    run: &RunLog,
    spec: &SynthSpec,
    config: &TrainConfig,
    dir: &Path,
    label: &str,
) -> Result<RunManifest> {
    let last_validation = run.validation.last().map(|e| e.tables.as_slice()).unwrap_or(&[]);
    let mut contents: Vec<(String, String)> = vec![
        (format!("{label}.maskmatrix.csv"), write_mask_matrix(&run.train_masks)?),
        (format!("{label}.abltable.test.csv"), write_ablation_tables(&run.test_tables)?),
        (format!("{label}.gradtrace.csv"), write_grad_samples(&run.grad_samples)),
        (format!("{label}.contributions.csv"), contribution_trajectory_csv(run)),
        (format!("{label}.loss.csv"), loss_curve_csv(run)),
    ];
    if !last_validation.is_empty() {
        contents.push((format!("{label}.abltable.valid.csv"), write_ablation_tables(last_validation)?));
    }
    if let Some(trace) = &run.trace {
        contents.push((format!("{label}.gradagg.csv"), write_grad_agg(trace)));
    }
    let mut files = Vec::with_capacity(contents.len());
    for (name, text) in &contents {
        write_atomic(&dir.join(name), text.as_bytes())?;
        files.push(FileChecksum {
            path: name.clone(),
            sha256: sha256_hex(text.as_bytes()),
        });
    }
    let manifest = RunManifest {
        label: label.to_string(),
        config_hash: run.config_hash.clone(),
        seeds: BTreeMap::from([
            ("synth".to_string(), run.synth_seed),
            ("train".to_string(), run.train_seed),
        ]),
        synth: spec.clone(),
        train: config.clone(),
        files,
    };
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    write_atomic(&dir.join(format!("{label}.manifest.json")), json.as_bytes())?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::{read_ablation_tables, read_grad_samples, read_mask_matrix};
    use crate::protocol::RateVector;
    use crate::simtrainer::data::Task;
    use crate::simtrainer::train::{run_experiment, TrainSettings};

    fn fixture() -> (SynthSpec, TrainConfig) {
        let spec = SynthSpec {
            dims: vec![3, 3],
            n_train: 40,
            n_valid: 20,
            n_test: 20,
            informativeness: vec![1.0, 1.0],
            label_noise: 0.1,
            task: Task::Classification { classes: 2 },
            seed: 1,
        };
        let config = TrainConfig {
            settings: TrainSettings {
                epochs: 2,
                batch_size: 8,
                learning_rate: 0.1,
                hidden: 4,
                seed: 1,
                mei_epoch_stride: 1,
                grad_log_stride: 1,
                mli_stride: 1,
                resample_masks_per_epoch: false,
                metrics: vec![],
                epsilon: 1e-8,
            },
            protocol: RateVector::new(vec!["a", "b"], vec![0.2, 0.4]).unwrap(),
        };
        (spec, config)
    }

    #[test]
    fn artifacts_round_trip_and_checksum() {
        let (spec, config) = fixture();
        let run = run_experiment(&spec, &config).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let manifest = write_run_artifacts(&run, &spec, &config, dir.path(), "imr").unwrap();
        for f in &manifest.files {
            let text = std::fs::read_to_string(dir.path().join(&f.path)).unwrap();
            assert_eq!(sha256_hex(text.as_bytes()), f.sha256);
        }
        let read = |n: &str| std::fs::read_to_string(dir.path().join(n)).unwrap();
        let masks = read_mask_matrix(&read("imr.maskmatrix.csv"), "m").unwrap();
        assert_eq!(masks.masks, run.train_masks.masks());
        assert_eq!(masks.modalities, ["a", "b"]);
        assert_eq!(read_ablation_tables(&read("imr.abltable.test.csv"), "t").unwrap(), run.test_tables);
        assert_eq!(read_grad_samples(&read("imr.gradtrace.csv"), "g").unwrap(), run.grad_samples);
        let back: RunManifest = serde_json::from_str(&read("imr.manifest.json")).unwrap();
        assert_eq!(back, manifest);
        assert_eq!(read("imr.loss.csv").lines().count(), run.steps.len() + 1);
    }
}
