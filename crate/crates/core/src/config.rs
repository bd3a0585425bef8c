//! The JSON experiment configuration.
//!
//! ```json
//! {
//!   "modalities": ["acoustic", "visual", "language"],
//!   "rates": [0.1, 0.2, 0.6],
//!   "seed": 7,
//!   "n": 100000,
//!   "simulation": { "synth": { ... }, "train": { ... }, "paired": true }
//! }
//! ```
//!
//! Exactly one of `shared_rate` (SMR) and `rates` (IMR) must be present.
//! `simulation.synth.seed` and `simulation.train.seed` default to `seed`.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::equity::{MeiMode, PerfMetric, DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::protocol::{DivergenceKind, RateVector};
use crate::simtrainer::{SynthSpec, TrainConfig, TrainSettings};

fn default_n() -> usize {
    10_000
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("missdiag-out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub synth: SynthSpec,
    pub train: TrainSettings,
    /// Also run the mean-matched SMR counterpart with the same seeds.
    #[serde(default)]
    pub paired: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub modalities: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shared_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<Vec<f64>>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub divergence: DivergenceKind,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub mei_mode: MeiMode,
    #[serde(default)]
    pub metrics: Vec<PerfMetric>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationConfig>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

/// Where a configuration value may come from, highest precedence last.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// `MISSDIAG_SEED`.
    pub env_seed: Option<u64>,
    /// `--set path.to.field=value`, applied in order.
    pub sets: Vec<(String, String)>,
    /// `--seed`.
    pub flag_seed: Option<u64>,
}

/// Parse `key=value`; the value is read as JSON, falling back to a string.
pub fn parse_set(arg: &str) -> Result<(String, String)> {
    let (k, v) = arg
        .split_once('=')
        .ok_or_else(|| Error::config(arg, "override must look like `path.to.field=value`"))?;
    if k.is_empty() {
        return Err(Error::config(arg, "empty override path"));
    }
    Ok((k.to_string(), v.to_string()))
}

fn set_path(root: &mut Value, path: &str, raw: &str) -> Result<()> {
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::config(path, format!("`{}` is not an object", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!()
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str, overrides: &Overrides) -> Result<Self> {
        let mut value: Value =
            serde_json::from_str(text).map_err(|e| Error::config("<document>", e.to_string()))?;
        if !value.is_object() {
            return Err(Error::config("<document>", "configuration must be a JSON object"));
        }
        if let Some(seed) = overrides.env_seed {
            value["seed"] = seed.into();
        }
        for (path, raw) in &overrides.sets {
            set_path(&mut value, path, raw)?;
        }
        if let Some(seed) = overrides.flag_seed {
            value["seed"] = seed.into();
        }
        let seed = value.get("seed").cloned().unwrap_or(Value::from(0u64));
        if let Some(sim) = value.get_mut("simulation").and_then(Value::as_object_mut) {
            for part in ["synth", "train"] {
                if let Some(obj) = sim.get_mut(part).and_then(Value::as_object_mut) {
                    obj.entry("seed").or_insert_with(|| seed.clone());
                }
            }
        }
        let config: ExperimentConfig = serde_json::from_value(value).map_err(|e| {
            let msg = e.to_string();
            let field = msg
                .split('`')
                .nth(1)
                .unwrap_or("<document>")
                .to_string();
            Error::config(field, msg)
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &std::path::Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.shared_rate, &self.rates) {
            (Some(_), Some(_)) => {
                return Err(Error::config("shared_rate", "give either `shared_rate` or `rates`, not both"))
            }
            (None, None) => return Err(Error::config("rates", "one of `shared_rate` or `rates` is required")),
            _ => {}
        }
        if self.n == 0 {
            return Err(Error::config("n", "must be at least 1"));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(Error::config("epsilon", "must be positive"));
        }
        let protocol = self.protocol().map_err(|e| match e {
            Error::Config { .. } => e,
            other => Error::config(if self.rates.is_some() { "rates" } else { "shared_rate" }, other.to_string()),
        })?;
        if let Some(sim) = &self.simulation {
            sim.synth.validate()?;
            sim.train.validate()?;
            if sim.synth.modalities() != protocol.len() {
                return Err(Error::config(
                    "simulation.synth.dims",
                    format!("{} modalities configured, dims lists {}", protocol.len(), sim.synth.modalities()),
                ));
            }
        }
        Ok(())
    }

    /// The configured protocol as a rate vector.
    pub fn protocol(&self) -> Result<RateVector> {
        match (&self.shared_rate, &self.rates) {
            (Some(r), None) => RateVector::shared(self.modalities.clone(), *r),
            (None, Some(rates)) => RateVector::new(self.modalities.clone(), rates.clone()),
            _ => Err(Error::config("rates", "exactly one of `shared_rate` or `rates` is required")),
        }
    }

    pub fn train_config(&self, protocol: RateVector) -> Option<TrainConfig> {
        self.simulation.as_ref().map(|s| TrainConfig {
            settings: s.train.clone(),
            protocol,
        })
    }

    pub fn hash(&self) -> String {
        crate::report::sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}
