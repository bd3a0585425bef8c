use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification { classes: usize },
    Regression,
}

impl Task {
    pub fn output_dim(&self) -> usize {
        match *self {
            Task::Classification { classes } => classes,
            Task::Regression => 1,
        }
    }
}

/// Shape of a synthetic multimodal dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub dims: Vec<usize>,
    pub n_train: usize,
    pub n_valid: usize,
    pub n_test: usize,
    /// How strongly each modality drives the label.
    pub informativeness: Vec<f64>,
    #[serde(default)]
    pub label_noise: f64,
    pub task: Task,
    pub seed: u64,
}

impl SynthSpec {
    pub fn modalities(&self) -> usize {
        self.dims.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.dims.len();
        if m < 2 {
            return Err(Error::config("simulation.synth.dims", "at least two modalities required"));
        }
        if self.dims.contains(&0) {
            return Err(Error::config("simulation.synth.dims", "dimensions must be positive"));
        }
        if self.informativeness.len() != m {
            return Err(Error::config(
                "simulation.synth.informativeness",
                format!("expected {m} weights, got {}", self.informativeness.len()),
            ));
        }
        if self.informativeness.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::config(
                "simulation.synth.informativeness",
                "weights must be finite and nonnegative",
            ));
        }
        if !self.informativeness.iter().any(|w| *w > 0.0) {
            return Err(Error::config(
                "simulation.synth.informativeness",
                "at least one weight must be positive",
            ));
        }
        for (field, n) in [("n_train", self.n_train), ("n_valid", self.n_valid), ("n_test", self.n_test)] {
            if n == 0 {
                return Err(Error::config(format!("simulation.synth.{field}"), "must be at least 1"));
            }
        }
        if !self.label_noise.is_finite() || self.label_noise < 0.0 {
            return Err(Error::config("simulation.synth.label_noise", "must be nonnegative"));
        }
        if let Task::Classification { classes } = self.task {
            if classes < 2 {
                return Err(Error::config("simulation.synth.task.classification.classes", "need at least 2 classes"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Targets {
    Classes(Vec<usize>),
    Values(Vec<f64>),
}

/// Features stored per modality as row-major `n x dims[m]` blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dims: Vec<usize>,
    features: Vec<Vec<f64>>,
    targets: Targets,
}

impl Dataset {
    pub fn new(dims: Vec<usize>, features: Vec<Vec<f64>>, targets: Targets) -> Result<Self> {
        let n = match &targets {
            Targets::Classes(c) => c.len(),
            Targets::Values(v) => v.len(),
        };
        if n == 0 {
            return Err(Error::EmptyDataset);
        }
        if features.len() != dims.len() {
            return Err(Error::Dimension {
                context: "dataset modalities",
                expected: dims.len(),
                got: features.len(),
            });
        }
        for (block, &d) in features.iter().zip(&dims) {
            if block.len() != n * d {
                return Err(Error::Dimension {
                    context: "dataset feature block",
                    expected: n * d,
                    got: block.len(),
                });
            }
        }
        Ok(Dataset { dims, features, targets })
    }

    pub fn len(&self) -> usize {
        match &self.targets {
            Targets::Classes(c) => c.len(),
            Targets::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn modalities(&self) -> usize {
        self.dims.len()
    }

    pub fn features(&self, i: usize, m: usize) -> &[f64] {
        let d = self.dims[m];
        &self.features[m][i * d..(i + 1) * d]
    }

    pub fn targets(&self) -> &Targets {
        &self.targets
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthData {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
    /// Hidden per-modality maps, row-major `output_dim x dims[m]`.
    pub hidden_maps: Vec<Vec<f64>>,
}

/// Random `out x d` map with orthonormal rows (Gram-Schmidt); rows beyond
/// the first `d` are only normalized. With standard normal features every
/// modality's latent is then exactly `N(0, I)` whatever its dimension.
fn hidden_map<R: Rng>(out: usize, d: usize, rng: &mut R) -> Vec<f64> {
    let mut map: Vec<f64> = (0..out * d).map(|_| rng.sample(StandardNormal)).collect();
    for c in 0..out {
        let (done, rest) = map.split_at_mut(c * d);
        let row = &mut rest[..d];
        if c < d {
            for prev in done.chunks(d) {
                let dot: f64 = prev.iter().zip(row.iter()).map(|(a, b)| a * b).sum();
                row.iter_mut().zip(prev).for_each(|(r, p)| *r -= dot * p);
            }
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        row.iter_mut().for_each(|v| *v /= norm);
    }
    map
}

/// Generate train/valid/test splits.
///
/// Features are standard normal and each modality's hidden map has
/// orthonormal rows, so equal informativeness means equal label signal. Classification
/// labels are the argmax of the noisy latent class scores; regression
/// targets are the weighted latent sum plus noise.
pub fn gen_synthetic(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let out = spec.task.output_dim();
    let mut map_rng = rng::stream(spec.seed, Domain::Data, 0);
    let hidden_maps: Vec<Vec<f64>> = spec
        .dims
        .iter()
        .map(|&d| hidden_map(out, d, &mut map_rng))
        .collect();
    let split = |n: usize, stream: u64| -> Result<Dataset> {
        let mut g = rng::stream(spec.seed, Domain::Data, stream);
        let mut features: Vec<Vec<f64>> = spec.dims.iter().map(|&d| Vec::with_capacity(n * d)).collect();
        let mut classes = Vec::new();
        let mut values = Vec::new();
        let mut latent = vec![0.0; out];
        for _ in 0..n {
            latent.iter_mut().for_each(|v| *v = 0.0);
            for (m, &d) in spec.dims.iter().enumerate() {
                let start = features[m].len();
                for _ in 0..d {
                    features[m].push(g.sample::<f64, _>(StandardNormal));
                }
                let x = &features[m][start..];
                let w = spec.informativeness[m];
                for (c, l) in latent.iter_mut().enumerate() {
                    let row = &hidden_maps[m][c * d..(c + 1) * d];
                    *l += w * row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            for l in latent.iter_mut() {
                let noise: f64 = g.sample(StandardNormal);
                *l += spec.label_noise * noise;
            }
            match spec.task {
                Task::Classification { .. } => classes.push(argmax(&latent)),
                Task::Regression => values.push(latent[0]),
            }
        }
        let targets = match spec.task {
            Task::Classification { .. } => Targets::Classes(classes),
            Task::Regression => Targets::Values(values),
        };
        Dataset::new(spec.dims.clone(), features, targets)
    };
    Ok(SynthData {
        train: split(spec.n_train, 1)?,
        valid: split(spec.n_valid, 2)?,
        test: split(spec.n_test, 3)?,
        hidden_maps,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Target {
    Class(usize),
    Value(f64),
}

impl Dataset {
    pub fn target(&self, i: usize) -> Target {
        match self.targets() {
            Targets::Classes(c) => Target::Class(c[i]),
            Targets::Values(v) => Target::Value(v[i]),
        }
    }

    pub fn sample(&self, i: usize) -> Vec<&[f64]> {
        (0..self.modalities()).map(|m| self.features(i, m)).collect()
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &x)| if x > best.1 { (i, x) } else { best })
        .0
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn spec(task: Task, informativeness: Vec<f64>, seed: u64) -> SynthSpec {
        SynthSpec {
            dims: vec![4, 3, 5],
            n_train: 600,
            n_valid: 50,
            n_test: 600,
            informativeness,
            label_noise: 0.0,
            task,
            seed,
        }
    }

    #[test]
    fn deterministic() {
        let s = spec(Task::Classification { classes: 3 }, vec![1.0, 1.0, 1.0], 5);
        assert_eq!(gen_synthetic(&s).unwrap(), gen_synthetic(&s).unwrap());
    }

    #[test]
    fn noiseless_regression_reproducible_from_hidden_map() {
        let s = spec(Task::Regression, vec![0.5, 1.0, 2.0], 9);
        let data = gen_synthetic(&s).unwrap();
        let Targets::Values(y) = data.test.targets() else { panic!() };
        for (i, &yi) in y.iter().enumerate().take(50) {
            let expected: f64 = (0..3)
                .map(|m| {
                    let x = data.test.features(i, m);
                    s.informativeness[m]
                        * data.hidden_maps[m].iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
                })
                .sum();
            assert!((expected - yi).abs() < 1e-12);
        }
    }

    /// Nearest-centroid probe on one modality; accuracy on the test split.
    fn centroid_probe(data: &SynthData, m: usize, classes: usize) -> f64 {
        let d = data.train.dims()[m];
        let Targets::Classes(y) = data.train.targets() else { panic!() };
        let mut centroids = vec![vec![0.0; d]; classes];
        let mut counts = vec![0.0_f64; classes];
        for (i, &c) in y.iter().enumerate() {
            counts[c] += 1.0;
            for (acc, x) in centroids[c].iter_mut().zip(data.train.features(i, m)) {
                *acc += x;
            }
        }
        for (c, n) in centroids.iter_mut().zip(&counts) {
            c.iter_mut().for_each(|v| *v /= n.max(1.0));
        }
        let Targets::Classes(yt) = data.test.targets() else { panic!() };
        let hits = yt
            .iter()
            .enumerate()
            .filter(|&(i, &c)| {
                let x = data.test.features(i, m);
                let dist: Vec<f64> = centroids
                    .iter()
                    .map(|cen| -cen.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>())
                    .collect();
                argmax(&dist) == c
            })
            .count();
        hits as f64 / yt.len() as f64
    }

    #[test]
    fn uninformative_modality_is_at_chance() {
        let classes = 3;
        for seed in 0..5 {
            let s = spec(Task::Classification { classes }, vec![1.0, 0.0, 0.0], seed);
            let data = gen_synthetic(&s).unwrap();
            let informative = centroid_probe(&data, 0, classes);
            let blind = centroid_probe(&data, 1, classes);
            // binomial sd at n=600 around 1/3 is about 0.019
            assert!(informative > 0.5, "seed {seed}: {informative}");
            assert!((blind - 1.0 / 3.0).abs() < 0.08, "seed {seed}: {blind}");
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = spec(Task::Regression, vec![0.0, 0.0, 0.0], 1);
        assert!(s.validate().is_err());
        s.informativeness = vec![1.0, 1.0];
        assert!(s.validate().is_err());
        s.informativeness = vec![1.0; 3];
        s.n_valid = 0;
        assert!(s.validate().is_err());
        s.n_valid = 1;
        s.task = Task::Classification { classes: 1 };
        assert!(s.validate().is_err());
    }
}
