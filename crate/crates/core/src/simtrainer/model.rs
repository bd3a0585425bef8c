use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::MaskPattern;
use crate::rng::{self, Domain};
use crate::simtrainer::data::{Target, Task};

/// An affine map stored row-major as `out x inp`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub inp: usize,
    pub out: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Affine {
    fn zeros(inp: usize, out: usize) -> Self {
        Affine {
            inp,
            out,
            weight: vec![0.0; inp * out],
            bias: vec![0.0; out],
        }
    }

    fn random<R: Rng>(inp: usize, out: usize, std: f64, rng: &mut R) -> Self {
        let weight = (0..inp * out)
            .map(|_| std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        Affine {
            inp,
            out,
            weight,
            bias: vec![0.0; out],
        }
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        for (o, yo) in y.iter_mut().enumerate() {
            let row = &self.weight[o * self.inp..(o + 1) * self.inp];
            *yo = self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    fn sq_norm(&self) -> f64 {
        self.weight.iter().chain(&self.bias).map(|v| v * v).sum()
    }

    fn axpy(&mut self, alpha: f64, other: &Affine) {
        for (a, b) in self.weight.iter_mut().zip(&other.weight) {
            *a += alpha * b;
        }
        for (a, b) in self.bias.iter_mut().zip(&other.bias) {
            *a += alpha * b;
        }
    }
}

/// Per-modality rectified encoders whose outputs are summed and passed to an
/// affine fusion head.
///
/// Modules are numbered `0..M` for the encoders and `M` for the head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    pub encoders: Vec<Affine>,
    pub head: Affine,
}

/// Intermediate values of one forward pass.
#[derive(Debug, Clone)]
pub(crate) struct Activations {
    pre: Vec<Vec<f64>>,
    fused: Vec<f64>,
    pub(crate) output: Vec<f64>,
}

impl ToyModel {
    /// He-initialised encoders, `1/sqrt(h)`-scaled head, zero biases.
    pub fn init(dims: &[usize], hidden: usize, output: usize, seed: u64) -> Self {
        let mut g = rng::stream(seed, Domain::Init, 0);
        let encoders = dims
            .iter()
            .map(|&d| Affine::random(d, hidden, (2.0 / d as f64).sqrt(), &mut g))
            .collect();
        let head = Affine::random(hidden, output, (hidden as f64).sqrt().recip(), &mut g);
        ToyModel { encoders, head }
    }

    pub(crate) fn zeros_like(&self) -> Self {
        ToyModel {
            encoders: self.encoders.iter().map(|e| Affine::zeros(e.inp, e.out)).collect(),
            head: Affine::zeros(self.head.inp, self.head.out),
        }
    }

    pub fn modalities(&self) -> usize {
        self.encoders.len()
    }

    pub fn module_count(&self) -> usize {
        self.encoders.len() + 1
    }

    pub fn hidden(&self) -> usize {
        self.head.inp
    }

    /// L2 norm of each module's parameters (or gradient, when `self` holds one).
    pub fn module_norms(&self) -> Vec<f64> {
        self.encoders
            .iter()
            .chain(std::iter::once(&self.head))
            .map(|a| a.sq_norm().sqrt())
            .collect()
    }

    pub(crate) fn axpy(&mut self, alpha: f64, other: &ToyModel) {
        for (a, b) in self.encoders.iter_mut().zip(&other.encoders) {
            a.axpy(alpha, b);
        }
        self.head.axpy(alpha, &other.head);
    }

    pub fn parameter_count(&self) -> usize {
        self.encoders
            .iter()
            .chain(std::iter::once(&self.head))
            .map(|a| a.weight.len() + a.bias.len())
            .sum()
    }

    fn params_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.encoders
            .iter_mut()
            .chain(std::iter::once(&mut self.head))
            .flat_map(|a| a.weight.iter_mut().chain(a.bias.iter_mut()))
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.encoders
            .iter()
            .chain(std::iter::once(&self.head))
            .flat_map(|a| a.weight.iter().chain(&a.bias).copied())
            .collect()
    }

    pub fn set_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.parameter_count());
        for (p, v) in self.params_mut().zip(flat) {
            *p = *v;
        }
    }

    fn check_dims(&self, features: &[&[f64]], pattern: &MaskPattern) -> Result<()> {
        if features.len() != self.modalities() || pattern.len() != self.modalities() {
            return Err(Error::Dimension {
                context: "model modalities",
                expected: self.modalities(),
                got: features.len().min(pattern.len()),
            });
        }
        for (x, e) in features.iter().zip(&self.encoders) {
            if x.len() != e.inp {
                return Err(Error::Dimension {
                    context: "modality feature length",
                    expected: e.inp,
                    got: x.len(),
                });
            }
        }
        Ok(())
    }

    pub(crate) fn activations(&self, features: &[&[f64]], pattern: &MaskPattern) -> Activations {
        let h = self.hidden();
        let mut fused = vec![0.0; h];
        let mut pre = Vec::with_capacity(self.modalities());
        let mut zero = Vec::new();
        for (m, enc) in self.encoders.iter().enumerate() {
            let x: &[f64] = if pattern.is_observed(m) {
                features[m]
            } else {
                zero.resize(enc.inp, 0.0);
                zero.iter_mut().for_each(|v| *v = 0.0);
                &zero
            };
            let mut a = vec![0.0; h];
            enc.apply(x, &mut a);
            for (f, v) in fused.iter_mut().zip(&a) {
                *f += v.max(0.0);
            }
            pre.push(a);
        }
        let mut output = vec![0.0; self.head.out];
        self.head.apply(&fused, &mut output);
        Activations { pre, fused, output }
    }

    /// Model output for one sample; unobserved modalities are fed zero
    /// vectors before encoding.
    pub fn forward(&self, features: &[&[f64]], pattern: &MaskPattern) -> Result<Vec<f64>> {
        self.check_dims(features, pattern)?;
        Ok(self.activations(features, pattern).output)
    }

    /// Accumulate `weight * d loss / d params` for one sample into `grad`.
    pub(crate) fn backward_into(
        &self,
        features: &[&[f64]],
        pattern: &MaskPattern,
        acts: &Activations,
        d_output: &[f64],
        weight: f64,
        grad: &mut ToyModel,
    ) {
        let h = self.hidden();
        let mut d_fused = vec![0.0; h];
        for (o, &g) in d_output.iter().enumerate() {
            let g = weight * g;
            if g == 0.0 {
                continue;
            }
            grad.head.bias[o] += g;
            let wrow = &self.head.weight[o * h..(o + 1) * h];
            let grow = &mut grad.head.weight[o * h..(o + 1) * h];
            for j in 0..h {
                grow[j] += g * acts.fused[j];
                d_fused[j] += g * wrow[j];
            }
        }
        for (m, enc) in self.encoders.iter().enumerate() {
            let observed = pattern.is_observed(m);
            let genc = &mut grad.encoders[m];
            for j in 0..h {
                if acts.pre[m][j] <= 0.0 {
                    continue;
                }
                let g = d_fused[j];
                genc.bias[j] += g;
                if observed {
                    let row = &mut genc.weight[j * enc.inp..(j + 1) * enc.inp];
                    for (r, x) in row.iter_mut().zip(features[m]) {
                        *r += g * x;
                    }
                }
            }
        }
    }
}

/// Per-sample loss and its gradient with respect to the model output.
///
/// Classification uses softmax cross-entropy; regression uses squared error.
pub fn loss_and_grad(task: Task, output: &[f64], target: Target) -> (f64, Vec<f64>) {
    match (task, target) {
        (Task::Classification { .. }, Target::Class(y)) => {
            let max = output.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = output.iter().map(|o| (o - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            let loss = sum.ln() + max - output[y];
            let mut grad: Vec<f64> = exps.iter().map(|e| e / sum).collect();
            grad[y] -= 1.0;
            (loss, grad)
        }
        (Task::Regression, Target::Value(y)) => {
            let r = output[0] - y;
            (r * r, vec![2.0 * r])
        }
        _ => panic!("target kind does not match task"),
    }
}
