//! Variational quantum classifier: readout maps, cross-entropy, gradients and
//! the empirical Fisher diagonal.

use std::ops::{Deref, DerefMut};

use thiserror::Error;

use crate::qsim::{adjoint_gradient, run_circuit, Axis, CircuitLayout, QsimError, StateVector};

/// Probabilities are clamped into `[PROB_FLOOR, 1 − PROB_FLOOR]` before the log.
pub const PROB_FLOOR: f64 = 1e-12;

/// Layers whose Fisher spread is below this are treated as constant.
pub const DEGENERATE_SPREAD: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VqcError {
    #[error(transparent)]
    Qsim(#[from] QsimError),
    #[error("{classes} classes need {classes} readout qubits, register has {n_qubits}")]
    TooManyClasses { classes: usize, n_qubits: usize },
    #[error("a classifier needs at least two classes, got {0}")]
    TooFewClasses(usize),
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("parameter vector has {got} entries, layout needs {expected}")]
    ParameterCount { expected: usize, got: usize },
    #[error("Fisher information needs at least one sample")]
    EmptyDataset,
}

pub type Result<T> = std::result::Result<T, VqcError>;

/// Flat rotation angles indexed `layer·2n + axis·n + qubit`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn zeros(layout: &CircuitLayout) -> Self {
        Self(vec![0.0; layout.n_params()])
    }

    pub fn from_vec(layout: &CircuitLayout, values: Vec<f64>) -> Result<Self> {
        if values.len() != layout.n_params() {
            return Err(VqcError::ParameterCount {
                expected: layout.n_params(),
                got: values.len(),
            });
        }
        Ok(Self(values))
    }

    /// Wraps values without a layout check. Aggregation works on any length.
    pub fn from_raw(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn get(&self, layout: &CircuitLayout, layer: usize, axis: Axis, qubit: usize) -> f64 {
        self.0[layout.param_index(layer, axis, qubit)]
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for ParameterVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParameterVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Per-parameter sensitivity, same shape as [`ParameterVector`].
#[derive(Debug, Clone, PartialEq)]
pub struct FisherVector(Vec<f64>);

impl FisherVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for FisherVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// What the readout qubits mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    /// Class-1 probability `(1 − ⟨Z⟩)/2` on the last qubit.
    Binary,
    /// Softmax over `⟨Z_0⟩ … ⟨Z_{K−1}⟩`.
    Multiclass(usize),
}

impl Task {
    pub fn for_classes(classes: usize) -> Self {
        if classes == 2 {
            Task::Binary
        } else {
            Task::Multiclass(classes)
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            Task::Binary => 2,
            Task::Multiclass(k) => *k,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    /// One `⟨Z⟩` per readout qubit.
    pub logits: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub predicted_class: usize,
}

/// Encoded-ready input row plus its class label.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a> {
    pub features: &'a [f64],
    pub label: usize,
}

/// How per-sample gradients are reduced into the Fisher diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FisherMode {
    /// Mean of squared per-sample gradients.
    PerSample,
    /// Mean of squared mini-batch mean gradients, batches taken in order.
    PerBatch(usize),
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// A circuit layout paired with a readout task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Classifier {
    pub layout: CircuitLayout,
    pub task: Task,
}

impl Classifier {
    pub fn new(layout: CircuitLayout, task: Task) -> Result<Self> {
        match task {
            Task::Multiclass(k) if k < 2 => return Err(VqcError::TooFewClasses(k)),
            Task::Multiclass(k) if k > layout.n_qubits => {
                return Err(VqcError::TooManyClasses {
                    classes: k,
                    n_qubits: layout.n_qubits,
                })
            }
            _ => {}
        }
        Ok(Self { layout, task })
    }

    pub fn n_classes(&self) -> usize {
        self.task.n_classes()
    }

    /// Qubits whose `⟨Z⟩` values feed the probability map.
    pub fn readout_qubits(&self) -> Vec<usize> {
        match self.task {
            Task::Binary => vec![self.layout.n_qubits - 1],
            Task::Multiclass(k) => (0..k).collect(),
        }
    }

    fn check_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.layout.n_params() {
            return Err(VqcError::ParameterCount {
                expected: self.layout.n_params(),
                got: params.len(),
            });
        }
        Ok(())
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.n_classes() {
            return Err(VqcError::LabelOutOfRange {
                label,
                classes: self.n_classes(),
            });
        }
        Ok(())
    }

    fn encode(&self, features: &[f64]) -> Result<StateVector> {
        Ok(StateVector::amplitude_encode_into(
            features,
            self.layout.n_qubits,
        )?)
    }

    /// Maps readout expectations to class probabilities.
    pub fn predict_from_logits(&self, logits: Vec<f64>) -> Prediction {
        let probabilities = match self.task {
            Task::Binary => {
                let p1 = (1.0 - logits[0]) / 2.0;
                vec![1.0 - p1, p1]
            }
            Task::Multiclass(_) => softmax(&logits),
        };
        let predicted_class = argmax(&probabilities);
        Prediction {
            logits,
            probabilities,
            predicted_class,
        }
    }

    pub fn forward_state(&self, params: &[f64], input: &StateVector) -> Result<Prediction> {
        self.check_params(params)?;
        let out = run_circuit(&self.layout, params, input)?;
        let logits = self
            .readout_qubits()
            .into_iter()
            .map(|q| out.expectation_z(q))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        Ok(self.predict_from_logits(logits))
    }

    pub fn forward(&self, params: &[f64], features: &[f64]) -> Result<Prediction> {
        self.forward_state(params, &self.encode(features)?)
    }

    /// Cross-entropy `−ln p[label]` with the probability clamped first.
    pub fn loss(&self, prediction: &Prediction, label: usize) -> Result<f64> {
        self.check_label(label)?;
        let p = prediction.probabilities[label].clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
        Ok(-p.ln())
    }

    /// `∂loss/∂⟨Z_q⟩` per readout qubit; zero where the clamp is active.
    fn loss_readout_seed(&self, prediction: &Prediction, label: usize) -> Vec<(usize, f64)> {
        let qubits = self.readout_qubits();
        let p = prediction.probabilities[label];
        if !(PROB_FLOOR..=1.0 - PROB_FLOOR).contains(&p) {
            return qubits.into_iter().map(|q| (q, 0.0)).collect();
        }
        match self.task {
            Task::Binary => {
                let p1 = prediction.probabilities[1];
                let p0 = prediction.probabilities[0];
                // p1 = (1 − z)/2, p0 = 1 − p1
                let d = if label == 1 {
                    1.0 / (2.0 * p1)
                } else {
                    -1.0 / (2.0 * p0)
                };
                vec![(qubits[0], d)]
            }
            Task::Multiclass(_) => qubits
                .into_iter()
                .zip(&prediction.probabilities)
                .enumerate()
                .map(|(k, (q, &pk))| (q, if k == label { pk - 1.0 } else { pk }))
                .collect(),
        }
    }

    /// Loss and `∂loss/∂θ` for one sample.
    pub fn sample_gradient(&self, params: &[f64], sample: Sample<'_>) -> Result<(f64, Vec<f64>)> {
        self.check_params(params)?;
        self.check_label(sample.label)?;
        let input = self.encode(sample.features)?;
        let prediction = self.forward_state(params, &input)?;
        let loss = self.loss(&prediction, sample.label)?;
        let seed = self.loss_readout_seed(&prediction, sample.label);
        if seed.iter().all(|&(_, w)| w == 0.0) {
            return Ok((loss, vec![0.0; params.len()]));
        }
        let adj = adjoint_gradient(&self.layout, params, &input, &seed)?;
        Ok((loss, adj.gradient))
    }

    /// Empirical Fisher diagonal `F_j = mean_s (∂ ln p(y_s|x_s) / ∂θ_j)²`.
    ///
    /// Per-parameter sums run over sorted terms, so the result does not
    /// depend on sample order.
    pub fn fisher_diagonal(
        &self,
        params: &[f64],
        samples: &[Sample<'_>],
        mode: FisherMode,
    ) -> Result<FisherVector> {
        if samples.is_empty() {
            return Err(VqcError::EmptyDataset);
        }
        let grads = samples
            .iter()
            .map(|&s| self.sample_gradient(params, s).map(|(_, g)| g))
            .collect::<Result<Vec<_>>>()?;
        let terms: Vec<Vec<f64>> = match mode {
            FisherMode::PerSample => grads,
            FisherMode::PerBatch(batch) => grads
                .chunks(batch.max(1))
                .map(|chunk| {
                    let n = chunk.len() as f64;
                    (0..params.len())
                        .map(|j| chunk.iter().map(|g| g[j]).sum::<f64>() / n)
                        .collect()
                })
                .collect(),
        };
        Ok(FisherVector(sorted_mean_of_squares(&terms, params.len())))
    }
}

fn sorted_mean_of_squares(rows: &[Vec<f64>], width: usize) -> Vec<f64> {
    let n = rows.len() as f64;
    let mut column = Vec::with_capacity(rows.len());
    (0..width)
        .map(|j| {
            column.clear();
            column.extend(rows.iter().map(|g| g[j] * g[j]));
            column.sort_by(f64::total_cmp);
            column.iter().sum::<f64>() / n
        })
        .collect()
}

/// Min-max rescales each layer's `2n` entries into `[0, 1]`; a layer with
/// spread below [`DEGENERATE_SPREAD`] maps to all zeros.
pub fn normalize_fisher_layerwise(fisher: &FisherVector, layout: &CircuitLayout) -> FisherVector {
    let width = layout.params_per_layer().max(1);
    let mut out = fisher.0.clone();
    for layer in out.chunks_mut(width) {
        let min = layer.iter().copied().fold(f64::INFINITY, f64::min);
        let max = layer.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let spread = max - min;
        for v in layer.iter_mut() {
            *v = if spread < DEGENERATE_SPREAD {
                0.0
            } else {
                ((*v - min) / spread).clamp(0.0, 1.0)
            };
        }
    }
    FisherVector(out)
}
