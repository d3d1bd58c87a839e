//! Desk-scale trainable models: a linear regressor (MSE) and a binary
//! logistic classifier (cross-entropy), with analytic gradients and a plain
//! gradient-descent local training loop.
//!
//! All operations here are pure functions of their inputs.

use crate::error::{Error, Result};
use crate::topology::ZoneId;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    LinearRegression,
    LogisticClassification,
}

/// Flat parameter vector of a zone or client model: weights plus bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub kind: ModelKind,
}

/// Model prediction: a scalar value for regression, a probability vector
/// (summing to 1) for classification.
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    Value(f64),
    Probabilities(Vec<f64>),
}

/// Parameter-space delta with the number of local samples that produced it.
/// In the round protocol a "gradient" is the difference between locally
/// trained parameters and the starting parameters, not an instantaneous
/// loss gradient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gradient {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub sample_count: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClientId(pub u32);

impl std::fmt::Display for ClientId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "c{}", self.0)
    }
}

/// One labeled observation, tagged with the atomic zone where it was collected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    /// Regression target, or the class index (0.0 / 1.0) for classification.
    pub label: f64,
    pub zone_tag: ZoneId,
}

/// A client's data: disjoint train and validation splits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientDataset {
    pub client_id: ClientId,
    pub train_samples: Vec<Sample>,
    pub validation_samples: Vec<Sample>,
}

impl ClientDataset {
    /// Train samples whose zone tag falls inside the given atomic-leaf set.
    pub fn train_in(&self, leaves: &std::collections::BTreeSet<ZoneId>) -> Vec<Sample> {
        self.train_samples
            .iter()
            .filter(|s| leaves.contains(&s.zone_tag))
            .cloned()
            .collect()
    }

    pub fn validation_in(&self, leaves: &std::collections::BTreeSet<ZoneId>) -> Vec<Sample> {
        self.validation_samples
            .iter()
            .filter(|s| leaves.contains(&s.zone_tag))
            .cloned()
            .collect()
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

const PROB_CLAMP: f64 = 1e-12;

impl ModelParams {
    pub fn zeros(dim: usize, kind: ModelKind) -> Self {
        ModelParams { weights: vec![0.0; dim], bias: 0.0, kind }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }

    /// Linear score w·x + b.
    pub fn score(&self, features: &[f64]) -> f64 {
        let mut s = self.bias;
        for (w, x) in self.weights.iter().zip(features) {
            s += w * x;
        }
        s
    }

    /// Element-wise midpoint of two parameter vectors of the same shape.
    pub fn average(a: &ModelParams, b: &ModelParams) -> Result<ModelParams> {
        if a.dim() != b.dim() || a.kind != b.kind {
            return Err(Error::ShapeMismatch);
        }
        Ok(ModelParams {
            weights: a
                .weights
                .iter()
                .zip(&b.weights)
                .map(|(x, y)| (x + y) / 2.0)
                .collect(),
            bias: (a.bias + b.bias) / 2.0,
            kind: a.kind,
        })
    }

    /// Bit-level fingerprint of the parameter vector, used to assert that
    /// gradients in a diffusion round were all taken against the same
    /// round-start snapshot.
    pub fn fingerprint(&self) -> u64 {
        let mut acc = crate::rng::mix(&[self.weights.len() as u64]);
        for w in &self.weights {
            acc = crate::rng::mix(&[acc, w.to_bits()]);
        }
        crate::rng::mix(&[acc, self.bias.to_bits()])
    }

    fn check_dim(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: features.len() });
        }
        Ok(())
    }
}

/// Model output for one input: `w·x + b` for regression, class probabilities
/// for classification.
pub fn predict(params: &ModelParams, features: &[f64]) -> Result<Prediction> {
    params.check_dim(features)?;
    let score = params.score(features);
    match params.kind {
        ModelKind::LinearRegression => Ok(Prediction::Value(score)),
        ModelKind::LogisticClassification => {
            let p1 = sigmoid(score);
            Ok(Prediction::Probabilities(vec![1.0 - p1, p1]))
        }
    }
}

fn sample_loss(params: &ModelParams, sample: &Sample) -> f64 {
    let score = params.score(&sample.features);
    match params.kind {
        ModelKind::LinearRegression => {
            let e = score - sample.label;
            e * e
        }
        ModelKind::LogisticClassification => {
            let p = sigmoid(score).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            let y = sample.label;
            -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
        }
    }
}

/// Mean per-sample loss over a nonempty dataset: MSE for regression,
/// cross-entropy for classification.
pub fn dataset_loss(params: &ModelParams, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset { context: "dataset_loss" });
    }
    let mut total = 0.0;
    for s in samples {
        params.check_dim(&s.features)?;
        total += sample_loss(params, s);
    }
    Ok(total / samples.len() as f64)
}

/// Exact gradient of `dataset_loss` at `params` (the instantaneous ∂ℒ/∂θ,
/// not the protocol's trained-parameter delta).
pub fn analytic_gradient(params: &ModelParams, samples: &[Sample]) -> Result<Gradient> {
    if samples.is_empty() {
        return Err(Error::EmptyDataset { context: "analytic_gradient" });
    }
    let dim = params.dim();
    let mut gw = vec![0.0; dim];
    let mut gb = 0.0;
    for s in samples {
        params.check_dim(&s.features)?;
        let score = params.score(&s.features);
        // d loss / d score for the per-sample loss
        let dscore = match params.kind {
            ModelKind::LinearRegression => 2.0 * (score - s.label),
            ModelKind::LogisticClassification => sigmoid(score) - s.label,
        };
        for (g, x) in gw.iter_mut().zip(&s.features) {
            *g += dscore * x;
        }
        gb += dscore;
    }
    let n = samples.len() as f64;
    for g in gw.iter_mut() {
        *g /= n;
    }
    Ok(Gradient { weights: gw, bias: gb / n, sample_count: samples.len() as u64 })
}

/// Runs `epochs` of gradient descent starting from `params` and returns the
/// resulting parameter delta (θ_final − θ_initial). `params` is not modified.
///
/// `batch_size = None` means full batch; otherwise mini-batches are drawn in
/// a per-epoch shuffled order from `rng`. Returns `Ok(None)` when the client
/// has no train samples, which signals that it skips the round.
pub fn local_train(
    params: &ModelParams,
    train_samples: &[Sample],
    epochs: u32,
    learning_rate: f64,
    batch_size: Option<usize>,
    rng: &mut impl Rng,
) -> Result<Option<Gradient>> {
    if epochs == 0 {
        return Err(Error::InvalidArgument("local_train requires epochs >= 1".into()));
    }
    if !(learning_rate > 0.0) {
        return Err(Error::InvalidArgument("local_train requires learning_rate > 0".into()));
    }
    if train_samples.is_empty() {
        return Ok(None);
    }
    let mut current = params.clone();
    let n = train_samples.len();
    let full_batch = match batch_size {
        None | Some(0) => true,
        Some(b) => b >= n,
    };
    let mut order: Vec<usize> = (0..n).collect();
    let mut batch: Vec<Sample> = Vec::new();
    for _ in 0..epochs {
        if full_batch {
            let g = analytic_gradient(&current, train_samples)?;
            step(&mut current, &g, learning_rate);
        } else {
            let b = batch_size.unwrap();
            order.shuffle(rng);
            for chunk in order.chunks(b) {
                batch.clear();
                batch.extend(chunk.iter().map(|&i| train_samples[i].clone()));
                let g = analytic_gradient(&current, &batch)?;
                step(&mut current, &g, learning_rate);
            }
        }
    }
    if !current.is_finite() {
        return Err(Error::NumericFailure { context: "local_train".into() });
    }
    let delta = Gradient {
        weights: current
            .weights
            .iter()
            .zip(&params.weights)
            .map(|(a, b)| a - b)
            .collect(),
        bias: current.bias - params.bias,
        sample_count: n as u64,
    };
    Ok(Some(delta))
}

fn step(params: &mut ModelParams, grad: &Gradient, lr: f64) {
    for (w, g) in params.weights.iter_mut().zip(&grad.weights) {
        *w -= lr * g;
    }
    params.bias -= lr * grad.bias;
}

impl Gradient {
    pub fn zeros(dim: usize) -> Self {
        Gradient { weights: vec![0.0; dim], bias: 0.0, sample_count: 0 }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn is_finite(&self) -> bool {
        self.bias.is_finite() && self.weights.iter().all(|w| w.is_finite())
    }

    /// Inner product over the flattened vector, bias included.
    pub fn dot(&self, other: &Gradient) -> f64 {
        let mut s = self.bias * other.bias;
        for (a, b) in self.weights.iter().zip(&other.weights) {
            s += a * b;
        }
        s
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// Accumulates `scale * other` into `self`.
    pub fn add_scaled(&mut self, other: &Gradient, scale: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += scale * b;
        }
        self.bias += scale * other.bias;
    }
}
