//! Learning task and client-side local training.
//!
//! The task is L2-regularized binary logistic regression:
//!
//! ```text
//! loss(theta) = (1/|B|) * sum_i l(theta; x_i, y_i) + (lambda/2) * ||theta||^2
//! l(theta; x, y) = -y*ln(s) - (1-y)*ln(1-s),   s = sigmoid(theta . x)
//! ```
//!
//! With `lambda = 0` the loss is the plain mean log-loss. When the model has
//! an intercept, the parameter vector carries one extra trailing coordinate
//! that multiplies a virtual constant feature of 1. Per-sample terms use the
//! numerically stable form `max(z,0) - z*y + ln(1 + exp(-|z|))`, so large
//! margins never overflow.

use crate::params::ParamVector;
use crate::{Error, Result};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha12Rng;

/// Shape and regularization of the model.
#[derive(Clone, Copy, Debug)]
pub struct ModelSpec {
    dimension: usize,
    l2_lambda: f64,
    intercept: bool,
}

impl ModelSpec {
    /// `dimension` is the feature dimension of the data; it must be at
    /// least 1, and `l2_lambda` must be nonnegative and finite.
    pub fn new(dimension: usize, l2_lambda: f64, intercept: bool) -> Result<Self> {
        if dimension < 1 {
            return Err(Error::config("model.dimension", "must be at least 1"));
        }
        if !l2_lambda.is_finite() || l2_lambda < 0.0 {
            return Err(Error::config("model.l2_lambda", "must be nonnegative"));
        }
        Ok(ModelSpec {
            dimension,
            l2_lambda,
            intercept,
        })
    }

    /// Feature dimension of the data this model consumes.
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn l2_lambda(&self) -> f64 {
        self.l2_lambda
    }

    pub fn intercept(&self) -> bool {
        self.intercept
    }

    /// Length of the parameter vector: the feature dimension, plus one
    /// trailing bias coordinate when the intercept is enabled.
    pub fn param_dim(&self) -> usize {
        self.dimension + usize::from(self.intercept)
    }
}

/// Hyperparameters for one client's local pass.
#[derive(Clone, Copy, Debug)]
pub struct TrainConfig {
    learning_rate: f64,
    local_epochs: u32,
    batch_size: usize,
}

impl TrainConfig {
    pub fn new(learning_rate: f64, local_epochs: u32, batch_size: usize) -> Result<Self> {
        if !learning_rate.is_finite() || learning_rate <= 0.0 {
            return Err(Error::config("train.learning_rate", "must be positive"));
        }
        if batch_size < 1 {
            return Err(Error::config("train.batch_size", "must be at least 1"));
        }
        Ok(TrainConfig {
            learning_rate,
            local_epochs,
            batch_size,
        })
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn local_epochs(&self) -> u32 {
        self.local_epochs
    }

    pub fn batch_size(&self) -> usize {
        self.batch_size
    }
}

/// A labeled dataset: an `n x d` feature matrix plus `n` binary labels.
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetShard {
    features: Vec<f64>,
    labels: Vec<u8>,
    d: usize,
}

impl DatasetShard {
    /// Builds a shard from a row-major flat feature matrix.
    ///
    /// `features.len()` must equal `labels.len() * d`, every feature must be
    /// finite, and labels must be 0 or 1.
    pub fn new(features: Vec<f64>, d: usize, labels: Vec<u8>) -> Result<Self> {
        if d < 1 {
            return Err(Error::config("shard.d", "must be at least 1"));
        }
        if features.len() != labels.len() * d {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * d,
                got: features.len(),
            });
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i));
        }
        if labels.iter().any(|&y| y > 1) {
            return Err(Error::config("shard.labels", "labels must be 0 or 1"));
        }
        Ok(DatasetShard {
            features,
            labels,
            d,
        })
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Gathers the given rows into a new shard.
    pub fn select(&self, indices: &[usize]) -> DatasetShard {
        let mut features = Vec::with_capacity(indices.len() * self.d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        DatasetShard {
            features,
            labels,
            d: self.d,
        }
    }

    /// Concatenates two shards of equal feature dimension.
    pub fn concat(&self, other: &DatasetShard) -> Result<DatasetShard> {
        if self.d != other.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: other.d,
            });
        }
        let mut features = self.features.clone();
        features.extend_from_slice(&other.features);
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        Ok(DatasetShard {
            features,
            labels,
            d: self.d,
        })
    }

    pub(crate) fn set_label(&mut self, i: usize, y: u8) {
        self.labels[i] = y;
    }

    pub(crate) fn shift_row(&mut self, i: usize, shift: &[f64]) {
        let row = &mut self.features[i * self.d..(i + 1) * self.d];
        for (v, s) in row.iter_mut().zip(shift) {
            *v += s;
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn logit(params: &[f64], spec: &ModelSpec, row: &[f64]) -> f64 {
    let mut z: f64 = row.iter().zip(params).map(|(x, t)| x * t).sum();
    if spec.intercept() {
        z += params[spec.param_dim() - 1];
    }
    z
}

fn check_shapes(params: &ParamVector, shard: &DatasetShard, spec: &ModelSpec) -> Result<()> {
    if params.len() != spec.param_dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.param_dim(),
            got: params.len(),
        });
    }
    if shard.d() != spec.dimension() {
        return Err(Error::DimensionMismatch {
            expected: spec.dimension(),
            got: shard.d(),
        });
    }
    Ok(())
}

/// Loss and gradient over a row subset, shared by the public entry points.
fn loss_grad_on(
    params: &[f64],
    shard: &DatasetShard,
    rows: &[usize],
    spec: &ModelSpec,
) -> (f64, Vec<f64>) {
    let p = params.len();
    let mut grad = vec![0.0; p];
    let mut loss = 0.0;
    for &i in rows {
        let row = shard.row(i);
        let y = f64::from(shard.label(i));
        let z = logit(params, spec, row);
        loss += z.max(0.0) - z * y + (-z.abs()).exp().ln_1p();
        let coef = sigmoid(z) - y;
        for (g, x) in grad.iter_mut().zip(row) {
            *g += coef * x;
        }
        if spec.intercept() {
            grad[p - 1] += coef;
        }
    }
    let inv = 1.0 / rows.len() as f64;
    loss *= inv;
    let lambda = spec.l2_lambda();
    let mut sq = 0.0;
    for (g, t) in grad.iter_mut().zip(params) {
        *g = *g * inv + lambda * t;
        sq += t * t;
    }
    loss += 0.5 * lambda * sq;
    (loss, grad)
}

/// The all-zeros initial model.
pub fn init_params(spec: &ModelSpec) -> ParamVector {
    ParamVector::zeros(spec.param_dim())
}

/// Mean log-loss plus the L2 term, and its exact gradient, over `batch`.
pub fn loss_and_grad(
    params: &ParamVector,
    batch: &DatasetShard,
    spec: &ModelSpec,
) -> Result<(f64, ParamVector)> {
    if batch.is_empty() {
        return Err(Error::EmptyBatch);
    }
    check_shapes(params, batch, spec)?;
    let rows: Vec<usize> = (0..batch.n()).collect();
    let (loss, grad) = loss_grad_on(params.values(), batch, &rows, spec);
    Ok((loss, ParamVector::new(grad)?))
}

/// Runs `local_epochs` epochs of mini-batch SGD from the distributed global
/// model and returns the update delta (final minus initial parameters).
///
/// Batches are formed by a seeded shuffle each epoch; the last partial batch
/// is kept. Identical inputs and stream produce a byte-identical delta.
pub fn local_train(
    global: &ParamVector,
    shard: &DatasetShard,
    cfg: &TrainConfig,
    spec: &ModelSpec,
    rng: &mut ChaCha12Rng,
) -> Result<ParamVector> {
    if shard.is_empty() {
        return Err(Error::EmptyShard);
    }
    check_shapes(global, shard, spec)?;
    let mut theta: Vec<f64> = global.values().to_vec();
    let eta = cfg.learning_rate();
    let mut order: Vec<usize> = (0..shard.n()).collect();
    for _ in 0..cfg.local_epochs() {
        order.shuffle(rng);
        for batch in order.chunks(cfg.batch_size()) {
            let (_, grad) = loss_grad_on(&theta, shard, batch, spec);
            for (t, g) in theta.iter_mut().zip(&grad) {
                *t -= eta * g;
            }
        }
    }
    let theta = ParamVector::new(theta)?;
    theta.sub(global)
}

/// Thresholded accuracy (prediction 1 when `sigmoid(z) >= 0.5`, i.e. when
/// `z >= 0`) and the training loss of `params` on `shard`.
pub fn evaluate(
    params: &ParamVector,
    shard: &DatasetShard,
    spec: &ModelSpec,
) -> Result<(f64, f64)> {
    if shard.is_empty() {
        return Err(Error::EmptyShard);
    }
    check_shapes(params, shard, spec)?;
    let mut correct = 0usize;
    for i in 0..shard.n() {
        let z = logit(params.values(), spec, shard.row(i));
        let pred = u8::from(z >= 0.0);
        if pred == shard.label(i) {
            correct += 1;
        }
    }
    let (loss, _) = loss_and_grad(params, shard, spec)?;
    Ok((correct as f64 / shard.n() as f64, loss))
}
