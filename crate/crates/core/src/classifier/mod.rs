//! Target models: the black-box [`Classifier`] interface, its
//! gradient-capable extension, and the built-in k-NN and MLP models.

mod knn;
mod mlp;
pub(crate) mod network;
mod persist;

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::data::{ClassLabel, Dataset, TimeSeries};
use crate::error::{CfxError, Result};

pub use knn::{train_knn, Knn};
pub use mlp::{train_mlp, Mlp, MlpSpec};
pub use network::{Activation, Dense, Network};
pub use persist::{load_model, save_model, SavedModel};

/// Class probabilities; entries are in `[0, 1]` and sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        let sum: f64 = probs.iter().sum();
        if probs.is_empty() || probs.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > 1e-6 {
            return Err(CfxError::Format(format!("not a probability vector: {probs:?}")));
        }
        Ok(Self(probs))
    }

    /// Numerically stable softmax.
    pub fn softmax(logits: &[f64]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        Self(exps.into_iter().map(|e| e / total).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, class: ClassLabel) -> f64 {
        self.0[class]
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest probability; ties go to the lower index.
    pub fn argmax(&self) -> ClassLabel {
        argmax(&self.0)
    }

    /// Classes sorted by decreasing probability (stable on ties).
    pub fn ranking(&self) -> Vec<ClassLabel> {
        let mut idx: Vec<usize> = (0..self.0.len()).collect();
        idx.sort_by(|&a, &b| self.0[b].total_cmp(&self.0[a]));
        idx
    }
}

pub(crate) fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

pub trait Classifier: Send + Sync {
    fn num_classes(&self) -> usize;

    /// Expected `(channels, length)` of inputs.
    fn input_shape(&self) -> (usize, usize);

    fn predict_proba(&self, x: &TimeSeries) -> Result<ProbVector>;

    fn predict(&self, x: &TimeSeries) -> Result<ClassLabel> {
        Ok(self.predict_proba(x)?.argmax())
    }

    fn as_gradient(&self) -> Option<&dyn GradientClassifier> {
        None
    }

    fn check_input(&self, x: &TimeSeries) -> Result<()> {
        if x.shape() != self.input_shape() {
            return Err(CfxError::shape(format!("{:?}", self.input_shape()), format!("{:?}", x.shape())));
        }
        Ok(())
    }
}

/// Classifier exposing pre-softmax logits and their input gradients.
pub trait GradientClassifier: Classifier {
    fn logits(&self, x: &TimeSeries) -> Result<Vec<f64>>;

    /// Computes the logits, asks `cotangent` for the output weights given
    /// those logits, and returns `(logits, sum_k w_k * dz_k/dx)` with the
    /// gradient flattened channel-major.
    fn logits_with_vjp(
        &self,
        x: &TimeSeries,
        cotangent: &dyn Fn(&[f64]) -> Vec<f64>,
    ) -> Result<(Vec<f64>, Vec<f64>)>;

    /// Gradient of the logit of `class` w.r.t. every input entry.
    fn logit_gradient(&self, x: &TimeSeries, class: ClassLabel) -> Result<Vec<f64>> {
        let k = self.num_classes();
        if class >= k {
            return Err(CfxError::Config(format!("class {class} out of range for {k} classes")));
        }
        let (_, grad) = self.logits_with_vjp(x, &|z| {
            let mut w = vec![0.0; z.len()];
            w[class] = 1.0;
            w
        })?;
        Ok(grad)
    }
}

/// Input gradient of a class logit; fails for models without gradients.
pub fn input_gradient(model: &dyn Classifier, x: &TimeSeries, class: ClassLabel) -> Result<TimeSeries> {
    let grad_model = model
        .as_gradient()
        .ok_or_else(|| CfxError::Capability("model does not expose input gradients".into()))?;
    x.with_values(grad_model.logit_gradient(x, class)?)
}

/// Fraction of instances whose predicted class equals their label.
pub fn accuracy(model: &dyn Classifier, dataset: &Dataset) -> Result<f64> {
    let mut correct = 0usize;
    for inst in dataset.instances() {
        if model.predict(&inst.series)? == inst.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

/// Wraps a model and counts every prediction or gradient request.
pub struct CountingClassifier<'a> {
    inner: &'a dyn Classifier,
    calls: AtomicU64,
}

impl<'a> CountingClassifier<'a> {
    pub fn new(inner: &'a dyn Classifier) -> Self {
        Self {
            inner,
            calls: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    fn tick(&self) {
        self.calls.fetch_add(1, Ordering::Relaxed);
    }

    fn grad_inner(&self) -> Result<&dyn GradientClassifier> {
        self.inner
            .as_gradient()
            .ok_or_else(|| CfxError::Capability("model does not expose input gradients".into()))
    }
}

impl Classifier for CountingClassifier<'_> {
    fn num_classes(&self) -> usize {
        self.inner.num_classes()
    }

    fn input_shape(&self) -> (usize, usize) {
        self.inner.input_shape()
    }

    fn predict_proba(&self, x: &TimeSeries) -> Result<ProbVector> {
        self.tick();
        self.inner.predict_proba(x)
    }

    fn as_gradient(&self) -> Option<&dyn GradientClassifier> {
        self.inner.as_gradient().map(|_| self as &dyn GradientClassifier)
    }
}

impl GradientClassifier for CountingClassifier<'_> {
    fn logits(&self, x: &TimeSeries) -> Result<Vec<f64>> {
        self.tick();
        self.grad_inner()?.logits(x)
    }

    fn logits_with_vjp(
        &self,
        x: &TimeSeries,
        cotangent: &dyn Fn(&[f64]) -> Vec<f64>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        self.tick();
        self.grad_inner()?.logits_with_vjp(x, cotangent)
    }
}

pub(crate) fn require_two_classes(dataset: &Dataset) -> Result<()> {
    if dataset.distinct_labels() < 2 {
        return Err(CfxError::Train {
            epoch: 0,
            message: "classification needs at least two distinct labels".into(),
        });
    }
    Ok(())
}
