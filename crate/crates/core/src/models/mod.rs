//! Small classifiers supplying predictive distributions, losses and metrics.

mod checkpoint;
pub mod markov;
mod mlp;
mod params;

pub use checkpoint::Checkpoint;
pub use mlp::{Activation, BoundParams, LossGrad, Mlp, MlpConfig, PassCounter, Recorded};
pub use params::{GradMap, ParameterSet};

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Inputs of shape `(n, input_dim)` with one label per row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBatch")]
pub struct Batch {
    pub x: Tensor,
    pub labels: Vec<usize>,
}

#[derive(Deserialize)]
struct RawBatch {
    x: Tensor,
    labels: Vec<usize>,
}

impl TryFrom<RawBatch> for Batch {
    type Error = Error;

    fn try_from(raw: RawBatch) -> Result<Self> {
        Batch::new(raw.x, raw.labels)
    }
}

impl Batch {
    pub fn new(x: Tensor, labels: Vec<usize>) -> Result<Self> {
        if x.rank() != 2 || x.rows() != labels.len() || labels.is_empty() {
            return Err(Error::Shape(format!(
                "batch of shape {:?} with {} labels",
                x.shape(),
                labels.len()
            )));
        }
        Ok(Self { x, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// The rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let cols = self.x.cols();
        let mut data = Vec::with_capacity(indices.len() * cols);
        for &i in indices {
            data.extend_from_slice(self.x.row(i));
        }
        Self {
            x: Tensor::new(vec![indices.len(), cols], data).expect("selected rows"),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

/// Per-row class log-probabilities of shape `(batch, classes)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveDistribution {
    log_probs: Tensor,
}

impl PredictiveDistribution {
    pub fn new(log_probs: Tensor) -> Result<Self> {
        if log_probs.rank() != 2 || log_probs.is_empty() {
            return Err(Error::Shape(format!(
                "log-probabilities must be a non-empty (batch, classes) matrix, got {:?}",
                log_probs.shape()
            )));
        }
        if !log_probs.data().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("log-probabilities".into()));
        }
        Ok(Self { log_probs })
    }

    /// Builds a distribution from probability rows. Zero probabilities are
    /// not representable and are rejected.
    pub fn from_probs(rows: &[Vec<f64>]) -> Result<Self> {
        let probs = Tensor::from_rows(rows)?;
        Self::new(probs.map(f64::ln))
    }

    pub fn log_probs(&self) -> &Tensor {
        &self.log_probs
    }

    pub fn probs(&self) -> Tensor {
        self.log_probs.map(f64::exp)
    }

    pub fn batch(&self) -> usize {
        self.log_probs.rows()
    }

    pub fn classes(&self) -> usize {
        self.log_probs.cols()
    }

    /// Most probable class of each row; ties go to the lowest index.
    pub fn argmax(&self) -> Vec<usize> {
        (0..self.batch())
            .map(|i| {
                let row = self.log_probs.row(i);
                let mut best = 0;
                for (j, &v) in row.iter().enumerate().skip(1) {
                    if v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }
}

/// Penultimate-layer representations, one row per example.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    values: Tensor,
}

impl FeatureMatrix {
    pub fn new(values: Tensor) -> Result<Self> {
        if values.rank() != 2 {
            return Err(Error::Shape(format!("features must be a matrix, got {:?}", values.shape())));
        }
        if !values.is_finite() {
            return Err(Error::NonFinite("features".into()));
        }
        Ok(Self { values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Tensor::from_rows(rows)?)
    }

    pub fn rows(&self) -> usize {
        self.values.rows()
    }

    pub fn cols(&self) -> usize {
        self.values.cols()
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values.at(i, j)
    }
}

fn check_labels(labels: &[usize], batch: usize, classes: usize) -> Result<()> {
    if labels.len() != batch {
        return Err(Error::Shape(format!("{} labels for a batch of {batch}", labels.len())));
    }
    if let Some(&label) = labels.iter().find(|&&y| y >= classes) {
        return Err(Error::LabelOutOfRange { label, classes });
    }
    Ok(())
}

/// Mean negative log-likelihood of `labels`.
pub fn cross_entropy(dist: &PredictiveDistribution, labels: &[usize]) -> Result<f64> {
    check_labels(labels, dist.batch(), dist.classes())?;
    let total: f64 = labels.iter().enumerate().map(|(i, &y)| dist.log_probs.at(i, y)).sum();
    Ok(-total / labels.len() as f64)
}

/// Records mean negative log-likelihood on a tape.
pub fn cross_entropy_on_tape(tape: &mut Tape, log_probs: Var, labels: &[usize]) -> Result<Var> {
    let lp = tape.value(log_probs);
    check_labels(labels, lp.rows(), lp.cols())?;
    let picked = tape.gather(log_probs, labels.to_vec())?;
    let mean = tape.mean(picked)?;
    Ok(tape.scale(mean, -1.0)?)
}

/// `exp(mean_nll)`.
pub fn perplexity(mean_nll: f64) -> f64 {
    mean_nll.exp()
}

/// Fraction of rows whose argmax equals the label.
pub fn accuracy(dist: &PredictiveDistribution, labels: &[usize]) -> Result<f64> {
    check_labels(labels, dist.batch(), dist.classes())?;
    let hits = dist.argmax().iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len() as f64)
}
