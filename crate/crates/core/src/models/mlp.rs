use std::cell::Cell;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, GradMap, ParameterSet, PredictiveDistribution};
use crate::autodiff::{Gradients, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

/// Architecture and initialisation of a dense classifier.
///
/// With `embedding_dim` set, the input is expected to be one-hot and is first
/// projected through a bias-free embedding table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden_dims: Vec<usize>,
    pub num_classes: usize,
    pub activation: Activation,
    pub init_scale: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_dim: Option<usize>,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            input_dim: 2,
            hidden_dims: vec![32, 32],
            num_classes: 2,
            activation: Activation::Tanh,
            init_scale: 0.3,
            seed: 0,
            embedding_dim: None,
        }
    }
}

impl MlpConfig {
    /// Next-token model over a `vocab`-symbol alphabet: one-hot input,
    /// embedding, one hidden layer, softmax over the alphabet.
    pub fn next_token(vocab: usize, embedding_dim: usize, hidden: usize, seed: u64) -> Self {
        Self {
            input_dim: vocab,
            hidden_dims: vec![hidden],
            num_classes: vocab,
            activation: Activation::Tanh,
            init_scale: 0.3,
            seed,
            embedding_dim: Some(embedding_dim),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims_ok = self.input_dim >= 1
            && self.num_classes >= 1
            && self.hidden_dims.iter().all(|&d| d >= 1)
            && self.embedding_dim.is_none_or(|d| d >= 1);
        if !dims_ok {
            return Err(Error::InvalidConfig("every model dimension must be at least 1".into()));
        }
        if !(self.init_scale >= 0.0 && self.init_scale.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "init_scale must be finite and non-negative, got {}",
                self.init_scale
            )));
        }
        Ok(())
    }

    /// `(name, shape)` of every parameter in forward order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        let mut width = self.input_dim;
        if let Some(e) = self.embedding_dim {
            out.push(("embed.weight".to_string(), vec![width, e]));
            width = e;
        }
        for (i, &h) in self.hidden_dims.iter().enumerate() {
            out.push((format!("hidden.{i}.weight"), vec![width, h]));
            out.push((format!("hidden.{i}.bias"), vec![h]));
            width = h;
        }
        out.push(("head.weight".to_string(), vec![width, self.num_classes]));
        out.push(("head.bias".to_string(), vec![self.num_classes]));
        out
    }
}

/// Forward and backward pass counts of one training run.
#[derive(Debug, Default)]
pub struct PassCounter {
    forward: Cell<usize>,
    backward: Cell<usize>,
}

impl PassCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn forwards(&self) -> usize {
        self.forward.get()
    }

    pub fn backwards(&self) -> usize {
        self.backward.get()
    }

    pub fn counts(&self) -> (usize, usize) {
        (self.forwards(), self.backwards())
    }

    pub(crate) fn count_forward(&self) {
        self.forward.set(self.forward.get() + 1);
    }

    /// Runs a reverse sweep and counts it as one backward pass.
    pub fn backward(&self, tape: Tape, loss: Var) -> Result<Gradients> {
        self.backward.set(self.backward.get() + 1);
        Ok(tape.backward(loss)?)
    }

    /// As [`PassCounter::backward`], also accumulating per-row squared
    /// gradients.
    pub fn backward_with_row_squares(&self, tape: Tape, loss: Var) -> Result<Gradients> {
        self.backward.set(self.backward.get() + 1);
        Ok(tape.backward_with_row_squares(loss)?)
    }
}

/// Parameters placed on a tape.
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: IndexMap<String, Var>,
}

impl BoundParams {
    pub fn var(&self, name: &str) -> Var {
        self.vars[name]
    }

    /// Collects the gradient of every bound parameter.
    pub fn gradients(&self, grads: &Gradients, params: &ParameterSet) -> Result<GradMap> {
        self.collect(params, |v| grads.wrt(v))
    }

    /// Collects per-row squared gradients of every bound parameter.
    pub fn row_squares(&self, grads: &Gradients, params: &ParameterSet) -> Result<GradMap> {
        self.collect(params, |v| grads.row_squares(v))
    }

    fn collect<'g>(&self, params: &ParameterSet, get: impl Fn(Var) -> Option<&'g Tensor>) -> Result<GradMap> {
        let mut out = GradMap::new();
        for (name, &var) in &self.vars {
            // A parameter the loss does not depend on has a zero gradient.
            let g = match get(var) {
                Some(g) => g.clone(),
                None => Tensor::zeros(params[name.as_str()].shape()),
            };
            out.insert(name.clone(), g);
        }
        Ok(out)
    }
}

/// Tape handles of one recorded forward pass.
#[derive(Clone, Copy, Debug)]
pub struct Recorded {
    pub log_probs: Var,
    pub features: Var,
}

/// Result of one forward + backward pass on a labelled batch.
#[derive(Clone, Debug)]
pub struct LossGrad {
    pub loss: f64,
    pub dist: PredictiveDistribution,
    pub grads: GradMap,
    /// `Σᵢ (∂ℓ/∂θ)²` over batch rows, when requested.
    pub row_squares: Option<GradMap>,
}

/// Dense classifier `input → [hidden layers] → log-probabilities`.
#[derive(Clone, Debug)]
pub struct Mlp {
    config: MlpConfig,
}

impl Mlp {
    pub fn new(config: MlpConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self { config })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.config
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes
    }

    /// Parameters drawn from `uniform(-init_scale, init_scale)` with a
    /// generator seeded by `config.seed`.
    pub fn init(&self) -> ParameterSet {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        let scale = self.config.init_scale;
        let mut params = ParameterSet::new();
        for (name, shape) in self.config.layout() {
            let n = shape.iter().product();
            let data = (0..n).map(|_| scale * (2.0 * rng.random::<f64>() - 1.0)).collect();
            params.insert(name, Tensor::new(shape, data).expect("layout shape"));
        }
        params
    }

    /// Places `params` on `tape`, as trainable leaves or as constants.
    pub fn bind(&self, tape: &mut Tape, params: &ParameterSet, trainable: bool) -> Result<BoundParams> {
        let mut vars = IndexMap::new();
        for (name, shape) in self.config.layout() {
            let t = params
                .get(&name)
                .ok_or_else(|| Error::Shape(format!("missing parameter `{name}`")))?;
            if t.shape() != shape.as_slice() {
                return Err(Error::Shape(format!(
                    "`{name}` has shape {:?}, expected {shape:?}",
                    t.shape()
                )));
            }
            vars.insert(name, tape.leaf(t.clone(), trainable));
        }
        Ok(BoundParams { vars })
    }

    /// Records one forward pass of `x` and counts it.
    pub fn record(&self, tape: &mut Tape, params: &BoundParams, x: Var, counter: &PassCounter) -> Result<Recorded> {
        let shape = tape.value(x).shape().to_vec();
        if shape.len() != 2 || shape[1] != self.config.input_dim {
            return Err(Error::Shape(format!(
                "batch has shape {shape:?}, model expects (n, {})",
                self.config.input_dim
            )));
        }
        counter.count_forward();
        let mut h = x;
        if self.config.embedding_dim.is_some() {
            h = tape.matmul(h, params.var("embed.weight"))?;
        }
        for i in 0..self.config.hidden_dims.len() {
            let z = tape.matmul(h, params.var(&format!("hidden.{i}.weight")))?;
            let z = tape.add(z, params.var(&format!("hidden.{i}.bias")))?;
            h = match self.config.activation {
                Activation::Tanh => tape.tanh(z)?,
                Activation::Relu => tape.relu(z)?,
            };
        }
        let logits = tape.matmul(h, params.var("head.weight"))?;
        let logits = tape.add(logits, params.var("head.bias"))?;
        let log_probs = tape.log_softmax(logits)?;
        Ok(Recorded { log_probs, features: h })
    }

    /// Predictive distribution and penultimate features of a batch.
    pub fn forward(
        &self,
        params: &ParameterSet,
        batch_x: &Tensor,
        counter: &PassCounter,
    ) -> Result<(PredictiveDistribution, FeatureMatrix)> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, params, false)?;
        let x = tape.constant(batch_x.clone());
        let out = self.record(&mut tape, &bound, x, counter)?;
        Ok((
            PredictiveDistribution::new(tape.value(out.log_probs).clone())?,
            FeatureMatrix::new(tape.value(out.features).clone())?,
        ))
    }

    /// Mean cross-entropy of a labelled batch and its gradient (one forward,
    /// one backward).
    pub fn loss_and_grad(
        &self,
        params: &ParameterSet,
        batch_x: &Tensor,
        labels: &[usize],
        counter: &PassCounter,
        with_row_squares: bool,
    ) -> Result<LossGrad> {
        let mut tape = Tape::new();
        let bound = self.bind(&mut tape, params, true)?;
        let x = tape.constant(batch_x.clone());
        let out = self.record(&mut tape, &bound, x, counter)?;
        let loss = super::cross_entropy_on_tape(&mut tape, out.log_probs, labels)?;
        let loss_value = tape.value(loss).data()[0];
        let dist = PredictiveDistribution::new(tape.value(out.log_probs).clone())?;
        let (grads, row_squares) = if with_row_squares {
            let g = counter.backward_with_row_squares(tape, loss)?;
            (bound.gradients(&g, params)?, Some(bound.row_squares(&g, params)?))
        } else {
            let g = counter.backward(tape, loss)?;
            (bound.gradients(&g, params)?, None)
        };
        Ok(LossGrad {
            loss: loss_value,
            dist,
            grads,
            row_squares,
        })
    }

    /// Mean cross-entropy without gradients.
    pub fn loss(&self, params: &ParameterSet, batch_x: &Tensor, labels: &[usize]) -> Result<f64> {
        let (dist, _) = self.forward(params, batch_x, &PassCounter::new())?;
        super::cross_entropy(&dist, labels)
    }
}
