use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Batch, GradMap, Mlp, ParameterSet, PassCounter};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SharpnessConfig {
    /// Box half-width per unit of `|θᵢ| + 1`.
    pub epsilon: f64,
    pub lr: f64,
    pub steps: usize,
    pub batch_size: usize,
    /// Minibatch gradients summed per ascent step.
    pub accumulation: usize,
}

impl Default for SharpnessConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-5,
            lr: 8e-5,
            steps: 20,
            batch_size: 32,
            accumulation: 4,
        }
    }
}

impl SharpnessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.lr > 0.0 && self.steps > 0 && self.batch_size > 0 && self.accumulation > 0) {
            return Err(Error::InvalidConfig("sharpness settings must all be positive".into()));
        }
        Ok(())
    }
}

/// Per-coordinate half-widths `ε(|θᵢ| + 1)` of the ascent box.
pub fn sharpness_box(params: &ParameterSet, epsilon: f64) -> ParameterSet {
    params.map(|t| epsilon * (t.abs() + 1.0))
}

/// `100 · (max L − L) / (1 + L)` with the maximum over `θ + z`, `|zᵢ| ≤
/// ε(|θᵢ| + 1)`, found by projected gradient ascent from a random point of
/// the box. `eval` returns the loss and the ascent gradient at a point.
/// `observer` sees every projected offset `z`. `params` is not modified.
pub fn epsilon_sharpness<F, O>(
    params: &ParameterSet,
    mut eval: F,
    cfg: &SharpnessConfig,
    rng: &mut impl Rng,
    mut observer: O,
) -> Result<f64>
where
    F: FnMut(&ParameterSet) -> Result<(f64, GradMap)>,
    O: FnMut(&ParameterSet),
{
    cfg.validate()?;
    let bounds = sharpness_box(params, cfg.epsilon);
    let (base, _) = eval(params)?;
    let mut max_loss = base;
    let mut z = bounds.snapshot();
    for (_, t) in z.iter_mut() {
        for v in t.data_mut() {
            *v *= 2.0 * rng.random::<f64>() - 1.0;
        }
    }
    for _ in 0..cfg.steps {
        let (loss, grad) = eval(&params.add_scaled(1.0, &z)?)?;
        max_loss = max_loss.max(loss);
        let moved = z.add_scaled(cfg.lr, &grad)?;
        z = moved.zip_with(&bounds, |v, b| v.clamp(-b, b))?;
        observer(&z);
    }
    let (last, _) = eval(&params.add_scaled(1.0, &z)?)?;
    max_loss = max_loss.max(last);
    if !(base.is_finite() && max_loss.is_finite()) {
        return Err(Error::NonFinite("loss during sharpness ascent".into()));
    }
    Ok(100.0 * (max_loss - base) / (1.0 + base))
}

/// ε-sharpness of a classifier on `data`. Losses are full-data means;
/// ascent gradients sum `accumulation` consecutive minibatch means, cycling
/// through the data.
pub fn model_sharpness(model: &Mlp, params: &ParameterSet, data: &Batch, cfg: &SharpnessConfig, seed: u64) -> Result<f64> {
    let n = data.len();
    let mut cursor = 0;
    let counter = PassCounter::new();
    let eval = |at: &ParameterSet| -> Result<(f64, GradMap)> {
        let loss = model.loss(at, &data.x, &data.labels)?;
        let mut grad = at.zeros_like();
        for _ in 0..cfg.accumulation {
            let take = cfg.batch_size.min(n);
            let rows: Vec<usize> = (0..take).map(|k| (cursor + k) % n).collect();
            cursor = (cursor + take) % n;
            let mb = data.select(&rows);
            let lg = model.loss_and_grad(at, &mb.x, &mb.labels, &counter, false)?;
            grad = grad.add_scaled(1.0, &lg.grads)?;
        }
        Ok((loss, grad))
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    epsilon_sharpness(params, eval, cfg, &mut rng, |_| {})
}
