use super::NoiseSource;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::models::{GradMap, Mlp, ParameterSet, PassCounter};

/// Diagonal of the empirical Fisher: the batch mean of squared per-example
/// gradients of `log p(y | x)`. Entries are never negative; damping is
/// added where the diagonal is used.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagFisher {
    entries: GradMap,
}

impl DiagFisher {
    /// From `Σᵢ (∂ℓ/∂θ)²` of a mean loss over `batch` rows, where each row's
    /// gradient is `1/batch` times its per-example gradient.
    pub fn from_row_squares(row_squares: GradMap, batch: usize) -> Result<Self> {
        if batch == 0 {
            return Err(Error::Shape("empty batch".into()));
        }
        let n = batch as f64;
        Ok(Self {
            entries: row_squares.map(|v| v * n),
        })
    }

    pub fn entries(&self) -> &GradMap {
        &self.entries
    }

    pub fn into_entries(self) -> GradMap {
        self.entries
    }
}

/// Estimates the Fisher diagonal of `model` on a labelled batch (one forward,
/// one backward). With `noise`, the batch is evaluated at `x + z`.
pub fn fisher_diag(
    model: &Mlp,
    params: &ParameterSet,
    batch_x: &Tensor,
    labels: &[usize],
    noise: Option<&mut NoiseSource>,
    counter: &PassCounter,
) -> Result<DiagFisher> {
    let noisy;
    let x = match noise {
        Some(n) => {
            noisy = n.perturb(batch_x);
            &noisy
        }
        None => batch_x,
    };
    let lg = model.loss_and_grad(params, x, labels, counter, true)?;
    let rows = lg.row_squares.expect("row squares were requested");
    DiagFisher::from_row_squares(rows, labels.len())
}
