use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::models::PredictiveDistribution;

/// Which argument of the KL divergence plays the target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlDirection {
    /// `KL(target ‖ estimate)`
    Forward,
    /// `KL(estimate ‖ target)`
    Reverse,
    /// Sum of both directions.
    Symmetric,
}

/// Distance used to size a trust region.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    #[default]
    ForwardKl,
    ReverseKl,
    SymmetricKl,
    Mmd,
    L2,
}

impl DistanceMetric {
    pub fn kl_direction(self) -> Option<KlDirection> {
        match self {
            DistanceMetric::ForwardKl => Some(KlDirection::Forward),
            DistanceMetric::ReverseKl => Some(KlDirection::Reverse),
            DistanceMetric::SymmetricKl => Some(KlDirection::Symmetric),
            DistanceMetric::Mmd | DistanceMetric::L2 => None,
        }
    }
}

fn same_shape(p: &PredictiveDistribution, q: &PredictiveDistribution) -> Result<()> {
    if p.log_probs().shape() != q.log_probs().shape() {
        return Err(Error::Shape(format!(
            "distributions of shape {:?} and {:?}",
            p.log_probs().shape(),
            q.log_probs().shape()
        )));
    }
    Ok(())
}

fn kl_rows(target: &PredictiveDistribution, estimate: &PredictiveDistribution) -> f64 {
    let (t, e) = (target.log_probs().data(), estimate.log_probs().data());
    let total: f64 = t.iter().zip(e).map(|(&lt, &le)| lt.exp() * (lt - le)).sum();
    total / target.batch() as f64
}

/// Batch-mean KL divergence between two predictive distributions. With
/// [`KlDirection::Forward`], `target` is the reference distribution.
pub fn kl_divergence(target: &PredictiveDistribution, estimate: &PredictiveDistribution, direction: KlDirection) -> Result<f64> {
    same_shape(target, estimate)?;
    Ok(match direction {
        KlDirection::Forward => kl_rows(target, estimate),
        KlDirection::Reverse => kl_rows(estimate, target),
        KlDirection::Symmetric => kl_rows(target, estimate) + kl_rows(estimate, target),
    })
}

fn imq_kernel(a: &[f64], b: &[f64]) -> f64 {
    const C: f64 = 1.0;
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    C / (C + d2)
}

fn mean_kernel(a: &crate::autodiff::Tensor, b: &crate::autodiff::Tensor) -> f64 {
    let mut total = 0.0;
    for i in 0..a.rows() {
        for j in 0..b.rows() {
            total += imq_kernel(a.row(i), b.row(j));
        }
    }
    total / (a.rows() * b.rows()) as f64
}

/// Squared maximum mean discrepancy between the probability rows of `p` and
/// `q`, with the inverse multiquadratic kernel `1 / (1 + ‖a − b‖²)`.
pub fn mmd_distance(p: &PredictiveDistribution, q: &PredictiveDistribution) -> Result<f64> {
    same_shape(p, q)?;
    let (pp, qq) = (p.probs(), q.probs());
    let mmd = mean_kernel(&pp, &pp) + mean_kernel(&qq, &qq) - 2.0 * mean_kernel(&pp, &qq);
    Ok(mmd.max(0.0))
}

/// Batch-mean Euclidean distance between corresponding probability rows.
pub fn l2_distance(p: &PredictiveDistribution, q: &PredictiveDistribution) -> Result<f64> {
    same_shape(p, q)?;
    let (pp, qq) = (p.probs(), q.probs());
    let total: f64 = (0..pp.rows())
        .map(|i| {
            pp.row(i)
                .iter()
                .zip(qq.row(i))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    Ok(total / pp.rows() as f64)
}

/// Distance of `estimate` from `target` under `metric`, never negative.
pub fn distance(metric: DistanceMetric, target: &PredictiveDistribution, estimate: &PredictiveDistribution) -> Result<f64> {
    let d = match metric.kl_direction() {
        Some(dir) => kl_divergence(target, estimate, dir)?,
        None if metric == DistanceMetric::Mmd => mmd_distance(target, estimate)?,
        None => l2_distance(target, estimate)?,
    };
    // Rounding can push a KL of identical rows a hair below zero.
    Ok(d.max(0.0))
}

/// Records batch-mean KL divergence between two log-probability nodes.
pub fn kl_on_tape(tape: &mut Tape, target: Var, estimate: Var, direction: KlDirection) -> Result<Var> {
    fn one_way(tape: &mut Tape, t: Var, e: Var) -> Result<Var> {
        let rows = tape.value(t).rows() as f64;
        let p = tape.exp(t)?;
        let diff = tape.sub(t, e)?;
        let terms = tape.mul(p, diff)?;
        let total = tape.sum(terms)?;
        Ok(tape.scale(total, 1.0 / rows)?)
    }
    match direction {
        KlDirection::Forward => one_way(tape, target, estimate),
        KlDirection::Reverse => one_way(tape, estimate, target),
        KlDirection::Symmetric => {
            let f = one_way(tape, target, estimate)?;
            let r = one_way(tape, estimate, target)?;
            Ok(tape.add(f, r)?)
        }
    }
}
