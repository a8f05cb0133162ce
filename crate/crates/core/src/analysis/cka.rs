use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::FeatureMatrix;

/// Linear CKA, or `Undefined` when a centered input is identically zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CkaValue {
    Defined(f64),
    Undefined,
}

impl CkaValue {
    pub fn value(self) -> Option<f64> {
        match self {
            CkaValue::Defined(v) => Some(v),
            CkaValue::Undefined => None,
        }
    }
}

fn centered(f: &FeatureMatrix) -> Vec<Vec<f64>> {
    let (n, d) = (f.rows(), f.cols());
    (0..d)
        .map(|j| {
            let col: Vec<f64> = (0..n).map(|i| f.at(i, j)).collect();
            let mean = col.iter().sum::<f64>() / n as f64;
            col.into_iter().map(|v| v - mean).collect()
        })
        .collect()
}

/// `‖AᵀB‖²_F` for column-major `a`, `b`.
fn cross_frobenius_sq(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for ca in a {
        for cb in b {
            let dot: f64 = ca.iter().zip(cb).map(|(x, y)| x * y).sum();
            total += dot * dot;
        }
    }
    total
}

/// `‖YᵀX‖²_F / (‖XᵀX‖_F ‖YᵀY‖_F)` on column-centered features.
pub fn cka(x: &FeatureMatrix, y: &FeatureMatrix) -> Result<CkaValue> {
    if x.rows() != y.rows() {
        return Err(Error::Shape(format!("CKA of {} and {} rows", x.rows(), y.rows())));
    }
    if x.rows() < 2 {
        return Err(Error::Shape("CKA needs at least two rows".into()));
    }
    let (xc, yc) = (centered(x), centered(y));
    let xx = cross_frobenius_sq(&xc, &xc).sqrt();
    let yy = cross_frobenius_sq(&yc, &yc).sqrt();
    if xx == 0.0 || yy == 0.0 {
        return Ok(CkaValue::Undefined);
    }
    Ok(CkaValue::Defined(cross_frobenius_sq(&yc, &xc) / (xx * yy)))
}
