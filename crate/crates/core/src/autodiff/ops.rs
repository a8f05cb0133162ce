//! The operation catalog and its forward rules.

use super::{AutodiffError, Tensor};

/// Operations the tape can record.
///
/// Broadcasting is limited to adding a row vector to every row of a matrix
/// (the bias-add of a dense layer).
#[derive(Clone, Debug, PartialEq)]
pub enum OpKind {
    /// `(n, k) x (k, m) -> (n, m)`
    MatMul,
    /// Elementwise sum of equal shapes, or matrix plus row vector.
    Add,
    /// Elementwise difference of equal shapes.
    Sub,
    /// Elementwise product of equal shapes.
    Mul,
    Relu,
    Tanh,
    Exp,
    /// Row-wise log-softmax of a matrix (or of a single vector).
    LogSoftmax,
    /// Picks one entry per row: `out[i] = x[i, index[i]]`.
    Gather(Vec<usize>),
    /// Mean over every element, producing a scalar.
    Mean,
    /// Sum over every element, producing a scalar.
    Sum,
    /// Multiplication by a constant.
    Scale(f64),
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::MatMul => "matmul",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Relu => "relu",
            OpKind::Tanh => "tanh",
            OpKind::Exp => "exp",
            OpKind::LogSoftmax => "log_softmax",
            OpKind::Gather(_) => "gather",
            OpKind::Mean => "mean",
            OpKind::Sum => "sum",
            OpKind::Scale(_) => "scale",
        }
    }

    pub fn arity(&self) -> usize {
        match self {
            OpKind::MatMul | OpKind::Add | OpKind::Sub | OpKind::Mul => 2,
            _ => 1,
        }
    }
}

fn mismatch(op: &OpKind, inputs: &[&Tensor]) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        op: op.name(),
        shapes: inputs.iter().map(|t| t.shape().to_vec()).collect(),
    }
}

/// Evaluates one catalog operation without recording anything.
pub fn forward_op(kind: &OpKind, inputs: &[&Tensor]) -> Result<Tensor, AutodiffError> {
    if inputs.len() != kind.arity() {
        return Err(AutodiffError::Arity {
            op: kind.name(),
            expected: kind.arity(),
            got: inputs.len(),
        });
    }
    let x = inputs[0];
    match kind {
        OpKind::MatMul => {
            let b = inputs[1];
            if x.rank() != 2 || b.rank() != 2 || x.shape()[1] != b.shape()[0] {
                return Err(mismatch(kind, inputs));
            }
            Ok(matmul(x, b))
        }
        OpKind::Add => {
            let b = inputs[1];
            if x.shape() == b.shape() {
                zip(x, b, |u, v| u + v)
            } else if is_bias_broadcast(x, b) {
                let cols = b.len();
                let mut out = x.clone();
                for (i, v) in out.data_mut().iter_mut().enumerate() {
                    *v += b.data()[i % cols];
                }
                Ok(out)
            } else {
                Err(mismatch(kind, inputs))
            }
        }
        OpKind::Sub | OpKind::Mul => {
            let b = inputs[1];
            if x.shape() != b.shape() {
                return Err(mismatch(kind, inputs));
            }
            match kind {
                OpKind::Sub => zip(x, b, |u, v| u - v),
                _ => zip(x, b, |u, v| u * v),
            }
        }
        OpKind::Relu => Ok(x.map(|v| if v > 0.0 { v } else { 0.0 })),
        OpKind::Tanh => Ok(x.map(f64::tanh)),
        OpKind::Exp => Ok(x.map(f64::exp)),
        OpKind::LogSoftmax => {
            if x.rank() == 0 || x.rank() > 2 || x.is_empty() {
                return Err(mismatch(kind, inputs));
            }
            Ok(log_softmax(x))
        }
        OpKind::Gather(index) => {
            if x.rank() != 2 || index.len() != x.rows() || index.iter().any(|&j| j >= x.cols()) {
                return Err(mismatch(kind, inputs));
            }
            let data = index.iter().enumerate().map(|(i, &j)| x.at(i, j)).collect();
            Ok(Tensor::vector(data))
        }
        OpKind::Mean => {
            if x.is_empty() {
                return Err(mismatch(kind, inputs));
            }
            Ok(Tensor::scalar(x.data().iter().sum::<f64>() / x.len() as f64))
        }
        OpKind::Sum => Ok(Tensor::scalar(x.data().iter().sum())),
        OpKind::Scale(c) => Ok(x.map(|v| c * v)),
    }
}

pub(crate) fn is_bias_broadcast(x: &Tensor, b: &Tensor) -> bool {
    x.rank() == 2 && b.rank() == 1 && x.shape()[1] == b.shape()[0]
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor, AutodiffError> {
    let data = a.data().iter().zip(b.data()).map(|(&u, &v)| f(u, v)).collect();
    Tensor::new(a.shape().to_vec(), data)
}

pub(crate) fn matmul(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, k) = (a.shape()[0], a.shape()[1]);
    let m = b.shape()[1];
    let mut out = vec![0.0; n * m];
    let (ad, bd) = (a.data(), b.data());
    for i in 0..n {
        let orow = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let av = ad[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &bd[p * m..(p + 1) * m];
            for (o, &bv) in orow.iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(vec![n, m], out).expect("matmul output shape")
}

/// `aᵀ b` for `a: (n, k)`, `b: (n, m)`.
pub(crate) fn matmul_tn(a: &Tensor, b: &Tensor) -> Tensor {
    let (n, k) = (a.shape()[0], a.shape()[1]);
    let m = b.shape()[1];
    let mut out = vec![0.0; k * m];
    for i in 0..n {
        let arow = a.row(i);
        let brow = b.row(i);
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            for (o, &bv) in out[p * m..(p + 1) * m].iter_mut().zip(brow) {
                *o += av * bv;
            }
        }
    }
    Tensor::new(vec![k, m], out).expect("matmul_tn output shape")
}

/// `a bᵀ` for `a: (n, m)`, `b: (k, m)`.
pub(crate) fn matmul_nt(a: &Tensor, b: &Tensor) -> Tensor {
    let n = a.shape()[0];
    let k = b.shape()[0];
    let mut out = vec![0.0; n * k];
    for i in 0..n {
        let arow = a.row(i);
        for p in 0..k {
            let brow = b.row(p);
            out[i * k + p] = arow.iter().zip(brow).map(|(u, v)| u * v).sum();
        }
    }
    Tensor::new(vec![n, k], out).expect("matmul_nt output shape")
}

// Max-subtraction keeps every exponent ≤ 0, so the log-sum-exp is finite for
// finite inputs.
fn log_softmax(x: &Tensor) -> Tensor {
    let cols = x.cols();
    let mut out = x.clone();
    for row in out.data_mut().chunks_mut(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}
