//! Wengert tape: records a forward pass, then replays it in reverse.

use super::ops::{self, forward_op, OpKind};
use super::{AutodiffError, Tensor};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
struct Node {
    op: Option<OpKind>,
    inputs: Vec<usize>,
    value: Tensor,
    requires_grad: bool,
}

/// Append-only record of one forward pass.
///
/// Nodes are pushed in evaluation order, so every node's inputs precede it.
/// [`Tape::backward`] consumes the tape; a new forward pass builds a new one.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Adjoints of every node reached by a backward sweep.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    sq: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the loss with respect to `var`, if `var` requires grad.
    pub fn wrt(&self, var: Var) -> Option<&Tensor> {
        self.grads.get(var.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, var: Var) -> Option<Tensor> {
        self.grads.get_mut(var.0).and_then(Option::take)
    }

    /// Sum over batch rows of the squared per-row gradient contributions of a
    /// leaf. Only populated by [`Tape::backward_with_row_squares`].
    pub fn row_squares(&self, var: Var) -> Option<&Tensor> {
        self.sq.get(var.0).and_then(Option::as_ref)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            op: None,
            inputs: Vec::new(),
            value,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    /// A leaf that is treated as a constant.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, var: Var) -> &Tensor {
        &self.nodes[var.0].value
    }

    pub fn requires_grad(&self, var: Var) -> bool {
        self.nodes[var.0].requires_grad
    }

    /// Evaluates `kind` on recorded inputs and records the result.
    pub fn apply(&mut self, kind: OpKind, inputs: &[Var]) -> Result<Var, AutodiffError> {
        if let Some(bad) = inputs.iter().find(|v| v.0 >= self.nodes.len()) {
            return Err(AutodiffError::UnknownVar(bad.0));
        }
        let values: Vec<&Tensor> = inputs.iter().map(|v| &self.nodes[v.0].value).collect();
        let value = forward_op(&kind, &values)?;
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            op: Some(kind),
            inputs: inputs.iter().map(|v| v.0).collect(),
            value,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.apply(OpKind::MatMul, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Sub, &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Mul, &[a, b])
    }

    pub fn relu(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Relu, &[x])
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Tanh, &[x])
    }

    pub fn exp(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Exp, &[x])
    }

    pub fn log_softmax(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.apply(OpKind::LogSoftmax, &[x])
    }

    pub fn gather(&mut self, x: Var, index: Vec<usize>) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Gather(index), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Mean, &[x])
    }

    pub fn sum(&mut self, x: Var) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Sum, &[x])
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var, AutodiffError> {
        self.apply(OpKind::Scale(c), &[x])
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(self, loss: Var) -> Result<Gradients, AutodiffError> {
        self.sweep(loss, false)
    }

    /// Reverse sweep that also accumulates, for every leaf consumed as the
    /// right operand of a matmul or as a bias, the sum over batch rows of the
    /// squared per-row gradient. When the loss is a sum of independent
    /// per-row terms this is `Σᵢ (∂ℓᵢ/∂θ)²` from a single sweep.
    ///
    /// Each such leaf must be consumed exactly once.
    pub fn backward_with_row_squares(self, loss: Var) -> Result<Gradients, AutodiffError> {
        self.sweep(loss, true)
    }

    fn sweep(self, loss: Var, row_squares: bool) -> Result<Gradients, AutodiffError> {
        let n = self.nodes.len();
        if loss.0 >= n {
            return Err(AutodiffError::UnknownVar(loss.0));
        }
        let loss_value = &self.nodes[loss.0].value;
        if loss_value.len() != 1 {
            return Err(AutodiffError::NonScalarLoss(loss_value.shape().to_vec()));
        }
        if row_squares {
            self.check_single_use()?;
        }

        let mut grads: Vec<Option<Tensor>> = (0..n).map(|_| None).collect();
        let mut sq: Vec<Option<Tensor>> = (0..n).map(|_| None).collect();
        if !self.nodes[loss.0].requires_grad {
            return Ok(Gradients { grads, sq });
        }
        grads[loss.0] = Some(Tensor::full(loss_value.shape(), 1.0));

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            let Some(op) = &node.op else { continue };
            let Some(upstream) = grads[id].take() else { continue };
            let inputs: Vec<&Node> = node.inputs.iter().map(|&i| &self.nodes[i]).collect();
            let contributions = vjp(op, &inputs, &node.value, &upstream);
            if row_squares {
                self.row_square_terms(op, node, &upstream, &mut sq);
            }
            for (slot, contrib) in node.inputs.iter().zip(contributions) {
                let Some(contrib) = contrib else { continue };
                match &mut grads[*slot] {
                    Some(acc) => {
                        for (a, c) in acc.data_mut().iter_mut().zip(contrib.data()) {
                            *a += c;
                        }
                    }
                    empty => *empty = Some(contrib),
                }
            }
        }
        // Leaves keep their adjoints; interior ones were consumed above.
        for (g, node) in grads.iter_mut().zip(&self.nodes) {
            if !node.requires_grad || node.op.is_some() {
                *g = None;
            }
        }
        Ok(Gradients { grads, sq })
    }

    fn check_single_use(&self) -> Result<(), AutodiffError> {
        let mut uses = vec![0usize; self.nodes.len()];
        for node in &self.nodes {
            for &i in &node.inputs {
                uses[i] += 1;
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.op.is_none() && node.requires_grad && uses[i] > 1 {
                return Err(AutodiffError::SharedLeaf(i));
            }
        }
        Ok(())
    }

    fn row_square_terms(&self, op: &OpKind, node: &Node, upstream: &Tensor, sq: &mut [Option<Tensor>]) {
        let is_param_leaf = |i: usize| self.nodes[i].op.is_none() && self.nodes[i].requires_grad;
        match op {
            OpKind::MatMul if is_param_leaf(node.inputs[1]) => {
                let a = &self.nodes[node.inputs[0]].value;
                let a2 = a.map(|v| v * v);
                let g2 = upstream.map(|v| v * v);
                sq[node.inputs[1]] = Some(ops::matmul_tn(&a2, &g2));
            }
            OpKind::Add if is_param_leaf(node.inputs[1]) => {
                let b = &self.nodes[node.inputs[1]].value;
                if ops::is_bias_broadcast(&self.nodes[node.inputs[0]].value, b) {
                    let cols = b.len();
                    let mut acc = vec![0.0; cols];
                    for (k, g) in upstream.data().iter().enumerate() {
                        acc[k % cols] += g * g;
                    }
                    sq[node.inputs[1]] = Some(Tensor::vector(acc));
                }
            }
            _ => {}
        }
    }
}

/// Vector-Jacobian products of `op` for each input that requires grad.
fn vjp(op: &OpKind, inputs: &[&Node], out: &Tensor, g: &Tensor) -> Vec<Option<Tensor>> {
    let wants = |i: usize| inputs[i].requires_grad;
    match op {
        OpKind::MatMul => {
            let (a, b) = (&inputs[0].value, &inputs[1].value);
            vec![
                wants(0).then(|| ops::matmul_nt(g, b)),
                wants(1).then(|| ops::matmul_tn(a, g)),
            ]
        }
        OpKind::Add => {
            let b = &inputs[1].value;
            let gb = wants(1).then(|| {
                if b.shape() == g.shape() {
                    g.clone()
                } else {
                    let cols = b.len();
                    let mut acc = vec![0.0; cols];
                    for (k, v) in g.data().iter().enumerate() {
                        acc[k % cols] += v;
                    }
                    Tensor::vector(acc)
                }
            });
            vec![wants(0).then(|| g.clone()), gb]
        }
        OpKind::Sub => vec![wants(0).then(|| g.clone()), wants(1).then(|| g.map(|v| -v))],
        OpKind::Mul => {
            let (a, b) = (&inputs[0].value, &inputs[1].value);
            vec![
                wants(0).then(|| hadamard(g, b)),
                wants(1).then(|| hadamard(g, a)),
            ]
        }
        OpKind::Relu => {
            let x = &inputs[0].value;
            let data = g
                .data()
                .iter()
                .zip(x.data())
                .map(|(gv, xv)| if *xv > 0.0 { *gv } else { 0.0 })
                .collect();
            vec![wants(0).then(|| with_data(x, data))]
        }
        OpKind::Tanh => {
            let data = g.data().iter().zip(out.data()).map(|(gv, y)| gv * (1.0 - y * y)).collect();
            vec![wants(0).then(|| with_data(out, data))]
        }
        OpKind::Exp => vec![wants(0).then(|| hadamard(g, out))],
        OpKind::LogSoftmax => {
            // dx = g - softmax(x) * Σ_row g
            let cols = out.cols();
            let mut data = g.data().to_vec();
            for (row, (grow, yrow)) in data
                .chunks_mut(cols)
                .zip(g.data().chunks(cols).zip(out.data().chunks(cols)))
            {
                let total: f64 = grow.iter().sum();
                for (d, y) in row.iter_mut().zip(yrow) {
                    *d -= y.exp() * total;
                }
            }
            vec![wants(0).then(|| with_data(out, data))]
        }
        OpKind::Gather(index) => {
            let x = &inputs[0].value;
            let mut dx = Tensor::zeros(x.shape());
            let cols = x.cols();
            for (i, (&j, gv)) in index.iter().zip(g.data()).enumerate() {
                dx.data_mut()[i * cols + j] += gv;
            }
            vec![wants(0).then_some(dx)]
        }
        OpKind::Mean => {
            let x = &inputs[0].value;
            let v = g.data()[0] / x.len() as f64;
            vec![wants(0).then(|| Tensor::full(x.shape(), v))]
        }
        OpKind::Sum => {
            let x = &inputs[0].value;
            vec![wants(0).then(|| Tensor::full(x.shape(), g.data()[0]))]
        }
        OpKind::Scale(c) => vec![wants(0).then(|| g.map(|v| c * v))],
    }
}

fn hadamard(a: &Tensor, b: &Tensor) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(u, v)| u * v).collect();
    with_data(a, data)
}

fn with_data(like: &Tensor, data: Vec<f64>) -> Tensor {
    Tensor::new(like.shape().to_vec(), data).expect("same element count")
}
