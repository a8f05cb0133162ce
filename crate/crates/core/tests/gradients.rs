//! Reverse-mode gradients against central finite differences and
//! per-example recomputation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tram::autodiff::{finite_diff_grad, Tape, Tensor, Var};
use tram::models::{Activation, Mlp, MlpConfig, ParameterSet, PassCounter};
use tram::trust_region::{fisher_diag, kl_on_tape, KlDirection};

const H: f64 = 1e-5;

/// Uniform entries in `±[0.1, 1]`, keeping clear of the relu kink.
fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(0.1..1.0);
            if rng.random::<bool>() { v } else { -v }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

type Graph = fn(&mut Tape, &[Var]) -> Var;

/// Compares the tape gradient of `graph` with finite differences on every
/// coordinate of every input.
fn check(graph: Graph, shapes: &[&[usize]], seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ParameterSet::new();
    for (k, s) in shapes.iter().enumerate() {
        params.insert(format!("p{k}"), random(s, &mut rng));
    }
    let names: Vec<String> = params.names().map(String::from).collect();
    let eval = |p: &ParameterSet| -> f64 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = names.iter().map(|n| tape.constant(p.get(n).unwrap().clone())).collect();
        let out = graph(&mut tape, &vars);
        tape.value(out).data()[0]
    };
    let mut tape = Tape::new();
    let vars: Vec<Var> = names.iter().map(|n| tape.param(params.get(n).unwrap().clone())).collect();
    let out = graph(&mut tape, &vars);
    let grads = tape.backward(out).unwrap();
    for (name, &var) in names.iter().zip(&vars) {
        let g = grads.wrt(var).unwrap();
        for i in 0..g.len() {
            let fd = finite_diff_grad(eval, &params, name, i, H);
            let err = (g.data()[i] - fd).abs() / fd.abs().max(1.0);
            assert!(err < 1e-7, "{name}[{i}]: tape {} vs fd {fd}", g.data()[i]);
        }
    }
}

#[test]
fn matmul_and_bias() {
    check(
        |t, v| {
            let y = t.matmul(v[0], v[1]).unwrap();
            let y = t.add(y, v[2]).unwrap();
            let y = t.mul(y, y).unwrap();
            t.sum(y).unwrap()
        },
        &[&[3, 4], &[4, 2], &[2]],
        1,
    );
}

#[test]
fn elementwise_ops() {
    check(
        |t, v| {
            let a = t.tanh(v[0]).unwrap();
            let b = t.relu(v[1]).unwrap();
            let c = t.exp(v[1]).unwrap();
            let d = t.sub(a, b).unwrap();
            let e = t.mul(d, c).unwrap();
            let e = t.scale(e, -0.7).unwrap();
            t.mean(e).unwrap()
        },
        &[&[2, 3], &[2, 3]],
        2,
    );
}

#[test]
fn log_softmax_and_gather() {
    check(
        |t, v| {
            let l = t.log_softmax(v[0]).unwrap();
            let g = t.gather(l, vec![2, 0, 1, 2]).unwrap();
            t.mean(g).unwrap()
        },
        &[&[4, 3]],
        3,
    );
}

#[test]
fn kl_divergence_on_the_tape() {
    for (k, dir) in [KlDirection::Forward, KlDirection::Reverse, KlDirection::Symmetric].into_iter().enumerate() {
        let graph: Graph = match dir {
            KlDirection::Forward => |t, v| {
                let (p, q) = (t.log_softmax(v[0]).unwrap(), t.log_softmax(v[1]).unwrap());
                kl_on_tape(t, p, q, KlDirection::Forward).unwrap()
            },
            KlDirection::Reverse => |t, v| {
                let (p, q) = (t.log_softmax(v[0]).unwrap(), t.log_softmax(v[1]).unwrap());
                kl_on_tape(t, p, q, KlDirection::Reverse).unwrap()
            },
            KlDirection::Symmetric => |t, v| {
                let (p, q) = (t.log_softmax(v[0]).unwrap(), t.log_softmax(v[1]).unwrap());
                kl_on_tape(t, p, q, KlDirection::Symmetric).unwrap()
            },
        };
        check(graph, &[&[3, 4], &[3, 4]], 10 + k as u64);
    }
}

#[test]
fn mlp_loss_gradient_for_each_activation() {
    for activation in [Activation::Tanh, Activation::Relu] {
        let model = Mlp::new(MlpConfig {
            input_dim: 2,
            hidden_dims: vec![5, 4],
            num_classes: 3,
            activation,
            init_scale: 0.8,
            seed: 4,
            embedding_dim: None,
        })
        .unwrap();
        let params = model.init();
        let x = Tensor::from_rows(&[vec![0.5, -1.0], vec![1.5, 0.25], vec![-0.3, 0.9]]).unwrap();
        let labels = [2, 0, 1];
        let lg = model.loss_and_grad(&params, &x, &labels, &PassCounter::new(), false).unwrap();
        let eval = |p: &ParameterSet| model.loss(p, &x, &labels).unwrap();
        for (name, g) in lg.grads.iter() {
            for i in 0..g.len() {
                let fd = finite_diff_grad(eval, &params, name, i, H);
                assert!((g.data()[i] - fd).abs() < 1e-7 * fd.abs().max(1.0), "{activation:?} {name}[{i}]");
            }
        }
    }
}

#[test]
fn fisher_diagonal_matches_per_example_gradients() {
    let model = Mlp::new(MlpConfig {
        hidden_dims: vec![6],
        seed: 9,
        ..MlpConfig::default()
    })
    .unwrap();
    let params = model.init();
    let rows = [vec![0.2, -0.4], vec![1.1, 0.3], vec![-0.8, -0.6], vec![0.0, 1.7]];
    let labels = [1, 0, 0, 1];
    let x = Tensor::from_rows(&rows).unwrap();
    let fisher = fisher_diag(&model, &params, &x, &labels, None, &PassCounter::new()).unwrap();

    // (1/n) Σᵢ gᵢ² with gᵢ from a separate single-example pass.
    let mut oracle = params.zeros_like();
    for (row, &label) in rows.iter().zip(&labels) {
        let xi = Tensor::from_rows(std::slice::from_ref(row)).unwrap();
        let gi = model.loss_and_grad(&params, &xi, &[label], &PassCounter::new(), false).unwrap().grads;
        oracle = oracle.add_scaled(1.0 / rows.len() as f64, &gi.map(|v| v * v)).unwrap();
    }
    let diff = fisher.entries().max_abs_diff(&oracle).unwrap();
    assert!(diff < 1e-14, "max difference {diff}");
}
