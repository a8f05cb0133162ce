//! Perplexity of the next-token model on a Markov-chain sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tram::autodiff::Tensor;
use tram::models::markov::{next_token_pairs, MarkovChain, VOCAB};
use tram::models::{cross_entropy, perplexity, Batch, Mlp, MlpConfig, ParameterSet, PassCounter};
use tram::optim::{Algorithm, Hyperparams, LrSchedule, OptimizerState};

fn counts(seq: &[usize]) -> Vec<Vec<f64>> {
    let mut c = vec![vec![0.0; VOCAB]; VOCAB];
    for w in seq.windows(2) {
        c[w[0]][w[1]] += 1.0;
    }
    c
}

/// `exp(−(1/n) Σᵢⱼ cᵢⱼ ln q(j | i))` with `q(· | i)` from one forward of the
/// one-hot symbol `i`.
fn perplexity_by_transitions(model: &Mlp, params: &ParameterSet, c: &[Vec<f64>]) -> f64 {
    let (mut nll, mut n) = (0.0, 0.0);
    for (i, row) in c.iter().enumerate() {
        let mut onehot = vec![0.0; VOCAB];
        onehot[i] = 1.0;
        let (dist, _) = model.forward(params, &Tensor::from_rows(&[onehot]).unwrap(), &PassCounter::new()).unwrap();
        for (j, &cij) in row.iter().enumerate() {
            nll -= cij * dist.log_probs().at(0, j);
            n += cij;
        }
    }
    (nll / n).exp()
}

fn model_perplexity(model: &Mlp, params: &ParameterSet, x: &Tensor, y: &[usize]) -> f64 {
    let (dist, _) = model.forward(params, x, &PassCounter::new()).unwrap();
    perplexity(cross_entropy(&dist, y).unwrap())
}

#[test]
fn perplexity_matches_the_transition_sum() {
    let chain = MarkovChain::random(VOCAB, 1);
    let seq = chain.sample(2000, 2);
    let (x, y) = next_token_pairs(&seq, VOCAB);
    let model = Mlp::new(MlpConfig::next_token(VOCAB, 8, 16, 3)).unwrap();
    let params = model.init();
    let direct = perplexity_by_transitions(&model, &params, &counts(&seq));
    let via_model = model_perplexity(&model, &params, &x, &y);
    assert!((via_model - direct).abs() < 1e-10 * direct, "{via_model} vs {direct}");
}

#[test]
fn training_approaches_the_empirical_entropy_rate() {
    let chain = MarkovChain::random(VOCAB, 4);
    let seq = chain.sample(3000, 5);
    let (x, y) = next_token_pairs(&seq, VOCAB);
    // The empirical conditionals minimize the training NLL, so their
    // perplexity bounds every model's from below.
    let c = counts(&seq);
    let n: f64 = c.iter().flatten().sum();
    let entropy: f64 = c
        .iter()
        .map(|row| {
            let total: f64 = row.iter().sum();
            row.iter().filter(|&&v| v > 0.0).map(|&v| -v * (v / total).ln()).sum::<f64>()
        })
        .sum::<f64>()
        / n;
    let floor = entropy.exp();

    let model = Mlp::new(MlpConfig::next_token(VOCAB, 16, 32, 6)).unwrap();
    let mut params = model.init();
    let start = model_perplexity(&model, &params, &x, &y);
    let batch = Batch::new(x.clone(), y.clone()).unwrap();
    let mut opt = OptimizerState::new(
        Algorithm::Adam,
        Hyperparams::default(),
        LrSchedule::constant(0.05),
        &params,
        ChaCha8Rng::seed_from_u64(0),
    )
    .unwrap();
    for _ in 0..300 {
        opt.step(&model, &mut params, &batch).unwrap();
    }
    let trained = model_perplexity(&model, &params, &x, &y);
    println!("perplexity {start:.3} -> {trained:.3}, floor {floor:.3}");
    assert!(trained >= floor - 1e-9);
    assert!(trained < 1.05 * floor, "{trained} vs floor {floor}");
}
