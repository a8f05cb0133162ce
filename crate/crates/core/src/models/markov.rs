//! First-order Markov sequences for the next-token model.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

/// Default alphabet size.
pub const VOCAB: usize = 16;

#[derive(Clone, Debug, PartialEq)]
pub struct MarkovChain {
    /// Row `i` is the distribution of the symbol following `i`.
    transitions: Vec<Vec<f64>>,
}

impl MarkovChain {
    pub fn new(transitions: Vec<Vec<f64>>) -> Result<Self> {
        let v = transitions.len();
        for row in &transitions {
            let total: f64 = row.iter().sum();
            if row.len() != v || row.iter().any(|&p| !(0.0..=1.0).contains(&p)) || (total - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidConfig("transition rows must be distributions over the alphabet".into()));
            }
        }
        Ok(Self { transitions })
    }

    /// Random sparse-ish chain: each symbol prefers a few successors.
    pub fn random(vocab: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let transitions = (0..vocab)
            .map(|_| {
                let w: Vec<f64> = (0..vocab).map(|_| rng.random::<f64>().powi(4) + 1e-3).collect();
                let total: f64 = w.iter().sum();
                w.into_iter().map(|x| x / total).collect()
            })
            .collect();
        Self { transitions }
    }

    pub fn vocab(&self) -> usize {
        self.transitions.len()
    }

    pub fn prob(&self, from: usize, to: usize) -> f64 {
        self.transitions[from][to]
    }

    pub fn sample(&self, len: usize, seed: u64) -> Vec<usize> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut state = rng.random_range(0..self.vocab());
        let mut seq = Vec::with_capacity(len);
        for _ in 0..len {
            seq.push(state);
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let row = &self.transitions[state];
            state = row.len() - 1;
            for (j, p) in row.iter().enumerate() {
                acc += p;
                if u < acc {
                    state = j;
                    break;
                }
            }
        }
        seq
    }
}

/// One-hot encoded previous symbols and the symbols that follow them.
pub fn next_token_pairs(seq: &[usize], vocab: usize) -> (Tensor, Vec<usize>) {
    let n = seq.len().saturating_sub(1);
    let mut x = Tensor::zeros(&[n, vocab]);
    for (i, &s) in seq.iter().take(n).enumerate() {
        x.data_mut()[i * vocab + s] = 1.0;
    }
    (x, seq.iter().skip(1).copied().collect())
}
