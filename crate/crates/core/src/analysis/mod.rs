//! Measurement instruments: ε-sharpness, linear CKA, correlation and
//! significance tests.

mod cka;
mod sharpness;
mod stats;

pub use cka::{cka, CkaValue};
pub use sharpness::{epsilon_sharpness, model_sharpness, sharpness_box, SharpnessConfig};
pub use stats::{
    ks_two_sample, linear_fit, pearson, significance, wilcoxon_signed_rank, Correlation, KsResult, SignificanceTest,
};
