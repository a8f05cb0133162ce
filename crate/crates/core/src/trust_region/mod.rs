//! Trust-region sizes measured in function space, divergence penalties, and
//! the statistics used to shape perturbations.

mod divergence;
mod ema;
mod estimate;
mod fisher;
mod penalty;

pub use divergence::{distance, kl_divergence, kl_on_tape, l2_distance, mmd_distance, DistanceMetric, KlDirection};
pub use ema::EmaState;
pub use estimate::{estimate_d_theta, estimate_d_x, NoiseSource, TrustRegionEstimate, TrustRegionKind};
pub use fisher::{fisher_diag, DiagFisher};
pub use penalty::penalized_loss;
