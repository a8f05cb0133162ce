//! The optimizer family: inner descent rules, ascent perturbations and the
//! per-method step procedures with their forward/backward budgets.

mod adam;
mod algorithm;
mod perturb;
mod schedule;
mod trainer;

pub use adam::{AdamConfig, AdamState, InnerOptimizer, SgdState};
pub use algorithm::{Algorithm, Hyperparams, PenaltyMethod};
pub use perturb::{asam_epsilon, fsam_epsilon, sam_epsilon, tram_epsilon, FsamConfig, Perturbation, SamConfig};
pub use schedule::LrSchedule;
pub use trainer::{OptimizerState, StepReport};
