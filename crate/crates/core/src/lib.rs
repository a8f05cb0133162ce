//! Trust-region aware sharpness minimization and its comparison family,
//! built on a small reverse-mode autodiff engine, with the analysis
//! instruments and experiment harness used to study out-of-domain transfer.

pub mod analysis;
pub mod autodiff;
pub mod error;
pub mod harness;
pub mod models;
pub mod optim;
pub mod trust_region;

pub use error::{Error, Result};
