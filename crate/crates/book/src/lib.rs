//! Book chapters compiled as doc-tests, one module per chapter so a failing
//! listing names its chapter.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/autodiff.md")]
pub mod autodiff {}

#[doc = include_str!("../../../book/src/perturbations.md")]
pub mod perturbations {}

#[doc = include_str!("../../../book/src/trust_regions.md")]
pub mod trust_regions {}

#[doc = include_str!("../../../book/src/training.md")]
pub mod training {}

#[doc = include_str!("../../../book/src/analysis.md")]
pub mod analysis {}

#[doc = include_str!("../../../book/src/experiments.md")]
pub mod experiments {}
