//! Closed-form ascent directions of the sharpness-aware family.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{GradMap, ParameterSet};
use crate::trust_region::{DiagFisher, TrustRegionEstimate};

/// Radius of a SAM or ASAM neighbourhood.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamConfig {
    pub rho: f64,
    /// Upper bound applied to a trust-region radius before it replaces `rho`.
    pub rho_cap: Option<f64>,
}

impl SamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho.is_finite() && self.rho >= 0.0) {
            return Err(Error::InvalidConfig(format!("rho must be >= 0, got {}", self.rho)));
        }
        if let Some(cap) = self.rho_cap {
            if !(cap.is_finite() && cap > 0.0) {
                return Err(Error::InvalidConfig(format!("rho_cap must be > 0, got {cap}")));
            }
        }
        Ok(())
    }
}

/// Radius and damping of a Fisher-shaped neighbourhood.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FsamConfig {
    pub gamma: f64,
    pub eta: f64,
}

impl FsamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::InvalidConfig(format!("gamma must be > 0, got {}", self.gamma)));
        }
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(Error::InvalidConfig(format!("eta must be >= 0, got {}", self.eta)));
        }
        Ok(())
    }
}

/// A parameter-space offset `ε` and the radius that produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct Perturbation {
    pub epsilon: ParameterSet,
    pub radius: f64,
    /// The direction was undefined (zero gradient or zero radius) and `ε = 0`.
    pub degenerate: bool,
}

impl Perturbation {
    fn zero(like: &ParameterSet, radius: f64) -> Self {
        Self {
            epsilon: like.zeros_like(),
            radius,
            degenerate: true,
        }
    }

    pub fn norm(&self) -> f64 {
        self.epsilon.global_norm()
    }

    /// `θ + ε` as a new set; a degenerate perturbation returns an exact copy.
    pub fn apply(&self, params: &ParameterSet) -> Result<ParameterSet> {
        if self.degenerate {
            params.check_layout(&self.epsilon, "perturbation")?;
            return Ok(params.snapshot());
        }
        params.add_scaled(1.0, &self.epsilon)
    }
}

fn check_radius(name: &str, r: f64) -> Result<()> {
    if !(r.is_finite() && r >= 0.0) {
        return Err(Error::InvalidConfig(format!("{name} must be finite and >= 0, got {r}")));
    }
    Ok(())
}

/// `ε = ρ g / ‖g‖₂` with the norm over all parameters jointly.
pub fn sam_epsilon(grads: &GradMap, rho: f64) -> Result<Perturbation> {
    check_radius("rho", rho)?;
    let norm = grads.global_norm();
    if rho == 0.0 || norm == 0.0 || !norm.is_finite() {
        return Ok(Perturbation::zero(grads, rho));
    }
    let c = rho / norm;
    Ok(Perturbation {
        epsilon: grads.map(|g| c * g),
        radius: rho,
        degenerate: false,
    })
}

/// `ε = ρ θ² g / ‖θ g‖₂`, elementwise products, joint norm.
pub fn asam_epsilon(params: &ParameterSet, grads: &GradMap, rho: f64) -> Result<Perturbation> {
    check_radius("rho", rho)?;
    params.check_layout(grads, "gradient")?;
    let scaled = params.zip_with(grads, |t, g| t * g)?;
    let norm = scaled.global_norm();
    if rho == 0.0 || norm == 0.0 || !norm.is_finite() {
        return Ok(Perturbation::zero(params, rho));
    }
    let c = rho / norm;
    Ok(Perturbation {
        epsilon: params.zip_with(&scaled, |t, tg| c * (t * tg))?,
        radius: rho,
        degenerate: false,
    })
}

/// `ε = γ (F + η)⁻¹ g / √(gᵀ (F + η)⁻¹ g)` for a diagonal `F`.
pub fn fsam_epsilon(grads: &GradMap, fisher: &DiagFisher, cfg: FsamConfig) -> Result<Perturbation> {
    cfg.validate()?;
    let eta = cfg.eta;
    let precond = grads.zip_with(fisher.entries(), |g, f| g / (f + eta))?;
    let quad = grads.dot(&precond)?;
    if !(quad.is_finite() && quad > 0.0) {
        return Ok(Perturbation::zero(grads, cfg.gamma));
    }
    let c = cfg.gamma / quad.sqrt();
    Ok(Perturbation {
        epsilon: precond.map(|v| c * v),
        radius: cfg.gamma,
        degenerate: false,
    })
}

/// The ASAM direction with the trust-region size as its radius, clipped at
/// `rho_cap` when given.
pub fn tram_epsilon(
    params: &ParameterSet,
    grads: &GradMap,
    d: &TrustRegionEstimate,
    rho_cap: Option<f64>,
) -> Result<Perturbation> {
    let radius = match rho_cap {
        Some(cap) => d.d.min(cap),
        None => d.d,
    };
    asam_epsilon(params, grads, radius)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Tensor;
    use crate::trust_region::{DistanceMetric, TrustRegionKind};

    fn set(v: &[f64]) -> ParameterSet {
        let mut p = ParameterSet::new();
        p.insert("w", Tensor::vector(v.to_vec()));
        p
    }

    fn vals(p: &ParameterSet) -> Vec<f64> {
        p.flatten()
    }

    #[test]
    fn sam_three_four_five() {
        let e = sam_epsilon(&set(&[3.0, 4.0]), 0.05).unwrap();
        let v = vals(&e.epsilon);
        assert!((v[0] - 0.03).abs() < 1e-15 && (v[1] - 0.04).abs() < 1e-15);
        assert!(sam_epsilon(&set(&[3.0, 4.0]), 0.0).unwrap().norm() == 0.0);
    }

    #[test]
    fn zero_gradient_is_flagged() {
        let e = sam_epsilon(&set(&[0.0, 0.0]), 0.05).unwrap();
        assert!(e.degenerate);
        assert_eq!(e.norm(), 0.0);
        let e = asam_epsilon(&set(&[1.0, 2.0]), &set(&[0.0, 0.0]), 0.5).unwrap();
        assert!(e.degenerate);
    }

    #[test]
    fn asam_hand_example() {
        let theta = set(&[2.0, 1.0]);
        let e = asam_epsilon(&theta, &set(&[1.0, 1.0]), 0.5).unwrap();
        let v = vals(&e.epsilon);
        let s5 = 5f64.sqrt();
        assert!((v[0] - 2.0 / s5).abs() < 1e-15 && (v[1] - 0.5 / s5).abs() < 1e-15);
        assert!((v[0] - 0.894427).abs() < 1e-6 && (v[1] - 0.223607).abs() < 1e-6);
        let ratio = ((v[0] / 2.0).powi(2) + v[1].powi(2)).sqrt();
        assert!((ratio - 0.5).abs() < 1e-12);
    }

    #[test]
    fn asam_zero_coordinate_stays_zero() {
        let e = asam_epsilon(&set(&[0.0, 1.5]), &set(&[2.0, -1.0]), 0.5).unwrap();
        assert_eq!(vals(&e.epsilon)[0], 0.0);
    }

    #[test]
    fn tram_hand_example_and_cap() {
        let d = TrustRegionEstimate::new(0.1, TrustRegionKind::ThetaPrev, DistanceMetric::ForwardKl).unwrap();
        let e = tram_epsilon(&set(&[2.0, 1.0]), &set(&[1.0, 1.0]), &d, None).unwrap();
        let v = vals(&e.epsilon);
        assert!((v[0] - 0.178885).abs() < 1e-6 && (v[1] - 0.044721).abs() < 1e-6);
        let capped = tram_epsilon(&set(&[2.0, 1.0]), &set(&[1.0, 1.0]), &d, Some(0.05)).unwrap();
        assert_eq!(capped.radius, 0.05);
        let zero = TrustRegionEstimate::new(0.0, TrustRegionKind::ThetaPrev, DistanceMetric::ForwardKl).unwrap();
        assert!(tram_epsilon(&set(&[2.0, 1.0]), &set(&[1.0, 1.0]), &zero, None).unwrap().degenerate);
    }

    #[test]
    fn fsam_diagonal_hand_solve() {
        let g = set(&[1.0, 2.0, -1.0]);
        let f = DiagFisher::from_row_squares(set(&[1.0, 0.5, 3.0]), 1).unwrap();
        let e = fsam_epsilon(&g, &f, FsamConfig { gamma: 0.1, eta: 0.0 }).unwrap();
        // (F)⁻¹g = (1, 4, -1/3); gᵀF⁻¹g = 1 + 8 + 1/3.
        let q: f64 = 1.0 + 8.0 + 1.0 / 3.0;
        let oracle = [0.1 / q.sqrt(), 0.4 / q.sqrt(), -0.1 / (3.0 * q.sqrt())];
        for (a, b) in vals(&e.epsilon).iter().zip(oracle) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn identity_fisher_reduces_to_sam() {
        let g = set(&[0.3, -1.2, 2.0]);
        let f = DiagFisher::from_row_squares(set(&[1.0, 1.0, 1.0]), 1).unwrap();
        let a = fsam_epsilon(&g, &f, FsamConfig { gamma: 0.2, eta: 0.0 }).unwrap();
        let b = sam_epsilon(&g, 0.2).unwrap();
        assert!(a.epsilon.max_abs_diff(&b.epsilon).unwrap() < 1e-15);
    }

    #[test]
    fn degenerate_apply_copies_exactly() {
        let theta = set(&[-0.0, 1.0]);
        let e = sam_epsilon(&set(&[0.0, 0.0]), 0.05).unwrap();
        assert!(e.apply(&theta).unwrap().bitwise_eq(&theta));
    }
}
