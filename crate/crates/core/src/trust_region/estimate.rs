use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::divergence::{distance, DistanceMetric};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::models::{Mlp, ParameterSet, PassCounter, PredictiveDistribution};

/// Reference against which a trust region is measured.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrustRegionKind {
    /// Parameters before the previous update.
    ThetaPrev,
    /// Parameters at initialization.
    Theta0,
    /// The same parameters on a noised copy of the inputs.
    InputNoise,
}

/// A measured trust-region size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrustRegionEstimate {
    /// Always finite and `>= 0`.
    pub d: f64,
    pub kind: TrustRegionKind,
    pub metric: DistanceMetric,
}

impl TrustRegionEstimate {
    pub fn new(d: f64, kind: TrustRegionKind, metric: DistanceMetric) -> Result<Self> {
        if !d.is_finite() {
            return Err(Error::NonFinite(format!("trust-region distance ({kind:?})")));
        }
        Ok(Self { d: d.max(0.0), kind, metric })
    }
}

/// Distance of the current predictions from those of a parameter snapshot.
/// `p_ref` is the target of the divergence.
pub fn estimate_d_theta(
    p_ref: &PredictiveDistribution,
    p_cur: &PredictiveDistribution,
    kind: TrustRegionKind,
    metric: DistanceMetric,
) -> Result<TrustRegionEstimate> {
    if kind == TrustRegionKind::InputNoise {
        return Err(Error::InvalidConfig("input-noise regions are measured with estimate_d_x".into()));
    }
    TrustRegionEstimate::new(distance(metric, p_ref, p_cur)?, kind, metric)
}

/// Isotropic Gaussian input noise with its own seeded generator.
#[derive(Clone, Debug)]
pub struct NoiseSource {
    normal: Normal<f64>,
    rng: ChaCha8Rng,
}

impl NoiseSource {
    pub fn new(sigma: f64, seed: u64) -> Result<Self> {
        Self::from_rng(sigma, ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn from_rng(sigma: f64, rng: ChaCha8Rng) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::InvalidConfig(format!("noise scale must be positive, got {sigma}")));
        }
        let normal = Normal::new(0.0, sigma).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        Ok(Self { normal, rng })
    }

    pub fn sigma(&self) -> f64 {
        self.normal.std_dev()
    }

    /// `x + z` with one independent draw per element.
    pub fn perturb(&mut self, x: &Tensor) -> Tensor {
        let mut out = x.clone();
        for v in out.data_mut() {
            *v += self.normal.sample(&mut self.rng);
        }
        out
    }
}

/// Distance of predictions on a noised batch from those on the clean batch,
/// with the noised predictions as the target. `clean` reuses an already
/// computed clean pass; otherwise one is run.
pub fn estimate_d_x(
    model: &Mlp,
    params: &ParameterSet,
    batch_x: &Tensor,
    clean: Option<&PredictiveDistribution>,
    noise: &mut NoiseSource,
    metric: DistanceMetric,
    counter: &PassCounter,
) -> Result<TrustRegionEstimate> {
    let owned;
    let clean = match clean {
        Some(c) => c,
        None => {
            owned = model.forward(params, batch_x, counter)?.0;
            &owned
        }
    };
    let noisy_x = noise.perturb(batch_x);
    let (noisy, _) = model.forward(params, &noisy_x, counter)?;
    TrustRegionEstimate::new(distance(metric, &noisy, clean)?, TrustRegionKind::InputNoise, metric)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::MlpConfig;

    #[test]
    fn identical_snapshot_gives_zero() {
        let model = Mlp::new(MlpConfig::default()).unwrap();
        let params = model.init();
        let x = Tensor::from_rows(&[vec![0.3, -0.2], vec![1.0, 0.5]]).unwrap();
        let (p, _) = model.forward(&params, &x, &PassCounter::new()).unwrap();
        let est = estimate_d_theta(&p, &p, TrustRegionKind::ThetaPrev, DistanceMetric::ForwardKl).unwrap();
        assert_eq!(est.d, 0.0);
    }

    #[test]
    fn noise_source_is_reproducible_and_validated() {
        let x = Tensor::zeros(&[4, 3]);
        let a = NoiseSource::new(0.1, 7).unwrap().perturb(&x);
        let b = NoiseSource::new(0.1, 7).unwrap().perturb(&x);
        assert_eq!(a, b);
        assert!(NoiseSource::new(0.0, 7).is_err());
        assert!(NoiseSource::new(f64::NAN, 7).is_err());
    }

    #[test]
    fn d_x_counts_the_passes_it_runs() {
        let model = Mlp::new(MlpConfig::default()).unwrap();
        let params = model.init();
        let x = Tensor::from_rows(&[vec![0.3, -0.2], vec![1.0, 0.5]]).unwrap();
        let counter = PassCounter::new();
        let mut noise = NoiseSource::new(0.1, 1).unwrap();
        let est = estimate_d_x(&model, &params, &x, None, &mut noise, DistanceMetric::ForwardKl, &counter).unwrap();
        assert_eq!(counter.counts(), (2, 0));
        assert!(est.d > 0.0);
        assert_eq!(est.kind, TrustRegionKind::InputNoise);
    }

    #[test]
    fn non_finite_distance_is_rejected() {
        assert!(TrustRegionEstimate::new(f64::INFINITY, TrustRegionKind::Theta0, DistanceMetric::L2).is_err());
    }
}
