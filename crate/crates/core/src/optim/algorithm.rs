use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::adam::AdamConfig;
use super::perturb::{FsamConfig, SamConfig};
use crate::error::{Error, Result};
use crate::trust_region::{DistanceMetric, TrustRegionKind};

/// Every training method of the comparison family.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Sgd,
    Adam,
    Sam,
    Asam,
    Fsam,
    Trpo,
    R3f,
    Mesa,
    AsamTrpo,
    AsamR3f,
    AsamMesa,
    TramThetaPrev,
    TramTheta0,
    TramX,
    TramFisher,
}

/// Source of the reference distribution of a divergence penalty.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PenaltyMethod {
    Trpo,
    R3f,
    Mesa,
}

impl Algorithm {
    pub const ALL: [Algorithm; 15] = [
        Algorithm::Sgd,
        Algorithm::Adam,
        Algorithm::Sam,
        Algorithm::Asam,
        Algorithm::Fsam,
        Algorithm::Trpo,
        Algorithm::R3f,
        Algorithm::Mesa,
        Algorithm::AsamTrpo,
        Algorithm::AsamR3f,
        Algorithm::AsamMesa,
        Algorithm::TramThetaPrev,
        Algorithm::TramTheta0,
        Algorithm::TramX,
        Algorithm::TramFisher,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Sgd => "sgd",
            Algorithm::Adam => "adam",
            Algorithm::Sam => "sam",
            Algorithm::Asam => "asam",
            Algorithm::Fsam => "fsam",
            Algorithm::Trpo => "trpo",
            Algorithm::R3f => "r3f",
            Algorithm::Mesa => "mesa",
            Algorithm::AsamTrpo => "asam_trpo",
            Algorithm::AsamR3f => "asam_r3f",
            Algorithm::AsamMesa => "asam_mesa",
            Algorithm::TramThetaPrev => "tram_theta_prev",
            Algorithm::TramTheta0 => "tram_theta0",
            Algorithm::TramX => "tram_x",
            Algorithm::TramFisher => "tram_fisher",
        }
    }

    /// Forward and backward passes per step.
    pub fn pass_contract(self) -> (usize, usize) {
        match self {
            Algorithm::Sgd | Algorithm::Adam => (1, 1),
            Algorithm::Sam | Algorithm::Asam | Algorithm::Fsam | Algorithm::TramFisher => (2, 2),
            Algorithm::Trpo | Algorithm::R3f | Algorithm::Mesa => (2, 1),
            Algorithm::AsamTrpo | Algorithm::AsamR3f | Algorithm::AsamMesa => (3, 2),
            Algorithm::TramThetaPrev | Algorithm::TramTheta0 | Algorithm::TramX => (3, 2),
        }
    }

    pub fn is_tram(self) -> bool {
        matches!(
            self,
            Algorithm::TramThetaPrev | Algorithm::TramTheta0 | Algorithm::TramX | Algorithm::TramFisher
        )
    }

    pub fn penalty(self) -> Option<PenaltyMethod> {
        match self {
            Algorithm::Trpo | Algorithm::AsamTrpo => Some(PenaltyMethod::Trpo),
            Algorithm::R3f | Algorithm::AsamR3f => Some(PenaltyMethod::R3f),
            Algorithm::Mesa | Algorithm::AsamMesa => Some(PenaltyMethod::Mesa),
            _ => None,
        }
    }

    pub fn trust_region_kind(self) -> Option<TrustRegionKind> {
        match self {
            Algorithm::TramThetaPrev => Some(TrustRegionKind::ThetaPrev),
            Algorithm::TramTheta0 => Some(TrustRegionKind::Theta0),
            Algorithm::TramX | Algorithm::TramFisher => Some(TrustRegionKind::InputNoise),
            _ => None,
        }
    }

    pub fn uses_noise(self) -> bool {
        matches!(
            self,
            Algorithm::R3f | Algorithm::AsamR3f | Algorithm::TramX | Algorithm::TramFisher
        )
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown algorithm `{s}`")))
    }
}

/// Method hyperparameters. Each field is read only by the algorithms that
/// need it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Hyperparams {
    pub rho_sam: f64,
    pub rho_asam: f64,
    pub rho_cap: Option<f64>,
    pub gamma: f64,
    pub eta: f64,
    pub sigma: f64,
    pub lambda: f64,
    pub metric: DistanceMetric,
    pub ema_decay: f64,
    pub adam: AdamConfig,
    /// Momentum of the SGD inner optimizer.
    pub momentum: f64,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            rho_sam: 0.05,
            rho_asam: 0.5,
            rho_cap: None,
            gamma: 0.1,
            eta: 0.1,
            sigma: 0.1,
            lambda: 0.1,
            metric: DistanceMetric::ForwardKl,
            ema_decay: 0.999,
            adam: AdamConfig::default(),
            momentum: 0.0,
        }
    }
}

impl Hyperparams {
    pub fn sam(&self) -> SamConfig {
        SamConfig {
            rho: self.rho_sam,
            rho_cap: None,
        }
    }

    pub fn asam(&self) -> SamConfig {
        SamConfig {
            rho: self.rho_asam,
            rho_cap: self.rho_cap,
        }
    }

    pub fn fsam(&self) -> FsamConfig {
        FsamConfig {
            gamma: self.gamma,
            eta: self.eta,
        }
    }

    /// Checks the fields `algorithm` reads.
    pub fn validate(&self, algorithm: Algorithm) -> Result<()> {
        self.adam.validate()?;
        match algorithm {
            Algorithm::Sam => self.sam().validate()?,
            Algorithm::Asam | Algorithm::TramThetaPrev | Algorithm::TramTheta0 | Algorithm::TramX => {
                self.asam().validate()?
            }
            Algorithm::AsamTrpo | Algorithm::AsamR3f | Algorithm::AsamMesa => self.asam().validate()?,
            Algorithm::Fsam | Algorithm::TramFisher => self.fsam().validate()?,
            _ => {}
        }
        if algorithm.uses_noise() && !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::InvalidConfig(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if algorithm.penalty().is_some() {
            if !(self.lambda.is_finite() && self.lambda >= 0.0) {
                return Err(Error::InvalidConfig(format!("lambda must be >= 0, got {}", self.lambda)));
            }
            if self.metric.kl_direction().is_none() {
                return Err(Error::InvalidConfig(format!(
                    "penalty methods need a KL metric, got {:?}",
                    self.metric
                )));
            }
        }
        if matches!(algorithm, Algorithm::Mesa | Algorithm::AsamMesa) && !(0.0..1.0).contains(&self.ema_decay) {
            return Err(Error::InvalidConfig(format!("ema_decay must lie in [0, 1), got {}", self.ema_decay)));
        }
        Ok(())
    }
}
