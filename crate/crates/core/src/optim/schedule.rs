use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Linear warmup to `base_lr`, then polynomial decay towards zero at
/// `total_steps`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub base_lr: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
    pub power: f64,
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        Self {
            base_lr: lr,
            warmup_steps: 0,
            total_steps: 0,
            power: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) || !(self.power >= 0.0) {
            return Err(Error::InvalidConfig("learning rate must be > 0 and decay power >= 0".into()));
        }
        Ok(())
    }

    /// Learning rate of zero-based step `t`.
    pub fn lr(&self, t: usize) -> f64 {
        if t < self.warmup_steps {
            return self.base_lr * (t + 1) as f64 / self.warmup_steps as f64;
        }
        if self.total_steps <= self.warmup_steps || self.power == 0.0 {
            return self.base_lr;
        }
        let span = (self.total_steps - self.warmup_steps) as f64;
        let remaining = (1.0 - (t - self.warmup_steps) as f64 / span).max(0.0);
        self.base_lr * remaining.powf(self.power)
    }
}
