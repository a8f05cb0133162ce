use crate::error::{Error, Result};
use crate::models::ParameterSet;

/// Exponential moving average of parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct EmaState {
    shadow: ParameterSet,
    decay: f64,
}

impl EmaState {
    /// Starts the shadow at `params`.
    pub fn new(params: &ParameterSet, decay: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&decay) {
            return Err(Error::InvalidConfig(format!("EMA decay must lie in [0, 1), got {decay}")));
        }
        Ok(Self {
            shadow: params.snapshot(),
            decay,
        })
    }

    pub fn shadow(&self) -> &ParameterSet {
        &self.shadow
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    /// `shadow ← decay·shadow + (1 − decay)·params`.
    pub fn update(&mut self, params: &ParameterSet) -> Result<()> {
        let a = self.decay;
        self.shadow = self.shadow.zip_with(params, |s, p| a * s + (1.0 - a) * p)?;
        Ok(())
    }
}
