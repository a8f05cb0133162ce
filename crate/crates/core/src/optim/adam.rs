use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{GradMap, ParameterSet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Coefficient of `½‖θ‖²` added to the loss.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::InvalidConfig(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if !(self.eps > 0.0 && self.weight_decay >= 0.0) {
            return Err(Error::InvalidConfig("adam eps must be > 0 and weight decay >= 0".into()));
        }
        Ok(())
    }
}

fn check_grads(params: &ParameterSet, grads: &GradMap) -> Result<()> {
    for (name, t) in params.iter() {
        match grads.get(name) {
            None => return Err(Error::MissingGradient(name.to_string())),
            Some(g) if g.shape() != t.shape() => {
                return Err(Error::Shape(format!("gradient of `{name}` has shape {:?}", g.shape())))
            }
            Some(_) => {}
        }
    }
    Ok(())
}

/// Bias-corrected first and second moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    config: AdamConfig,
    m: ParameterSet,
    v: ParameterSet,
    t: u64,
}

impl AdamState {
    pub fn new(params: &ParameterSet, config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            t: 0,
        })
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// Updates `params` in place with learning rate `lr`.
    pub fn step(&mut self, params: &mut ParameterSet, grads: &GradMap, lr: f64) -> Result<()> {
        check_grads(params, grads)?;
        self.t += 1;
        let AdamConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let c1 = 1.0 - beta1.powf(self.t as f64);
        let c2 = 1.0 - beta2.powf(self.t as f64);
        for (name, theta) in params.iter_mut() {
            let g = grads[name].data();
            let m = self.m.get_mut(name).expect("moment layout").data_mut();
            let v = self.v.get_mut(name).expect("moment layout").data_mut();
            for (i, p) in theta.data_mut().iter_mut().enumerate() {
                let gi = if weight_decay > 0.0 { g[i] + weight_decay * *p } else { g[i] };
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Plain gradient descent, optionally with heavy-ball momentum.
#[derive(Clone, Debug, PartialEq)]
pub struct SgdState {
    momentum: f64,
    weight_decay: f64,
    velocity: ParameterSet,
}

impl SgdState {
    pub fn new(params: &ParameterSet, momentum: f64, weight_decay: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&momentum) || weight_decay < 0.0 {
            return Err(Error::InvalidConfig("momentum must lie in [0, 1), weight decay >= 0".into()));
        }
        Ok(Self {
            momentum,
            weight_decay,
            velocity: params.zeros_like(),
        })
    }

    pub fn step(&mut self, params: &mut ParameterSet, grads: &GradMap, lr: f64) -> Result<()> {
        check_grads(params, grads)?;
        for (name, theta) in params.iter_mut() {
            let g = grads[name].data();
            let vel = self.velocity.get_mut(name).expect("velocity layout").data_mut();
            for (i, p) in theta.data_mut().iter_mut().enumerate() {
                let gi = g[i] + self.weight_decay * *p;
                vel[i] = self.momentum * vel[i] + gi;
                *p -= lr * vel[i];
            }
        }
        Ok(())
    }
}

/// The descent rule shared by every algorithm of a run.
#[derive(Clone, Debug, PartialEq)]
pub enum InnerOptimizer {
    Adam(AdamState),
    Sgd(SgdState),
}

impl InnerOptimizer {
    pub fn step(&mut self, params: &mut ParameterSet, grads: &GradMap, lr: f64) -> Result<()> {
        match self {
            InnerOptimizer::Adam(s) => s.step(params, grads, lr),
            InnerOptimizer::Sgd(s) => s.step(params, grads, lr),
        }
    }
}
