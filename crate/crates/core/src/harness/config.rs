use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::suite::SuiteParams;
use crate::analysis::{SharpnessConfig, SignificanceTest};
use crate::error::{Error, Result};
use crate::models::MlpConfig;
use crate::optim::{Algorithm, Hyperparams, LrSchedule};

/// Environment variable that replaces `output_dir` when set.
pub const OUT_DIR_ENV: &str = "TRAM_OUT_DIR";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteConfig {
    pub seed: u64,
    pub k_correlated: usize,
    pub k_anticorrelated: usize,
    pub params: SuiteParams,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            k_correlated: 5,
            k_anticorrelated: 2,
            params: SuiteParams::default(),
        }
    }
}

/// Everything that determines a batch of training runs. Every field has a
/// default; unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Architecture; its `seed` is replaced by each run's seed.
    pub model: MlpConfig,
    pub algorithms: Vec<Algorithm>,
    pub hyperparams: Hyperparams,
    pub steps: usize,
    pub warmup_steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub decay_power: f64,
    pub seeds: Vec<u64>,
    /// Validation-loss checkpoint interval, in steps.
    pub eval_every: usize,
    pub suite: SuiteConfig,
    pub sharpness: SharpnessConfig,
    pub significance: SignificanceTest,
    /// Algorithm every other one is tested against.
    pub baseline: Algorithm,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: MlpConfig::default(),
            algorithms: vec![Algorithm::Adam],
            hyperparams: Hyperparams::default(),
            steps: 2000,
            warmup_steps: 200,
            batch_size: 32,
            lr: 1e-3,
            decay_power: 1.0,
            seeds: vec![0],
            eval_every: 100,
            suite: SuiteConfig::default(),
            sharpness: SharpnessConfig::default(),
            significance: SignificanceTest::Wilcoxon,
            baseline: Algorithm::Adam,
            output_dir: PathBuf::from("results"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::InvalidConfig(msg) => Error::InvalidConfig(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.algorithms.is_empty() {
            return Err(Error::InvalidConfig("algorithms must not be empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("seeds must not be empty".into()));
        }
        for &a in &self.algorithms {
            self.hyperparams.validate(a)?;
        }
        if self.batch_size == 0 || self.eval_every == 0 {
            return Err(Error::InvalidConfig("batch_size and eval_every must be positive".into()));
        }
        self.schedule().validate()?;
        self.sharpness.validate()?;
        self.suite.params.validate()?;
        if self.model.input_dim != 2 || self.model.num_classes != super::suite::NUM_CLASSES {
            return Err(Error::InvalidConfig(format!(
                "suite tasks need input_dim 2 and {} classes",
                super::suite::NUM_CLASSES
            )));
        }
        Ok(())
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            base_lr: self.lr,
            warmup_steps: self.warmup_steps,
            total_steps: self.steps,
            power: self.decay_power,
        }
    }

    /// Applies `key=value`, where `key` is a dotted path such as
    /// `hyperparams.rho_asam` and `value` is JSON (bare words are strings).
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("override `{assignment}` is not key=value")))?;
        let value: Value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut tree = serde_json::to_value(&*self)?;
        let mut slot = &mut tree;
        for part in key.split('.') {
            slot = slot
                .as_object_mut()
                .and_then(|o| o.get_mut(part))
                .ok_or_else(|| Error::InvalidConfig(format!("unknown config key `{key}`")))?;
        }
        *slot = value;
        let updated: Self = serde_json::from_value(tree).map_err(|e| Error::InvalidConfig(format!("{key}: {e}")))?;
        updated.validate()?;
        *self = updated;
        Ok(())
    }

    /// `output_dir`, unless the environment overrides it.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUT_DIR_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output_dir.clone(),
        }
    }
}
