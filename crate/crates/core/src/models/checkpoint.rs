//! JSON checkpoints: every tensor stored as base64 of its little-endian
//! `f64` bytes, so a save/load round trip is bit-exact.

use std::path::Path;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde::{Deserialize, Serialize};

use super::{MlpConfig, ParameterSet};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "tram-checkpoint/1";

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StoredTensor {
    name: String,
    shape: Vec<usize>,
    f64_le_base64: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Stored {
    format: String,
    model: MlpConfig,
    parameters: Vec<StoredTensor>,
}

/// A model architecture together with its parameter values.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: MlpConfig,
    pub params: ParameterSet,
}

impl Checkpoint {
    pub fn new(model: MlpConfig, params: ParameterSet) -> Self {
        Self { model, params }
    }

    pub fn to_json(&self) -> Result<String> {
        let parameters = self
            .params
            .iter()
            .map(|(name, t)| {
                let bytes: Vec<u8> = t.data().iter().flat_map(|v| v.to_le_bytes()).collect();
                StoredTensor {
                    name: name.to_string(),
                    shape: t.shape().to_vec(),
                    f64_le_base64: STANDARD.encode(bytes),
                }
            })
            .collect();
        let stored = Stored {
            format: CHECKPOINT_FORMAT.to_string(),
            model: self.model.clone(),
            parameters,
        };
        Ok(serde_json::to_string_pretty(&stored)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let stored: Stored = serde_json::from_str(text)?;
        if stored.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!("unsupported format `{}`", stored.format)));
        }
        let mut params = ParameterSet::new();
        for p in stored.parameters {
            let bytes = STANDARD
                .decode(&p.f64_le_base64)
                .map_err(|e| Error::Checkpoint(format!("{}: {e}", p.name)))?;
            if bytes.len() % 8 != 0 {
                return Err(Error::Checkpoint(format!("{}: truncated values", p.name)));
            }
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let t = Tensor::new(p.shape, data).map_err(|e| Error::Checkpoint(format!("{}: {e}", p.name)))?;
            params.insert(p.name, t);
        }
        Ok(Self {
            model: stored.model,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::harness::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
