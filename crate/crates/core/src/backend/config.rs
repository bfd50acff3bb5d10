// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use super::tokenizer::MIN_VOCAB;
use crate::error::{LabError, Result};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub n_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub vocab_size: usize,
    pub max_context: usize,
    pub seed: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        BackendConfig {
            n_layers: 4,
            d_model: 64,
            n_heads: 4,
            vocab_size: 512,
            max_context: 256,
            seed: 7,
        }
    }
}

impl BackendConfig {
    pub fn validate(&self) -> Result<()> {
        let dims = [
            ("n_layers", self.n_layers),
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("vocab_size", self.vocab_size),
            ("max_context", self.max_context),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(LabError::Invalid(format!("{name} must be >= 1")));
            }
        }
        if self.d_model % self.n_heads != 0 {
            return Err(LabError::Invalid(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.vocab_size < MIN_VOCAB {
            return Err(LabError::Invalid(format!(
                "vocab_size {} is below the byte-fallback minimum {MIN_VOCAB}",
                self.vocab_size
            )));
        }
        if self.n_layers > u16::MAX as usize {
            return Err(LabError::Invalid("n_layers exceeds the u16 layer field".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let config: BackendConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}
