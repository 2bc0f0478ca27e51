//! Model shape and attention-bias configuration.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("hidden_size {hidden} not divisible by n_heads {heads}")]
    HeadSplit { hidden: usize, heads: usize },
    #[error("{field} must be positive")]
    Zero { field: &'static str },
    #[error("recency decay base must lie in (0, 1), got {0}")]
    BadDecay(f64),
    #[error("tree-planting weight must be non-negative, got {0}")]
    BadWeight(f64),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden_size: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub ffn_dim: usize,
    pub vocab_size: usize,
    pub context_len: usize,
    pub dropout_rate: f64,
}

impl ModelConfig {
    /// Published shapes; vocab and context are corpus-dependent and filled
    /// in by the caller.
    pub fn preset(name: &str, vocab_size: usize, context_len: usize) -> Result<Self, ConfigError> {
        let (hidden_size, n_heads, n_layers, ffn_dim) = match name {
            "mini" => (512, 8, 4, 2048),
            "xs" => (512, 8, 6, 2048),
            "xxs" => (512, 4, 6, 2048),
            "small" => (768, 12, 12, 3072),
            other => return Err(ConfigError::UnknownPreset(other.to_string())),
        };
        let cfg = ModelConfig {
            hidden_size,
            n_heads,
            n_layers,
            ffn_dim,
            vocab_size,
            context_len,
            dropout_rate: 0.1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positives = [
            ("hidden_size", self.hidden_size),
            ("n_heads", self.n_heads),
            ("n_layers", self.n_layers),
            ("ffn_dim", self.ffn_dim),
            ("vocab_size", self.vocab_size),
            ("context_len", self.context_len),
        ];
        for (field, v) in positives {
            if v == 0 {
                return Err(ConfigError::Zero { field });
            }
        }
        if self.hidden_size % self.n_heads != 0 {
            return Err(ConfigError::HeadSplit {
                hidden: self.hidden_size,
                heads: self.n_heads,
            });
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.hidden_size / self.n_heads
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AttentionBiasMode {
    #[default]
    None,
    Recency {
        r: f64,
        /// Add the bias after the 1/sqrt(d_head) scaling (default) or before.
        #[serde(default = "default_true")]
        post_scale: bool,
    },
    TreePlanted {
        lambda: f64,
        /// Heads supervised per layer, counted from head 0.
        #[serde(default = "default_one")]
        heads_per_layer: usize,
    },
}

fn default_true() -> bool {
    true
}

fn default_one() -> usize {
    1
}

impl AttentionBiasMode {
    pub fn recency(r: f64) -> Self {
        AttentionBiasMode::Recency { r, post_scale: true }
    }

    pub fn tree_planted(lambda: f64) -> Self {
        AttentionBiasMode::TreePlanted {
            lambda,
            heads_per_layer: 1,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match *self {
            AttentionBiasMode::None => Ok(()),
            AttentionBiasMode::Recency { r, .. } => {
                if r <= 0.0 || r >= 1.0 {
                    Err(ConfigError::BadDecay(r))
                } else {
                    Ok(())
                }
            }
            AttentionBiasMode::TreePlanted { lambda, .. } => {
                if lambda < 0.0 {
                    Err(ConfigError::BadWeight(lambda))
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn needs_tree(&self) -> bool {
        matches!(self, AttentionBiasMode::TreePlanted { .. })
    }
}
