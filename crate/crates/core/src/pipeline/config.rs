use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::amr::SimplifyConfig;
use crate::decoder::DecodingConfig;
use crate::model::{EncoderConfig, ModelConfig};
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub min_freq: usize,
    pub simplify: SimplifyConfig,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            min_freq: 1,
            simplify: SimplifyConfig::default(),
        }
    }
}

/// Depths that default to `encoder.n_layers` when absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LayerConfig {
    pub graph_layers: Option<usize>,
    pub decoder_layers: Option<usize>,
}

/// The TOML configuration file. Every section and key is optional.
///
/// ```toml
/// [encoder]
/// d_model = 64
/// n_heads = 4
/// n_layers = 2
/// ffn_dim = 256
/// max_seq_len = 256
/// dropout_rate = 0.1
///
/// [model]
/// graph_layers = 2
/// decoder_layers = 2
///
/// [train]
/// batch_size = 36
/// learning_rate = 1e-4
/// max_epochs = 10
/// seed = 0
/// grad_clip_norm = 1.0
/// ablation = "none"      # or "no_text", "no_amr"
/// # max_steps = 2000
///
/// [decoding]
/// mode = "greedy"        # or "beam"
/// beam_width = 4
/// max_gen_len = 40
/// length_penalty = 0.6
///
/// [data]
/// min_freq = 1
/// simplify = { strip_sense_tags = true, drop_wiki_edges = true }
/// ```
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub encoder: EncoderConfig,
    pub model: LayerConfig,
    pub train: TrainConfig,
    pub decoding: DecodingConfig,
    pub data: DataConfig,
}

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Parse {
        path: String,
        source: toml::de::Error,
    },
}

impl AppConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let p = path.display().to_string();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: p.clone(),
            source,
        })?;
        Self::from_toml(&text).map_err(|source| ConfigError::Parse { path: p, source })
    }

    pub fn model_config(&self, vocab_size: usize, relation_count: usize) -> ModelConfig {
        let mut cfg = ModelConfig::new(self.encoder.clone(), vocab_size, relation_count);
        if let Some(g) = self.model.graph_layers {
            cfg.graph_layers = g;
        }
        if let Some(d) = self.model.decoder_layers {
            cfg.decoder_layers = d;
        }
        cfg
    }
}
