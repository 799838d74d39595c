//! Dialogue ingestion, tokenization, vocabulary, configuration and the
//! command implementations behind the `amrdia` binary.

mod commands;
mod config;
mod dataset;
pub mod synthetic;
mod vocab;

use std::path::{Path, PathBuf};

pub use dataset::{
    build_relation_vocab, build_vocab, encode_example, ingest_dialogues, ingest_str, DialogueExample,
    DialogueRecord, Ingested, SkippedLine, TrainingExample, Turn,
};
pub use commands::{
    run_eval, run_generate, run_gradcheck, run_parse, run_report, run_train, CommandError, ParseSummary,
    GRADCHECK_TOLERANCE,
};
pub use config::{AppConfig, ConfigError, DataConfig, LayerConfig};
pub use vocab::{tokenize, Vocab, BOS, EOS, PAD, UNK};

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("no valid examples ({skipped} lines skipped)")]
    NoValidExamples { skipped: usize },
    #[error("empty corpus")]
    EmptyCorpus,
}

impl DataError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
