//! The `amrdia` subcommands as library functions.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::config::{AppConfig, ConfigError};
use super::dataset::{build_relation_vocab, build_vocab, encode_example, ingest_dialogues, TrainingExample};
use super::synthetic::gradcheck_case;
use super::vocab::tokenize;
use super::DataError;
use crate::amr::{linearize, serialize_penman, AmrError};
use crate::decoder::{generate, DecodingConfig};
use crate::metrics::{render_table, MetricError, ScoreReport};
use crate::model::{Ablation, ModelError, Session};
use crate::numerics::{grad_check, GradCheckReport, NumericsError};
use crate::training::{self, load_checkpoint, compute_loss, Checkpoint, CheckpointError, TrainError, TrainState};

/// Gradient checks fail above this relative error.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, thiserror::Error)]
pub enum CommandError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error(transparent)]
    Amr(#[from] AmrError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(ModelError),
    #[error(transparent)]
    Train(TrainError),
    #[error("gradient check failed: max relative error {0:e}")]
    GradCheck(f64),
}

impl CommandError {
    /// 1 usage, 2 data, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            CommandError::Usage(_) | CommandError::Config(_) => 1,
            CommandError::Model(ModelError::Numerics(_))
            | CommandError::Train(TrainError::NonFiniteLoss { .. })
            | CommandError::GradCheck(_) => 3,
            CommandError::Model(ModelError::InvalidConfig(_)) => 1,
            CommandError::Train(TrainError::Model(m)) => CommandError::Model(m.clone()).exit_code(),
            _ => 2,
        }
    }
}

impl From<ModelError> for CommandError {
    fn from(e: ModelError) -> Self {
        CommandError::Model(e)
    }
}

impl From<NumericsError> for CommandError {
    fn from(e: NumericsError) -> Self {
        CommandError::Model(e.into())
    }
}

impl From<TrainError> for CommandError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Checkpoint(c) => CommandError::Checkpoint(c),
            other => CommandError::Train(other),
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<(), CommandError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|source| CommandError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| CommandError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn read_file(path: &Path) -> Result<String, CommandError> {
    std::fs::read_to_string(path).map_err(|source| CommandError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParseSummary {
    pub graphs: usize,
    pub skipped: usize,
}

/// Writes each dialogue's simplified, merged graph as a PENMAN block with its
/// id and linearization as comments.
pub fn run_parse(input: &Path, output: &Path, cfg: &AppConfig) -> Result<ParseSummary, CommandError> {
    let ingested = ingest_dialogues(input, cfg.data.simplify)?;
    let mut out = String::new();
    for ex in &ingested.examples {
        let _ = writeln!(out, "# ::id {}", ex.id);
        let _ = writeln!(out, "# ::tokens {}", linearize(&ex.graph).join(" "));
        let _ = writeln!(out, "{}\n", serialize_penman(&ex.graph)?);
    }
    write_file(output, &out)?;
    Ok(ParseSummary {
        graphs: ingested.examples.len(),
        skipped: ingested.skipped.len(),
    })
}

/// Builds vocabularies from `data`, then trains from scratch or from
/// `resume`, writing checkpoints to `out_dir`.
pub fn run_train(
    cfg: &AppConfig,
    data: &Path,
    out_dir: &Path,
    resume: Option<&Path>,
) -> Result<Checkpoint, CommandError> {
    let ingested = ingest_dialogues(data, cfg.data.simplify)?;
    let mut ckpt = match resume {
        Some(path) => {
            let mut ck = load_checkpoint(path)?;
            ck.train.max_epochs = cfg.train.max_epochs;
            ck.train.max_steps = cfg.train.max_steps;
            ck
        }
        None => {
            let vocab = build_vocab(&ingested.examples, cfg.data.min_freq)?;
            let relations = build_relation_vocab(&ingested.examples);
            let model = cfg.model_config(vocab.len(), relations.len());
            Checkpoint {
                state: TrainState::new(&model, &cfg.train)?,
                model,
                train: cfg.train.clone(),
                vocab,
                relations,
            }
        }
    };
    let examples = encode_all(&ckpt, &ingested.examples);
    training::train(&mut ckpt, &examples, Some(out_dir))?;
    Ok(ckpt)
}

fn encode_all(ckpt: &Checkpoint, examples: &[super::DialogueExample]) -> Vec<TrainingExample> {
    examples
        .iter()
        .map(|ex| encode_example(ex, &ckpt.vocab, &ckpt.relations, ckpt.model.encoder.max_seq_len))
        .collect()
}

/// Decodes every dialogue in `data`; one detokenized response per line.
/// With `refs_out`, also writes the tokenized gold responses.
pub fn run_generate(
    ckpt_path: &Path,
    data: &Path,
    out: &Path,
    refs_out: Option<&Path>,
    dcfg: &DecodingConfig,
) -> Result<usize, CommandError> {
    let ckpt = load_checkpoint(ckpt_path)?;
    let ingested = ingest_dialogues(data, Default::default())?;
    let examples = encode_all(&ckpt, &ingested.examples);
    let mut preds = String::new();
    let mut refs = String::new();
    for (ex, raw) in examples.iter().zip(&ingested.examples) {
        let hyp = generate(&ckpt.state.params, &ckpt.model, ckpt.train.ablation, &ex.input, dcfg)?;
        let _ = writeln!(preds, "{}", ckpt.vocab.detokenize(&hyp.tokens));
        let _ = writeln!(refs, "{}", raw.response_tokens().join(" "));
    }
    write_file(out, &preds)?;
    if let Some(r) = refs_out {
        write_file(r, &refs)?;
    }
    Ok(examples.len())
}

fn tokenized_lines(path: &Path) -> Result<Vec<Vec<String>>, CommandError> {
    Ok(read_file(path)?.lines().map(tokenize).collect())
}

/// Scores predictions against references line by line. Writes the table to
/// `out` and the JSON record to `out` with a `.jsonl` extension.
pub fn run_eval(preds: &Path, refs: &Path, out: &Path, system: &str) -> Result<ScoreReport, CommandError> {
    let c = tokenized_lines(preds)?;
    let r = tokenized_lines(refs)?;
    let report = ScoreReport::compute(system, &c, &r)?;
    write_file(out, &render_table(std::slice::from_ref(&report)))?;
    write_file(&out.with_extension("jsonl"), &(report.to_json_line() + "\n"))?;
    Ok(report)
}

/// Finite-difference check of the full model loss on a synthetic example,
/// using the encoder settings of `cfg` with dropout off.
pub fn run_gradcheck(cfg: &AppConfig, vocab_size: usize) -> Result<GradCheckReport, CommandError> {
    let mut encoder = cfg.encoder.clone();
    encoder.dropout_rate = 0.0;
    let (mut model, example) = gradcheck_case(encoder, vocab_size, cfg.train.seed);
    if let Some(g) = cfg.model.graph_layers {
        model.graph_layers = g;
    }
    if let Some(d) = cfg.model.decoder_layers {
        model.decoder_layers = d;
    }
    let mut params = model.init_params(cfg.train.seed)?;
    let batch = [example];
    let report = grad_check(&mut params, 1e-4, |tape, p| {
        let mut s = Session::new(tape, p, &model).with_ablation(Ablation::None);
        compute_loss(&mut s, &batch).map_err(|e| match e {
            ModelError::Numerics(n) => n,
            other => NumericsError::MissingParam(other.to_string()),
        })
    })?;
    if report.max_rel_error > GRADCHECK_TOLERANCE || !report.max_rel_error.is_finite() {
        return Err(CommandError::GradCheck(report.max_rel_error));
    }
    Ok(report)
}

/// Collects score records from JSONL files into one table.
pub fn run_report(inputs: &[PathBuf], out: Option<&Path>) -> Result<String, CommandError> {
    if inputs.is_empty() {
        return Err(CommandError::Usage("report needs at least one score file".into()));
    }
    let mut reports = Vec::new();
    for path in inputs {
        for (i, line) in read_file(path)?.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let r: ScoreReport = serde_json::from_str(line).map_err(|e| CommandError::Io {
                path: path.clone(),
                source: std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {}: {e}", i + 1)),
            })?;
            reports.push(r);
        }
    }
    let table = render_table(&reports);
    if let Some(o) = out {
        write_file(o, &table)?;
    }
    Ok(table)
}
