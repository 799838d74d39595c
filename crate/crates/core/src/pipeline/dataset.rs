use std::path::Path;

use serde::{Deserialize, Serialize};

use super::vocab::{tokenize, Vocab};
use super::DataError;
use crate::amr::{linearize, merge_graphs, parse_penman, relation_matrix, simplify, AmrGraph, RelationVocab, SimplifyConfig};
use crate::model::ModelInput;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: String,
    pub text: String,
}

/// One line of the dialogue file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueRecord {
    pub id: String,
    pub turns: Vec<Turn>,
    pub response: String,
    pub amr: Vec<String>,
}

/// A validated record with its graphs parsed, simplified and merged.
#[derive(Debug, Clone, PartialEq)]
pub struct DialogueExample {
    pub id: String,
    pub turns: Vec<Turn>,
    pub response: String,
    pub graph: AmrGraph,
}

impl DialogueExample {
    /// `speaker : text` for every turn, tokenized and concatenated.
    pub fn context_tokens(&self) -> Vec<String> {
        self.turns
            .iter()
            .flat_map(|t| tokenize(&format!("{} : {}", t.speaker, t.text)))
            .collect()
    }

    pub fn response_tokens(&self) -> Vec<String> {
        tokenize(&self.response)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedLine {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ingested {
    pub examples: Vec<DialogueExample>,
    pub skipped: Vec<SkippedLine>,
}

fn validate(record: DialogueRecord, simplify_cfg: SimplifyConfig) -> Result<DialogueExample, String> {
    if tokenize(&record.response).is_empty() {
        return Err("empty response".into());
    }
    if record.amr.is_empty() {
        return Err("no AMR graphs".into());
    }
    let graphs = record
        .amr
        .iter()
        .enumerate()
        .map(|(i, text)| {
            parse_penman(text)
                .map(|g| simplify(&g, simplify_cfg))
                .map_err(|e| format!("graph {}: {e}", i + 1))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let graph = merge_graphs(&graphs).map_err(|e| e.to_string())?;
    Ok(DialogueExample {
        id: record.id,
        turns: record.turns,
        response: record.response,
        graph,
    })
}

/// Parses line-delimited records; blank lines are ignored and malformed
/// lines are skipped and reported.
pub fn ingest_str(text: &str, simplify_cfg: SimplifyConfig) -> Result<Ingested, DataError> {
    let mut examples = Vec::new();
    let mut skipped = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let result = serde_json::from_str::<DialogueRecord>(line)
            .map_err(|e| format!("bad record: {e}"))
            .and_then(|r| validate(r, simplify_cfg));
        match result {
            Ok(ex) => examples.push(ex),
            Err(reason) => {
                log::warn!("line {}: skipped: {reason}", i + 1);
                skipped.push(SkippedLine { line: i + 1, reason });
            }
        }
    }
    if examples.is_empty() {
        return Err(DataError::NoValidExamples {
            skipped: skipped.len(),
        });
    }
    Ok(Ingested { examples, skipped })
}

pub fn ingest_dialogues(path: &Path, simplify_cfg: SimplifyConfig) -> Result<Ingested, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    ingest_str(&text, simplify_cfg)
}

/// Joint vocabulary over context and response tokens and the linearized
/// graphs (concepts and role labels).
pub fn build_vocab(examples: &[DialogueExample], min_freq: usize) -> Result<Vocab, DataError> {
    if examples.is_empty() {
        return Err(DataError::EmptyCorpus);
    }
    let tokens = examples.iter().flat_map(|ex| {
        let mut t = ex.context_tokens();
        t.extend(ex.response_tokens());
        t.extend(linearize(&ex.graph));
        t
    });
    Ok(Vocab::build(tokens, min_freq))
}

pub fn build_relation_vocab(examples: &[DialogueExample]) -> RelationVocab {
    RelationVocab::from_graphs(examples.iter().map(|e| &e.graph))
}

/// Model input plus target response ids.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    pub input: ModelInput,
    pub response: Vec<usize>,
}

/// Looks up ids; the context keeps its last `max_context` tokens.
pub fn encode_example(
    ex: &DialogueExample,
    vocab: &Vocab,
    relations: &RelationVocab,
    max_context: usize,
) -> TrainingExample {
    let context = ex.context_tokens();
    let start = context.len().saturating_sub(max_context);
    let nodes = ex.graph.nodes().iter().map(|n| vocab.id(&n.concept)).collect();
    TrainingExample {
        input: ModelInput {
            context: vocab.encode(&context[start..]),
            nodes,
            relations: relation_matrix(&ex.graph, relations),
        },
        response: vocab.encode(&ex.response_tokens()),
    }
}
