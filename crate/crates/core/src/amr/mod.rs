//! AMR graphs: PENMAN parsing and serialization, simplification,
//! linearization, relation-id matrices and dialogue-level merging.
//!
//! Everything here is a pure function over immutable values.

mod file;
mod graph;
mod linearize;
mod merge;
mod parse;
mod relation;
mod serialize;
mod simplify;
mod traverse;

pub use file::{read_penman_blocks, write_penman_blocks, PenmanBlock};
pub use graph::{canonical_variables, inverse_base, inverse_label, AmrGraph, AmrNode, RelationTriple};
pub use linearize::linearize;
pub use merge::{merge_graphs, MULTI_SENTENCE};
pub use parse::{parse_penman, ParseError};
pub use relation::{relation_matrix, RelationIndexMatrix, RelationVocab};
pub use serialize::serialize_penman;
pub use simplify::{simplify, strip_sense_tag, SimplifyConfig};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AmrError {
    #[error("graph invariant violated: {0}")]
    InvariantViolation(String),
    #[error("no graphs to merge")]
    EmptyInput,
}
