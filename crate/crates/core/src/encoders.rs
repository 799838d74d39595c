//! Sequence Transformer encoder and relation-aware graph encoder.

use std::rc::Rc;

use crate::amr::RelationIndexMatrix;
use crate::model::{positional_encoding, Ablation, ModelError, ModelInput, Session};
use crate::numerics::{Tensor, Var};
use crate::pipeline::PAD;

/// `H_S`: one row per context token, plus the key mask used by attention.
#[derive(Debug, Clone)]
pub struct SequenceEncoding {
    pub states: Var,
    pub mask: Vec<bool>,
}

impl SequenceEncoding {
    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }
}

/// `H_G`: one row per graph node.
#[derive(Debug, Clone, Copy)]
pub struct GraphEncoding {
    pub states: Var,
    pub nodes: usize,
}

/// Expands a per-key mask to `rows` query rows.
pub(crate) fn key_mask(mask: &[bool], rows: usize) -> Vec<bool> {
    mask.iter().copied().cycle().take(rows * mask.len()).collect()
}

fn head_slices(s: &mut Session, x: Var) -> Result<Vec<Var>, ModelError> {
    let dk = s.cfg.head_dim();
    (0..s.cfg.encoder.n_heads)
        .map(|h| Ok(s.tape.slice_cols(x, h * dk, dk)?))
        .collect()
}

/// `softmax(q kᵀ / sqrt(d_k)) · v` for one head.
pub(crate) fn scaled_attention(
    s: &mut Session,
    q: Var,
    k: Var,
    v: Var,
    mask: Option<&[bool]>,
    label: &'static str,
) -> Result<Var, ModelError> {
    let dk = s.tape.shape(q)[1] as f64;
    let kt = s.tape.transpose_last_two(k)?;
    let scores = s.tape.matmul(q, kt)?;
    let scores = s.tape.scale(scores, 1.0 / dk.sqrt());
    let alpha = s.tape.softmax(scores, mask, label)?;
    Ok(s.tape.matmul(alpha, v)?)
}

/// Multi-head self-attention with query/key projections and value
/// projection `value`. Heads are concatenated without an output projection.
pub(crate) fn self_attention(
    s: &mut Session,
    x: Var,
    prefix: &str,
    value: &str,
    mask: Option<&[bool]>,
    label: &'static str,
) -> Result<Var, ModelError> {
    let q = s.linear(x, &format!("{prefix}.q"))?;
    let k = s.linear(x, &format!("{prefix}.k"))?;
    let v = s.linear(x, &format!("{prefix}.{value}"))?;
    let (qs, ks, vs) = (head_slices(s, q)?, head_slices(s, k)?, head_slices(s, v)?);
    let heads = (0..qs.len())
        .map(|h| scaled_attention(s, qs[h], ks[h], vs[h], mask, label))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(s.tape.concat_last_dim(&heads)?)
}

fn embed_tokens(s: &mut Session, tokens: &[usize]) -> Result<Var, ModelError> {
    s.check_tokens(tokens)?;
    let table = s.param("embed.tokens")?;
    Ok(s.tape.embedding(table, tokens)?)
}

/// Token embeddings plus sinusoidal positions.
pub(crate) fn embed_with_positions(s: &mut Session, tokens: &[usize]) -> Result<Var, ModelError> {
    let x = embed_tokens(s, tokens)?;
    let pe = positional_encoding(tokens.len(), s.cfg.d_model());
    let pe = s.tape.constant(&pe);
    Ok(s.tape.add(x, pe)?)
}

/// `H_S = Transformer(S)`; pad tokens are masked out as attention keys.
pub fn encode_sequence(s: &mut Session, tokens: &[usize]) -> Result<SequenceEncoding, ModelError> {
    let max = s.cfg.encoder.max_seq_len;
    if tokens.len() > max {
        return Err(ModelError::SequenceTooLong {
            len: tokens.len(),
            max,
        });
    }
    if tokens.is_empty() {
        return Err(ModelError::EmptyEncoding);
    }
    let key: Vec<bool> = tokens.iter().map(|&t| t != PAD).collect();
    let mask = key_mask(&key, tokens.len());
    let mut x = embed_with_positions(s, tokens)?;
    x = s.dropout(x)?;
    for l in 0..s.cfg.encoder.n_layers {
        let p = format!("seq.{l}");
        let a = self_attention(s, x, &format!("{p}.attn"), "h", Some(&mask), "sequence")?;
        x = s.residual_norm(x, a, &format!("{p}.ln1"))?;
        let f = s.feed_forward(x, &p)?;
        x = s.residual_norm(x, f, &format!("{p}.ln2"))?;
    }
    Ok(SequenceEncoding {
        states: x,
        mask: key,
    })
}

fn relation_ids(s: &Session, rel: &RelationIndexMatrix, nodes: usize) -> Result<Rc<[usize]>, ModelError> {
    if rel.size() != nodes {
        return Err(ModelError::RelationShape {
            got: rel.size(),
            nodes,
        });
    }
    let bound = s.cfg.relation_count;
    if let Some(&id) = rel.ids().iter().find(|&&r| r >= bound) {
        return Err(ModelError::RelationIdOutOfRange { id, bound });
    }
    Ok(rel.ids().into())
}

fn graph_scores(
    s: &mut Session,
    x: Var,
    ids: &Rc<[usize]>,
    layer: usize,
) -> Result<Vec<Var>, ModelError> {
    let p = format!("graph.{layer}");
    let q = s.linear(x, &format!("{p}.attn.q"))?;
    let k = s.linear(x, &format!("{p}.attn.k"))?;
    let rel_key = s.param(&format!("{p}.rel_key"))?;
    let dk = s.cfg.head_dim();
    let mut out = Vec::new();
    for h in 0..s.cfg.encoder.n_heads {
        let qh = s.tape.slice_cols(q, h * dk, dk)?;
        let kh = s.tape.slice_cols(k, h * dk, dk)?;
        let kt = s.tape.transpose_last_two(kh)?;
        let content = s.tape.matmul(qh, kt)?;
        let relation = s.tape.relation_scores(qh, rel_key, ids.clone(), h * dk)?;
        let e = s.tape.add(content, relation)?;
        let e = s.tape.scale(e, 1.0 / (dk as f64).sqrt());
        out.push(s.tape.softmax(e, None, "graph")?);
    }
    Ok(out)
}

/// Relation-aware attention weights of graph layer `layer`, one `M×M` matrix
/// per head, for node states `x`:
/// `ê_ij = (q_i)ᵀ(k_j + r_ij) / sqrt(d_k)`.
pub fn graph_attention_scores(
    s: &mut Session,
    x: Var,
    relations: &RelationIndexMatrix,
    layer: usize,
) -> Result<Vec<Var>, ModelError> {
    let m = s.tape.shape(x)[0];
    if m == 0 {
        return Err(ModelError::EmptyEncoding);
    }
    let ids = relation_ids(s, relations, m)?;
    graph_scores(s, x, &ids, layer)
}

/// `H_G`: node embeddings (no positions) through relation-aware layers with
/// values `v_j + r^V_ij`.
pub fn encode_graph(
    s: &mut Session,
    nodes: &[usize],
    relations: &RelationIndexMatrix,
) -> Result<GraphEncoding, ModelError> {
    if nodes.is_empty() {
        return Err(ModelError::EmptyEncoding);
    }
    let ids = relation_ids(s, relations, nodes.len())?;
    let mut x = embed_tokens(s, nodes)?;
    x = s.dropout(x)?;
    let dk = s.cfg.head_dim();
    for l in 0..s.cfg.graph_layers {
        let p = format!("graph.{l}");
        let alphas = graph_scores(s, x, &ids, l)?;
        let v = s.linear(x, &format!("{p}.attn.v"))?;
        let rel_value = s.param(&format!("{p}.rel_value"))?;
        let mut heads = Vec::with_capacity(alphas.len());
        for (h, &alpha) in alphas.iter().enumerate() {
            let vh = s.tape.slice_cols(v, h * dk, dk)?;
            let content = s.tape.matmul(alpha, vh)?;
            let relation = s.tape.relation_mix(alpha, rel_value, ids.clone(), h * dk, dk)?;
            heads.push(s.tape.add(content, relation)?);
        }
        let a = s.tape.concat_last_dim(&heads)?;
        x = s.residual_norm(x, a, &format!("{p}.ln1"))?;
        let f = s.feed_forward(x, &p)?;
        x = s.residual_norm(x, f, &format!("{p}.ln2"))?;
    }
    Ok(GraphEncoding {
        states: x,
        nodes: nodes.len(),
    })
}

/// Runs both encoders, substituting a single zero state for the ablated side.
pub fn encode(
    s: &mut Session,
    input: &ModelInput,
) -> Result<(SequenceEncoding, GraphEncoding), ModelError> {
    let zero = |s: &mut Session| s.tape.constant(&Tensor::zeros(&[1, s.cfg.d_model()]));
    let text = match s.ablation {
        Ablation::NoText => SequenceEncoding {
            states: zero(s),
            mask: vec![true],
        },
        _ => encode_sequence(s, &input.context)?,
    };
    let graph = match s.ablation {
        Ablation::NoAmr => GraphEncoding {
            states: zero(s),
            nodes: 1,
        },
        _ => encode_graph(s, &input.nodes, &input.relations)?,
    };
    Ok((text, graph))
}
