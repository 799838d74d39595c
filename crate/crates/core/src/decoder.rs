//! Causal decoder with dual cross-attention over text and graph states, plus
//! greedy and beam generation.

use serde::{Deserialize, Serialize};

use crate::encoders::{embed_with_positions, encode, key_mask, self_attention, GraphEncoding, SequenceEncoding};
use crate::model::{causal_mask, Ablation, ModelConfig, ModelError, ModelInput, Session};
use crate::numerics::{ParamStore, Tape, Tensor, Var};
use crate::pipeline::{BOS, EOS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    #[default]
    Greedy,
    Beam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodingConfig {
    pub mode: DecodeMode,
    pub beam_width: usize,
    /// Upper bound on generated tokens, counting the end token.
    pub max_gen_len: usize,
    /// Exponent `a` in the final score `logp / len^a`.
    pub length_penalty: f64,
}

impl Default for DecodingConfig {
    fn default() -> Self {
        Self {
            mode: DecodeMode::Greedy,
            beam_width: 4,
            max_gen_len: 40,
            length_penalty: 0.6,
        }
    }
}

impl DecodingConfig {
    pub fn greedy(max_gen_len: usize) -> Self {
        Self {
            mode: DecodeMode::Greedy,
            max_gen_len,
            ..Self::default()
        }
    }

    pub fn beam(beam_width: usize, max_gen_len: usize) -> Self {
        Self {
            mode: DecodeMode::Beam,
            beam_width,
            max_gen_len,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.beam_width == 0 || self.max_gen_len == 0 {
            return Err(ModelError::InvalidConfig(
                "beam_width and max_gen_len must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Text context, graph context and their fusion for every decoder position.
#[derive(Debug, Clone, Copy)]
pub struct DualContext {
    pub text: Var,
    pub graph: Var,
    pub fused: Var,
}

fn cross_attention(
    s: &mut Session,
    d: Var,
    states: Var,
    mask: &[bool],
    prefix: &str,
    label: &'static str,
) -> Result<Var, ModelError> {
    if mask.is_empty() {
        return Err(ModelError::EmptyEncoding);
    }
    let q = s.linear(d, &format!("{prefix}.q"))?;
    let k = s.linear(states, &format!("{prefix}.k"))?;
    let kt = s.tape.transpose_last_two(k)?;
    let scores = s.tape.matmul(q, kt)?;
    let scores = s.tape.scale(scores, 1.0 / (s.cfg.d_model() as f64).sqrt());
    let rows = s.tape.shape(d)[0];
    let full = key_mask(mask, rows);
    let alpha = s.tape.softmax(scores, Some(&full), label)?;
    Ok(s.tape.matmul(alpha, states)?)
}

/// `c_S = Σ α_ti h_i`, `c_G = Σ α_tj h'_j`, `c = W^C [c_S ; c_G] + b` for
/// decoder states `d` (one row per position) in layer `layer`.
pub fn dual_attention_step(
    s: &mut Session,
    d: Var,
    text: &SequenceEncoding,
    graph: &GraphEncoding,
    layer: usize,
) -> Result<DualContext, ModelError> {
    let p = format!("dec.{layer}");
    let c_text = cross_attention(s, d, text.states, &text.mask, &format!("{p}.cross_text"), "cross_text")?;
    let graph_mask = vec![true; graph.nodes];
    let c_graph = cross_attention(s, d, graph.states, &graph_mask, &format!("{p}.cross_graph"), "cross_graph")?;
    let both = s.tape.concat_last_dim(&[c_text, c_graph])?;
    let fused = s.affine(both, &format!("{p}.fuse.w"), &format!("{p}.fuse.b"))?;
    Ok(DualContext {
        text: c_text,
        graph: c_graph,
        fused,
    })
}

/// Vocabulary logits `[T, V]` for every position of `prefix`.
pub fn decode(
    s: &mut Session,
    prefix: &[usize],
    text: &SequenceEncoding,
    graph: &GraphEncoding,
) -> Result<Var, ModelError> {
    let max = s.cfg.encoder.max_seq_len;
    if prefix.len() > max {
        return Err(ModelError::PrefixTooLong {
            len: prefix.len(),
            max,
        });
    }
    if prefix.is_empty() {
        return Err(ModelError::EmptyEncoding);
    }
    let mask = causal_mask(prefix.len());
    let mut x = embed_with_positions(s, prefix)?;
    x = s.dropout(x)?;
    for l in 0..s.cfg.decoder_layers {
        let p = format!("dec.{l}");
        let a = self_attention(s, x, &format!("{p}.self"), "v", Some(&mask), "decoder_self")?;
        x = s.residual_norm(x, a, &format!("{p}.ln1"))?;
        let ctx = dual_attention_step(s, x, text, graph, l)?;
        x = s.residual_norm(x, ctx.fused, &format!("{p}.ln2"))?;
        let f = s.feed_forward(x, &p)?;
        x = s.residual_norm(x, f, &format!("{p}.ln3"))?;
    }
    s.affine(x, "out.w", "out.b")
}

/// Encoder outputs detached from their tape, reusable across decoding steps.
#[derive(Debug, Clone)]
pub struct EncodedInput {
    pub text: Tensor,
    pub text_mask: Vec<bool>,
    pub graph: Tensor,
}

impl EncodedInput {
    pub fn new(
        params: &ParamStore,
        cfg: &ModelConfig,
        ablation: Ablation,
        input: &ModelInput,
    ) -> Result<Self, ModelError> {
        let mut tape = Tape::new();
        let mut s = Session::new(&mut tape, params, cfg).with_ablation(ablation);
        let (text, graph) = encode(&mut s, input)?;
        Ok(Self {
            text: tape.tensor(text.states),
            text_mask: text.mask,
            graph: tape.tensor(graph.states),
        })
    }

    fn attach(&self, tape: &mut Tape) -> (SequenceEncoding, GraphEncoding) {
        let text = SequenceEncoding {
            states: tape.constant(&self.text),
            mask: self.text_mask.clone(),
        };
        let graph = GraphEncoding {
            states: tape.constant(&self.graph),
            nodes: self.graph.shape()[0],
        };
        (text, graph)
    }
}

/// Logits for the token following `prefix`.
pub fn decode_step(
    params: &ParamStore,
    cfg: &ModelConfig,
    prefix: &[usize],
    encoded: &EncodedInput,
) -> Result<Vec<f64>, ModelError> {
    let mut tape = Tape::new();
    let (text, graph) = encoded.attach(&mut tape);
    let mut s = Session::new(&mut tape, params, cfg);
    let logits = decode(&mut s, prefix, &text, &graph)?;
    let v = cfg.vocab_size;
    Ok(tape.value(logits)[(prefix.len() - 1) * v..].to_vec())
}

pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    logits.iter().map(|v| v - lse).collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Generated tokens (without BOS/EOS) and the score they were ranked by.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub tokens: Vec<usize>,
    pub log_prob: f64,
    pub scored_len: usize,
}

impl Hypothesis {
    pub fn score(&self, length_penalty: f64) -> f64 {
        self.log_prob / (self.scored_len.max(1) as f64).powf(length_penalty)
    }
}

fn finish(seq: &[usize], log_prob: f64) -> Hypothesis {
    let body = &seq[1..];
    let tokens: Vec<usize> = body.iter().copied().take_while(|&t| t != EOS).collect();
    Hypothesis {
        tokens,
        log_prob,
        scored_len: body.len(),
    }
}

fn greedy(
    params: &ParamStore,
    cfg: &ModelConfig,
    encoded: &EncodedInput,
    max_gen_len: usize,
) -> Result<Hypothesis, ModelError> {
    let mut seq = vec![BOS];
    let mut log_prob = 0.0;
    for _ in 0..max_gen_len {
        let lp = log_softmax(&decode_step(params, cfg, &seq, encoded)?);
        let tok = argmax(&lp);
        log_prob += lp[tok];
        seq.push(tok);
        if tok == EOS {
            break;
        }
    }
    Ok(finish(&seq, log_prob))
}

fn beam(
    params: &ParamStore,
    cfg: &ModelConfig,
    encoded: &EncodedInput,
    dcfg: &DecodingConfig,
) -> Result<Hypothesis, ModelError> {
    let width = dcfg.beam_width;
    let mut alive: Vec<(Vec<usize>, f64)> = vec![(vec![BOS], 0.0)];
    let mut done: Vec<Hypothesis> = Vec::new();
    for _ in 0..dcfg.max_gen_len {
        let mut candidates = Vec::new();
        for (seq, score) in &alive {
            let lp = log_softmax(&decode_step(params, cfg, seq, encoded)?);
            let mut order: Vec<usize> = (0..lp.len()).collect();
            order.sort_by(|&a, &b| lp[b].total_cmp(&lp[a]).then(a.cmp(&b)));
            for &tok in order.iter().take(width) {
                let mut next = seq.clone();
                next.push(tok);
                candidates.push((next, score + lp[tok]));
            }
        }
        candidates.sort_by(|a, b| b.1.total_cmp(&a.1));
        alive.clear();
        for (seq, score) in candidates.into_iter().take(width) {
            if seq.last() == Some(&EOS) {
                done.push(finish(&seq, score));
            } else {
                alive.push((seq, score));
            }
        }
        if alive.is_empty() || done.len() >= width {
            break;
        }
    }
    done.extend(alive.iter().map(|(seq, score)| finish(seq, *score)));
    // greedy hypothesis joins the pool
    let mut best = greedy(params, cfg, encoded, dcfg.max_gen_len)?;
    for h in done {
        if h.score(dcfg.length_penalty) > best.score(dcfg.length_penalty) {
            best = h;
        }
    }
    Ok(best)
}

/// Decodes a response for one input according to `dcfg`.
pub fn generate(
    params: &ParamStore,
    cfg: &ModelConfig,
    ablation: Ablation,
    input: &ModelInput,
    dcfg: &DecodingConfig,
) -> Result<Hypothesis, ModelError> {
    dcfg.validate()?;
    let encoded = EncodedInput::new(params, cfg, ablation, input)?;
    match dcfg.mode {
        DecodeMode::Greedy => greedy(params, cfg, &encoded, dcfg.max_gen_len),
        DecodeMode::Beam => beam(params, cfg, &encoded, dcfg),
    }
}
