//! Model configuration, parameter layout and the per-forward session shared by
//! the encoders and the decoder.

use std::fmt;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::amr::RelationIndexMatrix;
use crate::numerics::rng::{self, Rng, INIT_STREAM};
use crate::numerics::{NumericsError, ParamStore, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ModelError {
    #[error("token id {token} outside vocabulary of size {vocab}")]
    TokenOutOfVocab { token: usize, vocab: usize },
    #[error("sequence of length {len} exceeds max_seq_len {max}")]
    SequenceTooLong { len: usize, max: usize },
    #[error("decoder prefix of length {len} exceeds {max}")]
    PrefixTooLong { len: usize, max: usize },
    #[error("relation id {id} outside relation table of size {bound}")]
    RelationIdOutOfRange { id: usize, bound: usize },
    #[error("relation matrix is {got}x{got} but the graph has {nodes} nodes")]
    RelationShape { got: usize, nodes: usize },
    #[error("attention over an empty encoding")]
    EmptyEncoding,
    #[error("empty batch")]
    EmptyBatch,
    #[error("empty response")]
    EmptyResponse,
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    #[default]
    None,
    NoText,
    NoAmr,
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Ablation::None => "none",
            Ablation::NoText => "no_text",
            Ablation::NoAmr => "no_amr",
        })
    }
}

impl std::str::FromStr for Ablation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "none" => Ok(Ablation::None),
            "no_text" => Ok(Ablation::NoText),
            "no_amr" => Ok(Ablation::NoAmr),
            other => Err(format!("unknown ablation {other:?}")),
        }
    }
}

/// Shared by the sequence encoder, graph encoder and decoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub ffn_dim: usize,
    pub max_seq_len: usize,
    pub dropout_rate: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            ffn_dim: 256,
            max_seq_len: 256,
            dropout_rate: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub encoder: EncoderConfig,
    /// Graph encoder depth; the sequence encoder uses `encoder.n_layers`.
    pub graph_layers: usize,
    pub decoder_layers: usize,
    pub vocab_size: usize,
    pub relation_count: usize,
}

impl ModelConfig {
    pub fn new(encoder: EncoderConfig, vocab_size: usize, relation_count: usize) -> Self {
        Self {
            graph_layers: encoder.n_layers,
            decoder_layers: encoder.n_layers,
            encoder,
            vocab_size,
            relation_count,
        }
    }

    pub fn d_model(&self) -> usize {
        self.encoder.d_model
    }

    pub fn head_dim(&self) -> usize {
        self.encoder.d_model / self.encoder.n_heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let e = &self.encoder;
        let bad = |m: &str| Err(ModelError::InvalidConfig(m.to_string()));
        if e.d_model == 0 || e.n_heads == 0 || e.ffn_dim == 0 || e.max_seq_len == 0 {
            return bad("d_model, n_heads, ffn_dim and max_seq_len must be positive");
        }
        if e.d_model % e.n_heads != 0 {
            return bad("d_model must be divisible by n_heads");
        }
        if !(0.0..1.0).contains(&e.dropout_rate) {
            return bad("dropout_rate must be in [0, 1)");
        }
        if self.vocab_size < 5 {
            return bad("vocab_size must cover the reserved tokens plus one");
        }
        if self.relation_count < 3 {
            return bad("relation_count must cover the reserved relations");
        }
        if self.decoder_layers == 0 {
            return bad("decoder_layers must be positive");
        }
        Ok(())
    }

    /// Every parameter name with its shape, in a fixed order.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let d = self.d_model();
        let f = self.encoder.ffn_dim;
        let mut out = vec![("embed.tokens".to_string(), vec![self.vocab_size, d])];
        let mut push = |name: String, shape: Vec<usize>| out.push((name, shape));
        let block = |push: &mut dyn FnMut(String, Vec<usize>), p: &str| {
            push(format!("{p}.ffn.w1"), vec![d, f]);
            push(format!("{p}.ffn.b1"), vec![f]);
            push(format!("{p}.ffn.w2"), vec![f, d]);
            push(format!("{p}.ffn.b2"), vec![d]);
        };
        let norm = |push: &mut dyn FnMut(String, Vec<usize>), p: String| {
            push(format!("{p}.g"), vec![d]);
            push(format!("{p}.b"), vec![d]);
        };
        for l in 0..self.encoder.n_layers {
            let p = format!("seq.{l}");
            for m in ["q", "k", "h"] {
                push(format!("{p}.attn.{m}"), vec![d, d]);
            }
            norm(&mut push, format!("{p}.ln1"));
            block(&mut push, &p);
            norm(&mut push, format!("{p}.ln2"));
        }
        for l in 0..self.graph_layers {
            let p = format!("graph.{l}");
            for m in ["q", "k", "v"] {
                push(format!("{p}.attn.{m}"), vec![d, d]);
            }
            push(format!("{p}.rel_key"), vec![self.relation_count, d]);
            push(format!("{p}.rel_value"), vec![self.relation_count, d]);
            norm(&mut push, format!("{p}.ln1"));
            block(&mut push, &p);
            norm(&mut push, format!("{p}.ln2"));
        }
        for l in 0..self.decoder_layers {
            let p = format!("dec.{l}");
            for m in ["q", "k", "v"] {
                push(format!("{p}.self.{m}"), vec![d, d]);
            }
            norm(&mut push, format!("{p}.ln1"));
            for side in ["text", "graph"] {
                push(format!("{p}.cross_{side}.q"), vec![d, d]);
                push(format!("{p}.cross_{side}.k"), vec![d, d]);
            }
            push(format!("{p}.fuse.w"), vec![2 * d, d]);
            push(format!("{p}.fuse.b"), vec![d]);
            norm(&mut push, format!("{p}.ln2"));
            block(&mut push, &p);
            norm(&mut push, format!("{p}.ln3"));
        }
        out.push(("out.w".to_string(), vec![d, self.vocab_size]));
        out.push(("out.b".to_string(), vec![self.vocab_size]));
        out
    }

    /// Xavier-uniform matrices, zero biases and shifts, unit layer-norm gains.
    pub fn init_params(&self, seed: u64) -> Result<ParamStore, ModelError> {
        self.validate()?;
        let mut rng = rng::seeded(seed, INIT_STREAM);
        let mut store = ParamStore::new();
        for (name, shape) in self.param_shapes() {
            let t = match shape.as_slice() {
                [rows, cols] => rng::xavier_uniform(&mut rng, *rows, *cols),
                _ if name.ends_with(".g") => Tensor::filled(&shape, 1.0),
                _ => Tensor::zeros(&shape),
            };
            store.insert(name, t);
        }
        Ok(store)
    }
}

/// One example after tokenization and graph indexing.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub context: Vec<usize>,
    pub nodes: Vec<usize>,
    pub relations: RelationIndexMatrix,
}

struct Dropout<'a> {
    rate: f64,
    rng: &'a mut Rng,
}

/// Borrowed state for one forward pass: the tape being recorded, the
/// parameters, and optional dropout.
pub struct Session<'a> {
    pub tape: &'a mut Tape,
    pub params: &'a ParamStore,
    pub cfg: &'a ModelConfig,
    pub ablation: Ablation,
    dropout: Option<Dropout<'a>>,
}

impl<'a> Session<'a> {
    pub fn new(tape: &'a mut Tape, params: &'a ParamStore, cfg: &'a ModelConfig) -> Self {
        Self {
            tape,
            params,
            cfg,
            ablation: Ablation::None,
            dropout: None,
        }
    }

    pub fn with_ablation(mut self, ablation: Ablation) -> Self {
        self.ablation = ablation;
        self
    }

    /// Enables dropout at `cfg.encoder.dropout_rate` drawing masks from `rng`.
    pub fn with_dropout(mut self, rng: &'a mut Rng) -> Self {
        let rate = self.cfg.encoder.dropout_rate;
        if rate > 0.0 {
            self.dropout = Some(Dropout { rate, rng });
        }
        self
    }

    pub fn param(&mut self, name: &str) -> Result<Var, ModelError> {
        Ok(self.tape.param(self.params, name)?)
    }

    pub fn linear(&mut self, x: Var, w: &str) -> Result<Var, ModelError> {
        let w = self.param(w)?;
        Ok(self.tape.matmul(x, w)?)
    }

    pub fn affine(&mut self, x: Var, w: &str, b: &str) -> Result<Var, ModelError> {
        let y = self.linear(x, w)?;
        let b = self.param(b)?;
        Ok(self.tape.add_bias(y, b)?)
    }

    pub fn layer_norm(&mut self, x: Var, prefix: &str) -> Result<Var, ModelError> {
        let g = self.param(&format!("{prefix}.g"))?;
        let b = self.param(&format!("{prefix}.b"))?;
        Ok(self.tape.layer_norm(x, g, b)?)
    }

    pub fn feed_forward(&mut self, x: Var, prefix: &str) -> Result<Var, ModelError> {
        let h = self.affine(x, &format!("{prefix}.ffn.w1"), &format!("{prefix}.ffn.b1"))?;
        let h = self.tape.gelu(h);
        self.affine(h, &format!("{prefix}.ffn.w2"), &format!("{prefix}.ffn.b2"))
    }

    /// Inverted dropout; the identity when disabled.
    pub fn dropout(&mut self, x: Var) -> Result<Var, ModelError> {
        let Some(d) = self.dropout.as_mut() else {
            return Ok(x);
        };
        let keep = 1.0 / (1.0 - d.rate);
        let n = self.tape.value(x).len();
        let mask = (0..n)
            .map(|_| if d.rng.gen::<f64>() < d.rate { 0.0 } else { keep })
            .collect();
        Ok(self.tape.mul_const(x, mask)?)
    }

    /// `norm(x + dropout(sub))`
    pub fn residual_norm(&mut self, x: Var, sub: Var, norm: &str) -> Result<Var, ModelError> {
        let sub = self.dropout(sub)?;
        let y = self.tape.add(x, sub)?;
        self.layer_norm(y, norm)
    }

    pub fn check_tokens(&self, ids: &[usize]) -> Result<(), ModelError> {
        let vocab = self.cfg.vocab_size;
        match ids.iter().find(|&&t| t >= vocab) {
            Some(&token) => Err(ModelError::TokenOutOfVocab { token, vocab }),
            None => Ok(()),
        }
    }
}

/// Sinusoidal position table, `[len, d]`.
pub fn positional_encoding(len: usize, d: usize) -> Tensor {
    let mut data = vec![0.0; len * d];
    for pos in 0..len {
        for i in 0..d {
            let exponent = (2 * (i / 2)) as f64 / d as f64;
            let angle = pos as f64 / 10000f64.powf(exponent);
            data[pos * d + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    Tensor::new(vec![len, d], data).expect("shape matches")
}

/// Lower-triangular mask for `len` query positions.
pub fn causal_mask(len: usize) -> Vec<bool> {
    (0..len * len).map(|k| k % len <= k / len).collect()
}
