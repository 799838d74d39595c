//! Checkpoint file layout (all integers little-endian):
//!
//! ```text
//! magic    8 bytes   "AMRDCKPT"
//! version  u32
//! length   u64       payload byte count
//! payload:
//!   header_len u64, header JSON (configs, vocabularies, counters, loss log,
//!                   RNG state, tensor names and shapes)
//!   parameter data, f64 per scalar, in header order
//!   Adam first moments, then second moments, in header order
//! checksum 32 bytes  SHA-256 of everything before it
//! ```

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{TrainConfig, TrainState};
use crate::amr::RelationVocab;
use crate::model::ModelConfig;
use crate::numerics::{AdamState, ParamStore, RngState, Tensor};
use crate::pipeline::Vocab;

pub const MAGIC: &[u8; 8] = b"AMRDCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
const PREAMBLE: usize = 8 + 4 + 8;
const DIGEST: usize = 32;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    IoFailure {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("checkpoint version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("checkpoint is corrupt or truncated: {0}")]
    CorruptChecksum(String),
}

impl CheckpointError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CheckpointError::IoFailure {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// A trainable model and everything needed to resume or decode with it.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub vocab: Vocab,
    pub relations: RelationVocab,
    pub state: TrainState,
}

#[derive(Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    train: TrainConfig,
    vocab: Vocab,
    relations: RelationVocab,
    epoch: usize,
    step: usize,
    loss_log: Vec<f64>,
    best_loss: Option<f64>,
    rng: RngState,
    params: Vec<(String, Vec<usize>)>,
    adam_step: u64,
    moments: Vec<String>,
}

fn push_f64s(out: &mut Vec<u8>, xs: &[f64]) {
    for x in xs {
        out.extend_from_slice(&x.to_le_bytes());
    }
}

fn corrupt(msg: impl Into<String>) -> CheckpointError {
    CheckpointError::CorruptChecksum(msg.into())
}

fn encode(ck: &Checkpoint, version: u32) -> Vec<u8> {
    let st = &ck.state;
    let header = Header {
        model: ck.model.clone(),
        train: ck.train.clone(),
        vocab: ck.vocab.clone(),
        relations: ck.relations.clone(),
        epoch: st.epoch,
        step: st.step,
        loss_log: st.loss_log.clone(),
        best_loss: st.best_loss,
        rng: st.rng,
        params: st
            .params
            .iter()
            .map(|(n, t)| (n.to_string(), t.shape().to_vec()))
            .collect(),
        adam_step: st.adam.step,
        moments: st.adam.first.keys().cloned().collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let mut payload = Vec::new();
    payload.extend_from_slice(&(json.len() as u64).to_le_bytes());
    payload.extend_from_slice(&json);
    for (_, t) in st.params.iter() {
        push_f64s(&mut payload, t.data());
    }
    for moments in [&st.adam.first, &st.adam.second] {
        for name in &header.moments {
            push_f64s(&mut payload, &moments[name]);
        }
    }
    let mut out = Vec::with_capacity(PREAMBLE + payload.len() + DIGEST);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&version.to_le_bytes());
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

pub fn to_bytes(ck: &Checkpoint) -> Vec<u8> {
    encode(ck, CHECKPOINT_VERSION)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| corrupt("payload shorter than its header claims"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, CheckpointError> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| corrupt("tensor too large"))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    if bytes.len() < PREAMBLE + DIGEST {
        return Err(corrupt("file too short"));
    }
    if &bytes[..8] != MAGIC {
        return Err(corrupt("bad magic bytes"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let len = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    if len != (bytes.len() - PREAMBLE - DIGEST) as u64 {
        return Err(corrupt("payload length does not match file size"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST);
    if Sha256::digest(body).as_slice() != digest {
        return Err(corrupt("checksum mismatch"));
    }
    let mut r = Reader {
        bytes: &body[PREAMBLE..],
        pos: 0,
    };
    let json_len = u64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
    let json = r.take(usize::try_from(json_len).map_err(|_| corrupt("header too large"))?)?;
    let h: Header = serde_json::from_slice(json).map_err(|e| corrupt(format!("header: {e}")))?;
    let mut params = ParamStore::new();
    for (name, shape) in &h.params {
        let data = r.f64s(shape.iter().product())?;
        let t = Tensor::new(shape.clone(), data).map_err(|e| corrupt(e.to_string()))?;
        params.insert(name.clone(), t);
    }
    let sizes: BTreeMap<&str, usize> = params.iter().map(|(n, t)| (n, t.numel())).collect();
    let read_moments = |r: &mut Reader| -> Result<BTreeMap<String, Vec<f64>>, CheckpointError> {
        h.moments
            .iter()
            .map(|n| {
                let size = *sizes.get(n.as_str()).ok_or_else(|| corrupt("moment for unknown parameter"))?;
                Ok((n.clone(), r.f64s(size)?))
            })
            .collect()
    };
    let first = read_moments(&mut r)?;
    let second = read_moments(&mut r)?;
    if r.pos != r.bytes.len() {
        return Err(corrupt("trailing bytes in payload"));
    }
    Ok(Checkpoint {
        model: h.model,
        train: h.train,
        vocab: h.vocab.reindexed(),
        relations: h.relations.reindexed(),
        state: TrainState {
            params,
            adam: AdamState {
                step: h.adam_step,
                first,
                second,
            },
            rng: h.rng,
            epoch: h.epoch,
            step: h.step,
            loss_log: h.loss_log,
            best_loss: h.best_loss,
        },
    })
}

pub fn save_checkpoint(ck: &Checkpoint, path: &Path) -> Result<(), CheckpointError> {
    std::fs::write(path, to_bytes(ck)).map_err(|e| CheckpointError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let bytes = std::fs::read(path).map_err(|e| CheckpointError::io(path, e))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::EncoderConfig;
    use crate::numerics::rng::{seeded, TRAIN_STREAM};
    use rand::RngCore;

    fn sample() -> Checkpoint {
        let enc = EncoderConfig {
            d_model: 4,
            n_heads: 1,
            n_layers: 1,
            ffn_dim: 4,
            max_seq_len: 8,
            dropout_rate: 0.0,
        };
        let model = ModelConfig::new(enc, 6, 5);
        let train = TrainConfig::default();
        let mut state = TrainState::new(&model, &train).unwrap();
        state.adam.step = 3;
        for (n, t) in state.params.iter() {
            state.adam.first.insert(n.to_string(), vec![0.1 / 3.0; t.numel()]);
            state.adam.second.insert(n.to_string(), vec![1e-300; t.numel()]);
        }
        let mut rng = seeded(4, TRAIN_STREAM);
        rng.next_u64();
        state.rng = RngState::capture(&rng);
        state.loss_log = vec![1.0 / 3.0, 0.1];
        state.best_loss = Some(0.1);
        Checkpoint {
            model,
            train,
            vocab: Vocab::build(["x", "y"], 1),
            relations: RelationVocab::new([":ARG0"]),
            state,
        }
    }

    fn strip_grads(mut ck: Checkpoint) -> Checkpoint {
        for (_, t) in ck.state.params.iter_mut() {
            t.set_grad(None);
        }
        ck
    }

    #[test]
    fn round_trip_is_exact() {
        let ck = sample();
        let back = from_bytes(&to_bytes(&ck)).unwrap();
        assert_eq!(back, strip_grads(ck));
    }

    #[test]
    fn truncation_and_corruption() {
        let bytes = to_bytes(&sample());
        for cut in [0, 10, PREAMBLE + 3, bytes.len() - 1] {
            assert!(matches!(
                from_bytes(&bytes[..cut]),
                Err(CheckpointError::CorruptChecksum(_))
            ));
        }
        let mut flipped = bytes.clone();
        flipped[PREAMBLE + 40] ^= 1;
        assert!(matches!(from_bytes(&flipped), Err(CheckpointError::CorruptChecksum(_))));
    }

    #[test]
    fn other_version_rejected() {
        let bytes = encode(&sample(), CHECKPOINT_VERSION + 1);
        assert!(matches!(
            from_bytes(&bytes),
            Err(CheckpointError::VersionMismatch { found: 2, expected: 1 })
        ));
    }

    #[test]
    fn missing_file_is_io_failure() {
        assert!(matches!(
            load_checkpoint(Path::new("/nonexistent/x.ckpt")),
            Err(CheckpointError::IoFailure { .. })
        ));
    }
}
