//! Teacher-forced training with Adam, gradient clipping and checkpoints.

mod checkpoint;

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub use checkpoint::{from_bytes, load_checkpoint, save_checkpoint, to_bytes, Checkpoint, CheckpointError, CHECKPOINT_VERSION, MAGIC};

use crate::decoder::decode;
use crate::encoders::encode;
use crate::model::{Ablation, ModelConfig, ModelError, Session};
use crate::numerics::rng::{self, RngState, TRAIN_STREAM};
use crate::numerics::{adam_step, AdamConfig, AdamState, NumericsError, ParamStore, Tape, Var};
use crate::pipeline::{TrainingExample, BOS, EOS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub seed: u64,
    pub grad_clip_norm: f64,
    pub ablation: Ablation,
    /// Stops after this many optimizer steps even mid-epoch.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 36,
            learning_rate: 1e-4,
            max_epochs: 10,
            seed: 0,
            grad_clip_norm: 1.0,
            ablation: Ablation::None,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.batch_size == 0 || self.learning_rate < 0.0 || self.grad_clip_norm <= 0.0 {
            return Err(TrainError::Model(ModelError::InvalidConfig(
                "batch_size and grad_clip_norm must be positive, learning_rate non-negative".into(),
            )));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError {
    #[error("non-finite loss {loss} at epoch {epoch}, step {step}")]
    NonFiniteLoss { loss: f64, epoch: usize, step: usize },
    #[error("empty dataset")]
    EmptyDataset,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
}

impl From<NumericsError> for TrainError {
    fn from(e: NumericsError) -> Self {
        TrainError::Model(e.into())
    }
}

/// Records the batch loss on `s.tape`: summed token cross-entropy divided by
/// the number of target tokens. Decoder input is `BOS + y`, target `y + EOS`.
pub fn compute_loss(s: &mut Session, batch: &[TrainingExample]) -> Result<Var, ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    let mut total: Option<Var> = None;
    let mut tokens = 0;
    for ex in batch {
        if ex.response.is_empty() {
            return Err(ModelError::EmptyResponse);
        }
        let (text, graph) = encode(s, &ex.input)?;
        let mut input = vec![BOS];
        input.extend(&ex.response);
        let mut target = ex.response.clone();
        target.push(EOS);
        let logits = decode(s, &input, &text, &graph)?;
        let ce = s.tape.cross_entropy(logits, &target)?;
        tokens += target.len();
        total = Some(match total {
            Some(t) => s.tape.add(t, ce)?,
            None => ce,
        });
    }
    let total = total.expect("non-empty batch");
    Ok(s.tape.scale(total, 1.0 / tokens as f64))
}

/// Loss value without dropout or gradients.
pub fn evaluate_loss(
    params: &ParamStore,
    cfg: &ModelConfig,
    ablation: Ablation,
    batch: &[TrainingExample],
) -> Result<f64, ModelError> {
    let mut tape = Tape::new();
    let mut s = Session::new(&mut tape, params, cfg).with_ablation(ablation);
    let loss = compute_loss(&mut s, batch)?;
    Ok(tape.scalar(loss))
}

/// Everything that changes while training.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainState {
    pub params: ParamStore,
    pub adam: AdamState,
    pub rng: RngState,
    /// Completed epochs.
    pub epoch: usize,
    pub step: usize,
    /// Token-weighted mean training loss per completed epoch.
    pub loss_log: Vec<f64>,
    pub best_loss: Option<f64>,
}

impl TrainState {
    pub fn new(cfg: &ModelConfig, tcfg: &TrainConfig) -> Result<Self, ModelError> {
        Ok(Self {
            params: cfg.init_params(tcfg.seed)?,
            adam: AdamState::new(),
            rng: RngState::capture(&rng::seeded(tcfg.seed, TRAIN_STREAM)),
            epoch: 0,
            step: 0,
            loss_log: Vec::new(),
            best_loss: None,
        })
    }

    fn step_budget_left(&self, tcfg: &TrainConfig) -> bool {
        tcfg.max_steps.is_none_or(|m| self.step < m)
    }

    /// Whether another epoch would run under `tcfg`.
    pub fn finished(&self, tcfg: &TrainConfig) -> bool {
        self.epoch >= tcfg.max_epochs || !self.step_budget_left(tcfg)
    }
}

/// One pass over `data` in a seeded shuffled order. Returns the epoch loss.
pub fn train_epoch(
    state: &mut TrainState,
    data: &[TrainingExample],
    cfg: &ModelConfig,
    tcfg: &TrainConfig,
) -> Result<f64, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyDataset);
    }
    let mut rng = state.rng.restore();
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let adam_cfg = AdamConfig::with_lr(tcfg.learning_rate);
    let mut weighted = 0.0;
    let mut tokens = 0;
    for chunk in order.chunks(tcfg.batch_size) {
        if !state.step_budget_left(tcfg) {
            break;
        }
        let batch: Vec<TrainingExample> = chunk.iter().map(|&i| data[i].clone()).collect();
        state.params.zero_grad();
        let mut tape = Tape::new();
        let loss = {
            let mut s = Session::new(&mut tape, &state.params, cfg)
                .with_ablation(tcfg.ablation)
                .with_dropout(&mut rng);
            compute_loss(&mut s, &batch)?
        };
        let value = tape.scalar(loss);
        if !value.is_finite() {
            return Err(TrainError::NonFiniteLoss {
                loss: value,
                epoch: state.epoch + 1,
                step: state.step + 1,
            });
        }
        tape.backward(loss, &mut state.params)?;
        drop(tape);
        state.params.clip_grad_norm(tcfg.grad_clip_norm);
        adam_step(&mut state.params, &mut state.adam, &adam_cfg)?;
        state.step += 1;
        let n: usize = batch.iter().map(|e| e.response.len() + 1).sum();
        weighted += value * n as f64;
        tokens += n;
        log::debug!("step {} loss {value:.6}", state.step);
    }
    let epoch_loss = weighted / tokens.max(1) as f64;
    state.rng = RngState::capture(&rng);
    state.epoch += 1;
    state.loss_log.push(epoch_loss);
    Ok(epoch_loss)
}

/// Trains until `max_epochs` or `max_steps`. With `out_dir`, writes
/// `epoch-NNN.ckpt` after every epoch and `best.ckpt` whenever the epoch loss
/// improves.
pub fn train(
    ckpt: &mut Checkpoint,
    data: &[TrainingExample],
    out_dir: Option<&Path>,
) -> Result<(), TrainError> {
    ckpt.train.validate()?;
    ckpt.model.validate()?;
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir).map_err(|e| CheckpointError::io(dir, e))?;
    }
    while !ckpt.state.finished(&ckpt.train) {
        let loss = train_epoch(&mut ckpt.state, data, &ckpt.model, &ckpt.train)?;
        log::info!("epoch {} loss {loss:.6}", ckpt.state.epoch);
        let improved = ckpt.state.best_loss.is_none_or(|b| loss < b);
        if improved {
            ckpt.state.best_loss = Some(loss);
        }
        if let Some(dir) = out_dir {
            save_checkpoint(ckpt, &dir.join(format!("epoch-{:03}.ckpt", ckpt.state.epoch)))?;
            if improved {
                save_checkpoint(ckpt, &dir.join("best.ckpt"))?;
            }
        }
    }
    Ok(())
}
