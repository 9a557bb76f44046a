//! AdamW training with cosine-annealed learning rate, global gradient-norm
//! clipping and per-epoch checkpoint selection on validation loss.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{save_checkpoint, Checkpoint, OptimizerState, TrainState};
use crate::model::{window_loss, window_loss_and_grad, ModelConfig, ModelParams};
use crate::series::MultiResWindow;
use crate::synth::child_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    /// Floor of the cosine schedule.
    pub lr_min: f64,
    pub weight_decay: f64,
    pub grad_clip_norm: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Reserved for a Muon optimizer on hidden matrices; must stay false.
    pub muon: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 5e-5,
            lr_min: 0.0,
            weight_decay: 0.05,
            grad_clip_norm: 1.0,
            epochs: 20,
            batch_size: 32,
            seed: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            muon: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("train config: {m}")));
        if !(self.lr >= 0.0) || !(self.lr_min >= 0.0) || self.lr_min > self.lr {
            return bad("need 0 <= lr_min <= lr");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch_size must be at least 1");
        }
        if !(self.grad_clip_norm > 0.0) || !(self.weight_decay >= 0.0) {
            return bad("grad_clip_norm must be positive and weight_decay non-negative");
        }
        if self.muon {
            return bad("the Muon optimizer is not implemented");
        }
        Ok(())
    }
}

/// `lr_min + (lr_max - lr_min)(1 + cos(pi t / T)) / 2`, held at `lr_min` past `T`.
pub fn cosine_lr(step: usize, total: usize, lr_max: f64, lr_min: f64) -> f64 {
    if total == 0 {
        return lr_max;
    }
    let frac = (step.min(total) as f64) / total as f64;
    lr_min + 0.5 * (lr_max - lr_min) * (1.0 + (std::f64::consts::PI * frac).cos())
}

/// Rescales `grad` so its global L2 norm is at most `max_norm`. Returns the norm before clipping.
pub fn clip_grad_norm(grad: &mut ModelParams, max_norm: f64) -> f64 {
    let norm = grad.norm();
    if norm > max_norm {
        grad.scale(max_norm / norm);
    }
    norm
}

impl OptimizerState {
    pub fn new(params: &ModelParams) -> Self {
        Self { t: 0, m: params.zeros_like(), v: params.zeros_like() }
    }

    /// One AdamW update with decoupled weight decay `lr * wd * p`.
    pub fn adamw_step(&mut self, params: &mut ModelParams, grad: &ModelParams, lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t as i32);
        let bc2 = 1.0 - cfg.beta2.powi(self.t as i32);
        let tensors = params.tensors_mut().into_iter().zip(grad.tensors()).zip(self.m.tensors_mut()).zip(self.v.tensors_mut());
        for ((((_, p), (_, g)), (_, m)), (_, v)) in tensors {
            for i in 0..p.data.len() {
                let gi = g.data[i];
                m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * gi;
                v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * gi * gi;
                let update = (m.data[i] / bc1) / ((v.data[i] / bc2).sqrt() + cfg.eps);
                p.data[i] -= lr * (update + cfg.weight_decay * p.data[i]);
            }
        }
    }
}

/// Mean loss and gradient over a batch. Samples run in parallel; the
/// reduction is sequential in batch order so results are reproducible.
pub fn batch_loss_and_grad(params: &ModelParams, config: &ModelConfig, batch: &[&MultiResWindow]) -> Result<(f64, ModelParams)> {
    let per_sample: Vec<(f64, ModelParams)> = batch.par_iter().map(|w| window_loss_and_grad(params, config, w)).collect::<Result<_>>()?;
    let mut total = params.zeros_like();
    let mut loss = 0.0;
    for (l, g) in &per_sample {
        loss += l;
        total.add_assign(g);
    }
    let n = batch.len().max(1) as f64;
    total.scale(1.0 / n);
    Ok((loss / n, total))
}

/// Mean loss over `windows`, reduced in order.
pub fn mean_loss(params: &ModelParams, config: &ModelConfig, windows: &[MultiResWindow]) -> Result<f64> {
    if windows.is_empty() {
        return Err(Error::InvalidArgument("cannot compute the loss of an empty set".into()));
    }
    let losses: Vec<f64> = windows.par_iter().map(|w| window_loss(params, config, w)).collect::<Result<_>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// Stateful optimizer loop over caller-supplied batches.
pub struct Trainer {
    pub config: ModelConfig,
    pub train_config: TrainConfig,
    pub params: ModelParams,
    pub optimizer: OptimizerState,
    pub step: usize,
    pub total_steps: usize,
}

impl Trainer {
    pub fn new(params: ModelParams, config: ModelConfig, train_config: TrainConfig, total_steps: usize) -> Result<Self> {
        config.validate()?;
        train_config.validate()?;
        let optimizer = OptimizerState::new(&params);
        Ok(Self { config, train_config, params, optimizer, step: 0, total_steps })
    }

    pub fn lr(&self) -> f64 {
        cosine_lr(self.step, self.total_steps, self.train_config.lr, self.train_config.lr_min)
    }

    /// Computes the batch loss at the current parameters, then updates them.
    pub fn step(&mut self, batch: &[&MultiResWindow]) -> Result<f64> {
        let (loss, mut grad) = batch_loss_and_grad(&self.params, &self.config, batch)?;
        if !loss.is_finite() || !grad.all_finite() {
            return Err(Error::NonFiniteLoss { step: self.step, last_good: "none".into() });
        }
        clip_grad_norm(&mut grad, self.train_config.grad_clip_norm);
        let lr = self.lr();
        self.optimizer.adamw_step(&mut self.params, &grad, lr, &self.train_config);
        self.step += 1;
        Ok(loss)
    }

    pub fn checkpoint(&self, epoch: usize, train_loss: Option<f64>, validation_loss: Option<f64>) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            params: self.params.clone(),
            state: TrainState {
                format_version: 1,
                epoch,
                step: self.step,
                total_steps: self.total_steps,
                lr: self.lr(),
                train_loss,
                validation_loss,
                seed: self.train_config.seed,
            },
            optimizer: Some(self.optimizer.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the lowest validation loss.
    pub best: ModelParams,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
    pub step_losses: Vec<f64>,
    pub checkpoints: Vec<PathBuf>,
}

/// Batch order for one epoch, shuffled from the run seed.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(child_seed(seed, epoch as u64)));
    order
}

/// Trains from `init`, evaluating on `validation` after each epoch. When
/// `out_dir` is given, every epoch is saved as `epoch-NNN` and the selected
/// one is also written to `best`.
pub fn train(
    train_set: &[MultiResWindow],
    validation: &[MultiResWindow],
    init: ModelParams,
    config: &ModelConfig,
    train_config: &TrainConfig,
    out_dir: Option<&Path>,
) -> Result<TrainOutcome> {
    if train_set.is_empty() || validation.is_empty() {
        return Err(Error::InsufficientSplit(format!(
            "training needs non-empty train and validation sets, got {} and {}",
            train_set.len(),
            validation.len()
        )));
    }
    let steps_per_epoch = train_set.len().div_ceil(train_config.batch_size);
    let mut trainer = Trainer::new(init, config.clone(), train_config.clone(), steps_per_epoch * train_config.epochs)?;
    let mut history = Vec::new();
    let mut step_losses = Vec::new();
    let mut checkpoints: Vec<PathBuf> = Vec::new();
    let mut best: Option<(f64, usize, ModelParams)> = None;

    for epoch in 0..train_config.epochs {
        let order = epoch_order(train_set.len(), train_config.seed, epoch);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(train_config.batch_size) {
            let batch: Vec<&MultiResWindow> = chunk.iter().map(|&i| &train_set[i]).collect();
            let loss = trainer.step(&batch).map_err(|e| match e {
                Error::NonFiniteLoss { step, .. } => Error::NonFiniteLoss {
                    step,
                    last_good: checkpoints.last().map_or_else(|| "none".to_string(), |p| p.display().to_string()),
                },
                other => other,
            })?;
            epoch_loss += loss * batch.len() as f64;
            step_losses.push(loss);
        }
        let train_loss = epoch_loss / train_set.len() as f64;
        let validation_loss = mean_loss(&trainer.params, config, validation)?;
        log::info!("epoch {epoch}: train loss {train_loss:.6} validation loss {validation_loss:.6} lr {:.3e}", trainer.lr());
        history.push(EpochRecord { epoch, train_loss, validation_loss, lr: trainer.lr() });
        if let Some(dir) = out_dir {
            let path = dir.join(format!("epoch-{epoch:03}"));
            save_checkpoint(&path, &trainer.checkpoint(epoch, Some(train_loss), Some(validation_loss)))?;
            checkpoints.push(path);
        }
        if best.as_ref().is_none_or(|(v, _, _)| validation_loss < *v) {
            best = Some((validation_loss, epoch, trainer.params.clone()));
        }
    }
    let (_, best_epoch, best_params) = best.expect("at least one epoch ran");
    if let Some(dir) = out_dir {
        let record = &history[best_epoch];
        let mut ck = trainer.checkpoint(best_epoch, Some(record.train_loss), Some(record.validation_loss));
        ck.params = best_params.clone();
        ck.optimizer = None;
        save_checkpoint(&dir.join("best"), &ck)?;
    }
    Ok(TrainOutcome { best: best_params, best_epoch, history, step_losses, checkpoints })
}
