//! Mini-batch ADAM training with a step learning-rate schedule and early
//! stopping on validation loss. Shared by the state generator and the
//! encoder-decoder model.

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};

use super::graph::{Graph, NodeId};
use super::optim::{adam_step, AdamConfig, LrSchedule};
use super::params::{Gradients, ParamStore};

/// A model that can build a scalar loss for one sample.
pub trait Trainable {
    type Sample;

    fn store(&self) -> &ParamStore;
    fn store_mut(&mut self) -> &mut ParamStore;
    fn loss(&self, g: &mut Graph, sample: &Self::Sample) -> Result<NodeId>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub schedule: LrSchedule,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub patience: usize,
    pub seed: u64,
    /// Stop after this many optimiser steps regardless of epochs.
    pub max_steps: Option<u64>,
    pub adam: AdamConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub steps: u64,
}

/// Mean loss over `samples` with dropout disabled.
pub fn evaluate<M: Trainable>(model: &M, samples: &[M::Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::NoWindows);
    }
    let mut total = 0.0;
    for s in samples {
        let mut g = Graph::new(model.store());
        let l = model.loss(&mut g, s)?;
        total += g.value(l)[(0, 0)];
    }
    Ok(total / samples.len() as f64)
}

/// Trains in place and restores the parameters of the best validation epoch.
/// With no validation samples the training loss is monitored instead.
pub fn train<M: Trainable>(model: &mut M, train: &[M::Sample], val: &[M::Sample], cfg: &TrainConfig) -> Result<TrainReport> {
    if train.is_empty() {
        return Err(Error::NoWindows);
    }
    if cfg.batch_size == 0 || cfg.max_epochs == 0 {
        return Err(Error::InvalidParameter("batch size and epoch count must be positive".into()));
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut best = f64::INFINITY;
    let mut best_epoch = 0;
    let mut best_params = model.store().snapshot();
    let mut stale = 0;
    let mut step: u64 = 0;
    let mut epochs = Vec::new();

    'outer: for epoch in 1..=cfg.max_epochs {
        let lr = cfg.schedule.lr_at(epoch);
        let mut shuffle_rng = seeded(derive_seed(cfg.seed, epoch as u64));
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut seen = 0usize;
        let mut stop_now = false;
        for batch in order.chunks(cfg.batch_size) {
            let mut sum = Gradients::new(model.store().len());
            for &i in batch {
                let dropout_seed = derive_seed(derive_seed(cfg.seed, u64::MAX), step * cfg.batch_size as u64 + i as u64);
                let mut g = Graph::training(model.store(), dropout_seed);
                let l = model.loss(&mut g, &train[i])?;
                let v = g.value(l)[(0, 0)];
                if !v.is_finite() {
                    return Err(Error::NonFiniteResult(alloc::format!("training loss at epoch {epoch}")));
                }
                epoch_loss += v;
                seen += 1;
                sum.merge(&g.backward(l)?);
            }
            model.store_mut().accumulate(&sum, 1.0 / batch.len() as f64);
            step += 1;
            adam_step(model.store_mut(), lr, cfg.adam, step);
            if cfg.max_steps.is_some_and(|m| step >= m) {
                stop_now = true;
                break;
            }
        }
        let train_loss = epoch_loss / seen.max(1) as f64;
        let val_loss = if val.is_empty() { evaluate(model, train)? } else { evaluate(model, val)? };
        epochs.push(EpochStats { epoch, lr, train_loss, val_loss });
        if val_loss < best {
            best = val_loss;
            best_epoch = epoch;
            best_params = model.store().snapshot();
            stale = 0;
        } else {
            stale += 1;
        }
        if stop_now || stale >= cfg.patience.max(1) {
            break 'outer;
        }
    }
    model.store_mut().restore(&best_params);
    Ok(TrainReport { epochs, best_epoch, best_val_loss: best, steps: step })
}
