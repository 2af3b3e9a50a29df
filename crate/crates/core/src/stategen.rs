//! Decoder-only next-state model used when the Markov order is too high for
//! an explicit transition matrix. The window is `p` history states followed
//! by a learned placeholder column; the last position's projection gives the
//! next-state distribution.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::embed::{sum_nodes, CalendarScaler, StateEmbedding, TimeEmbedding};
use crate::neural::layers::{BlockConfig, DecoderBlock, Linear};
use crate::neural::train::{train, TrainConfig, TrainReport, Trainable};
use crate::neural::{Graph, NodeId, ParamStore};
use crate::rng::{categorical, derive_seed, seeded};
use crate::series::{HyperParams, MarkovStateSequence, Realization, TimeStampVector};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateGenConfig {
    pub n_states: usize,
    /// Markov order `p`: number of history states in each window.
    pub order: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub n_head: usize,
    pub n_blocks: usize,
    pub dropout: f64,
    pub focal_gamma: f64,
    pub tail_class_weight: f64,
    /// States `0..n_tail` are tail states and get `tail_class_weight`.
    pub n_tail: usize,
    /// Calendar time embedding when set, positional otherwise.
    pub calendar: Option<CalendarScaler>,
}

impl StateGenConfig {
    pub fn from_hyperparams(hp: &HyperParams, n_states: usize, n_tail: usize, calendar: Option<CalendarScaler>) -> Self {
        Self {
            n_states,
            order: hp.markov_order,
            d_model: hp.d_model,
            d_ff: hp.d_ff,
            n_head: hp.n_head,
            n_blocks: hp.n_markov,
            dropout: hp.dropout_rate,
            focal_gamma: hp.focal_gamma,
            tail_class_weight: hp.tail_class_weight,
            n_tail,
            calendar,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n_states == 0 || self.order == 0 || self.d_model == 0 || self.d_ff == 0 || self.n_blocks == 0 {
            return Err(Error::InvalidParameter("state generator sizes must be positive".into()));
        }
        if self.n_tail > self.n_states {
            return Err(Error::InvalidParameter(format!("{} tail states out of {}", self.n_tail, self.n_states)));
        }
        Ok(())
    }
}

/// One training example: `order` past states, the state that followed, and
/// the `order + 1` stamps covering both.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSample {
    pub history: Vec<usize>,
    pub target: usize,
    pub stamps: TimeStampVector,
}

/// Every window of length `order + 1` in `states`, stamped by `stamps`.
pub fn state_samples_from(states: &MarkovStateSequence, stamps: &TimeStampVector, order: usize) -> Result<Vec<StateSample>> {
    if stamps.len() != states.len() {
        return Err(Error::shape(format!("{} stamps for {} states", stamps.len(), states.len())));
    }
    let y = states.states();
    Ok((order..y.len())
        .map(|t| StateSample { history: y[t - order..t].to_vec(), target: y[t], stamps: stamps.slice(t - order..t + 1) })
        .collect())
}

/// Windows of all realizations; none crosses a realization boundary.
pub fn state_samples(realizations: &[Realization], order: usize) -> Result<Vec<StateSample>> {
    let mut out = Vec::new();
    for r in realizations {
        out.extend(state_samples_from(&r.states, r.series.stamps(), order)?);
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct StateGenModel {
    pub config: StateGenConfig,
    pub store: ParamStore,
    /// `n_states + 1` columns; the last is the placeholder.
    states: StateEmbedding,
    time: TimeEmbedding,
    blocks: Vec<DecoderBlock>,
    head: Linear,
}

impl StateGenModel {
    /// Fresh parameters. The same config and seed always give the same
    /// parameter layout and values.
    pub fn new(config: StateGenConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded(seed);
        let mut store = ParamStore::new();
        let d = config.d_model;
        let states = StateEmbedding::new(&mut store, "stategen.state_emb", d, config.n_states + 1, &mut rng);
        let time = match config.calendar {
            Some(scaler) => TimeEmbedding::calendar(&mut store, "stategen.time_emb", d, scaler, &mut rng),
            None => TimeEmbedding::Positional,
        };
        let block = BlockConfig { d_model: d, d_ff: config.d_ff, n_head: config.n_head, dropout: config.dropout };
        let blocks = (0..config.n_blocks)
            .map(|i| DecoderBlock::new(&mut store, &format!("stategen.block{i}"), block, false, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let head = Linear::new(&mut store, "stategen.head", d, config.n_states, true, &mut rng);
        Ok(Self { config, store, states, time, blocks, head })
    }

    pub fn head(&self) -> &Linear {
        &self.head
    }

    /// `n_states × 1` logits for the state following `history`.
    pub fn logits(&self, g: &mut Graph, history: &[usize], stamps: &TimeStampVector) -> Result<NodeId> {
        let p = self.config.order;
        if history.len() != p || stamps.len() != p + 1 {
            return Err(Error::shape(format!(
                "expected {p} history states and {} stamps, got {} and {}",
                p + 1,
                history.len(),
                stamps.len()
            )));
        }
        if let Some(&s) = history.iter().find(|&&s| s >= self.config.n_states) {
            return Err(Error::UnknownState { state: s, n_states: self.config.n_states });
        }
        let mut idx = history.to_vec();
        idx.push(self.config.n_states);
        let e = self.states.forward(g, &idx)?;
        let t = self.time.forward(g, stamps, self.config.d_model)?;
        let mut z = sum_nodes(g, &[e, t])?;
        for b in &self.blocks {
            z = b.forward(g, z, None)?;
        }
        let last = g.slice_cols(z, p, 1);
        self.head.forward(g, last)
    }

    /// Next-state probabilities; sums to one.
    pub fn probabilities(&self, history: &[usize], stamps: &TimeStampVector) -> Result<Vec<f64>> {
        let mut g = Graph::new(&self.store);
        let l = self.logits(&mut g, history, stamps)?;
        Ok(softmax(&g.value(l).column(0)))
    }

    fn class_weight(&self, target: usize) -> f64 {
        if target < self.config.n_tail {
            self.config.tail_class_weight
        } else {
            1.0
        }
    }

    /// Trains on the windows of `train_set`, early-stopping on `val_set`.
    pub fn fit(&mut self, train_set: &[Realization], val_set: &[Realization], cfg: &TrainConfig) -> Result<TrainReport> {
        let tr = state_samples(train_set, self.config.order)?;
        let va = state_samples(val_set, self.config.order)?;
        train(self, &tr, &va, cfg)
    }

    /// Samples `n_steps` states after `init` (which must hold exactly `order`
    /// states stamped by `init_stamps`). The returned sequence excludes `init`.
    pub fn generate(&self, init: &[usize], init_stamps: &TimeStampVector, n_steps: usize, seed: u64) -> Result<MarkovStateSequence> {
        let p = self.config.order;
        if init.len() != p || init_stamps.len() != p {
            return Err(Error::shape(format!("generation needs {p} initial states and stamps")));
        }
        let stamps = init_stamps.concat(&init_stamps.continuation(n_steps))?;
        let mut window: Vec<usize> = init.to_vec();
        let mut out = Vec::with_capacity(n_steps);
        let mut rng = seeded(derive_seed(seed, 0));
        for k in 0..n_steps {
            let probs = self.probabilities(&window, &stamps.slice(k..k + p + 1))?;
            let next = categorical(&mut rng, &probs);
            out.push(next);
            window.remove(0);
            window.push(next);
        }
        MarkovStateSequence::new(out, self.config.n_states)
    }
}

impl Trainable for StateGenModel {
    type Sample = StateSample;

    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn loss(&self, g: &mut Graph, s: &StateSample) -> Result<NodeId> {
        if s.target >= self.config.n_states {
            return Err(Error::UnknownState { state: s.target, n_states: self.config.n_states });
        }
        let l = self.logits(g, &s.history, &s.stamps)?;
        g.focal_loss(l, s.target, self.config.focal_gamma, self.class_weight(s.target))
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| libm::exp(v - max)).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// Empirical distribution of length-`n` words over all sequences, indexed
/// as a base-`n_states` number with the oldest state most significant.
pub fn ngram_frequencies(seqs: &[&[usize]], n_states: usize, n: usize) -> Vec<f64> {
    let cells = n_states.pow(n as u32);
    let mut counts = vec![0u64; cells];
    let mut total = 0u64;
    for s in seqs {
        for w in s.windows(n) {
            let idx = w.iter().fold(0, |acc, &x| acc * n_states + x);
            counts[idx] += 1;
            total += 1;
        }
    }
    counts.into_iter().map(|c| if total == 0 { 0.0 } else { c as f64 / total as f64 }).collect()
}

/// Half the L1 distance between two distributions.
pub fn total_variation(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}
