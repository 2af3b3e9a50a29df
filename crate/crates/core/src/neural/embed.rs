//! Value, time and Markov-state embeddings. Each produces a `d_model × q`
//! node; the models add them together.

use alloc::format;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::series::{CalendarStamp, StampKind, TimeStampVector};
use crate::tensor::Tensor;

use super::graph::{Graph, NodeId};
use super::params::{ParamId, ParamStore};

pub const VALUE_KERNEL: usize = 3;
const EMBED_STD: f64 = 0.02;

/// Sinusoidal encoding of the window positions `0..q`.
pub fn positional_embedding(q: usize, d_model: usize) -> Tensor {
    Tensor::from_fn(d_model, q, |r, j| {
        let k = (r / 2) as f64;
        let angle = j as f64 / libm::pow(10000.0, 2.0 * k / d_model as f64);
        if r % 2 == 0 {
            libm::sin(angle)
        } else {
            libm::cos(angle)
        }
    })
}

/// Affine map of each calendar unit onto `[−0.5, 0.5]`. Month, day and hour use
/// their natural ranges; the year range comes from the training data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalendarScaler {
    pub year_min: i32,
    pub year_max: i32,
}

impl CalendarScaler {
    pub fn fit(stamps: &[CalendarStamp]) -> Self {
        let year_min = stamps.iter().map(|s| s.year).min().unwrap_or(0);
        let year_max = stamps.iter().map(|s| s.year).max().unwrap_or(0);
        Self { year_min, year_max }
    }

    fn unit(v: f64, lo: f64, hi: f64) -> f64 {
        if hi > lo {
            (v - lo) / (hi - lo) - 0.5
        } else {
            0.0
        }
    }

    /// `4 × q` matrix with rows year, month, day, hour.
    pub fn features(&self, stamps: &[CalendarStamp]) -> Tensor {
        let mut t = Tensor::zeros(4, stamps.len());
        for (j, s) in stamps.iter().enumerate() {
            t[(0, j)] = Self::unit(s.year as f64, self.year_min as f64, self.year_max as f64);
            t[(1, j)] = Self::unit(s.month as f64, 1.0, 12.0);
            t[(2, j)] = Self::unit(s.day as f64, 1.0, 31.0);
            t[(3, j)] = Self::unit(s.hour as f64, 0.0, 23.0);
        }
        t
    }
}

/// How the time stamps of a window enter the model.
#[derive(Debug, Clone, PartialEq)]
pub enum TimeEmbedding {
    Positional,
    Calendar { weight: ParamId, scaler: CalendarScaler },
}

impl TimeEmbedding {
    pub fn calendar(store: &mut ParamStore, name: &str, d_model: usize, scaler: CalendarScaler, rng: &mut Rng) -> Self {
        let weight = store.add_xavier(format!("{name}.weight"), d_model, 4, rng);
        TimeEmbedding::Calendar { weight, scaler }
    }

    pub fn forward(&self, g: &mut Graph, stamps: &TimeStampVector, d_model: usize) -> Result<NodeId> {
        match self {
            TimeEmbedding::Positional => Ok(g.constant(positional_embedding(stamps.len(), d_model))),
            TimeEmbedding::Calendar { weight, scaler } => {
                let cal = stamps.as_calendar().ok_or_else(|| {
                    Error::InvalidStamps(format!("calendar embedding needs calendar stamps, got {:?}", stamps.kind()))
                })?;
                let f = g.constant(scaler.features(cal));
                let w = g.param(*weight);
                g.matmul(w, f)
            }
        }
    }

    pub fn kind(&self) -> StampKind {
        match self {
            TimeEmbedding::Positional => StampKind::Unitless,
            TimeEmbedding::Calendar { .. } => StampKind::Calendar,
        }
    }
}

/// Learned table with one `d_model` column per state.
#[derive(Debug, Clone, PartialEq)]
pub struct StateEmbedding {
    pub table: ParamId,
    pub n_states: usize,
}

impl StateEmbedding {
    pub fn new(store: &mut ParamStore, name: &str, d_model: usize, n_states: usize, rng: &mut Rng) -> Self {
        let table = store.add_normal(format!("{name}.table"), d_model, n_states, EMBED_STD, rng);
        Self { table, n_states }
    }

    pub fn forward(&self, g: &mut Graph, states: &[usize]) -> Result<NodeId> {
        if let Some(&s) = states.iter().find(|&&s| s >= self.n_states) {
            return Err(Error::UnknownState { state: s, n_states: self.n_states });
        }
        let t = g.param(self.table);
        g.gather_cols(t, states)
    }
}

/// Circular 1-D convolution over time of the `m × q` values, no bias.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueEmbedding {
    pub weight: ParamId,
    pub kernel: usize,
    pub m: usize,
}

impl ValueEmbedding {
    pub fn new(store: &mut ParamStore, name: &str, m: usize, d_model: usize, kernel: usize, rng: &mut Rng) -> Self {
        let weight = store.add_xavier(format!("{name}.weight"), d_model, m * kernel, rng);
        Self { weight, kernel, m }
    }

    pub fn forward(&self, g: &mut Graph, x: NodeId) -> Result<NodeId> {
        if g.value(x).rows() != self.m {
            return Err(Error::shape(format!("value embedding expects {} rows, got {}", self.m, g.value(x).rows())));
        }
        let u = g.circular_unfold(x, self.kernel);
        let w = g.param(self.weight);
        g.matmul(w, u)
    }
}

/// Column-wise sum helper for embedding terms.
pub fn sum_nodes(g: &mut Graph, parts: &[NodeId]) -> Result<NodeId> {
    let mut it = parts.iter();
    let first = *it.next().ok_or(Error::EmptyInput)?;
    it.try_fold(first, |acc, p| g.add(acc, *p))
}
