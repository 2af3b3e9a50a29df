//! Transformer building blocks. Activations are `d × q` with one column per
//! time stamp; every layer owns `ParamId`s into a shared [`ParamStore`].

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor;

use super::graph::{Graph, NodeId};
use super::params::{ParamId, ParamStore};

/// `W Z + b`, with the bias broadcast across columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, bias: bool, rng: &mut Rng) -> Self {
        let weight = store.add_xavier(format!("{name}.weight"), d_out, d_in, rng);
        let bias = bias.then(|| store.add(format!("{name}.bias"), Tensor::zeros(d_out, 1)));
        Self { weight, bias }
    }

    pub fn forward(&self, g: &mut Graph, z: NodeId) -> Result<NodeId> {
        let w = g.param(self.weight);
        let y = g.matmul(w, z)?;
        match self.bias {
            Some(b) => {
                let b = g.param(b);
                g.add_col_bias(y, b)
            }
            None => Ok(y),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, d: usize) -> Self {
        let gain = store.add(format!("{name}.gain"), Tensor::filled(d, 1, 1.0));
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(d, 1));
        Self { gain, bias }
    }

    pub fn forward(&self, g: &mut Graph, z: NodeId) -> Result<NodeId> {
        let (gn, bn) = (g.param(self.gain), g.param(self.bias));
        g.layer_norm_cols(z, gn, bn)
    }
}

/// Multi-head scaled dot-product attention. Queries come from one sequence and
/// keys/values from another (the same one for self-attention).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHeadAttention {
    pub w_q: ParamId,
    pub w_k: ParamId,
    pub w_v: ParamId,
    pub out: Linear,
    pub n_head: usize,
    pub causal: bool,
}

impl MultiHeadAttention {
    pub fn new(store: &mut ParamStore, name: &str, d_model: usize, n_head: usize, causal: bool, rng: &mut Rng) -> Result<Self> {
        if n_head == 0 || d_model % n_head != 0 {
            return Err(Error::InvalidParameter(format!("d_model {d_model} is not divisible by {n_head} heads")));
        }
        Ok(Self {
            w_q: store.add_xavier(format!("{name}.w_q"), d_model, d_model, rng),
            w_k: store.add_xavier(format!("{name}.w_k"), d_model, d_model, rng),
            w_v: store.add_xavier(format!("{name}.w_v"), d_model, d_model, rng),
            out: Linear::new(store, &format!("{name}.w_o"), d_model, d_model, true, rng),
            n_head,
            causal,
        })
    }

    pub fn forward(&self, g: &mut Graph, query: NodeId, memory: NodeId) -> Result<NodeId> {
        let d_model = g.value(query).rows();
        if g.value(memory).rows() != d_model {
            return Err(Error::shape("attention inputs have different widths"));
        }
        let d_head = d_model / self.n_head;
        let scale = 1.0 / libm::sqrt(d_head as f64);
        let (wq, wk, wv) = (g.param(self.w_q), g.param(self.w_k), g.param(self.w_v));
        let q = g.matmul(wq, query)?;
        let k = g.matmul(wk, memory)?;
        let v = g.matmul(wv, memory)?;
        let mut heads = Vec::with_capacity(self.n_head);
        for h in 0..self.n_head {
            let qh = g.slice_rows(q, h * d_head, d_head);
            let kh = g.slice_rows(k, h * d_head, d_head);
            let vh = g.slice_rows(v, h * d_head, d_head);
            // scores[j, i]: key j against query column i
            let kt = g.transpose(kh);
            let s = g.matmul(kt, qh)?;
            let s = g.scale(s, scale);
            let a = g.softmax_cols(s, self.causal);
            heads.push(g.matmul(vh, a)?);
        }
        let cat = if heads.len() == 1 { heads[0] } else { g.concat_rows(&heads)? };
        self.out.forward(g, cat)
    }
}

/// Position-wise two-layer ReLU network.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}

impl FeedForward {
    pub fn new(store: &mut ParamStore, name: &str, d_model: usize, d_ff: usize, rng: &mut Rng) -> Self {
        Self {
            inner: Linear::new(store, &format!("{name}.inner"), d_model, d_ff, true, rng),
            outer: Linear::new(store, &format!("{name}.outer"), d_ff, d_model, true, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, z: NodeId) -> Result<NodeId> {
        let h = self.inner.forward(g, z)?;
        let h = g.relu(h);
        self.outer.forward(g, h)
    }
}

/// Shape parameters shared by the block constructors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockConfig {
    pub d_model: usize,
    pub d_ff: usize,
    pub n_head: usize,
    pub dropout: f64,
}

fn residual_norm(g: &mut Graph, z: NodeId, sub: NodeId, norm: &LayerNorm, dropout: f64) -> Result<NodeId> {
    let sub = g.dropout(sub, dropout);
    let s = g.add(z, sub)?;
    norm.forward(g, s)
}

/// Self-attention followed by a feed-forward network, each wrapped in a
/// residual connection and post-layer-normalisation.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderBlock {
    pub attn: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub ff: FeedForward,
    pub norm2: LayerNorm,
    pub dropout: f64,
}

impl EncoderBlock {
    pub fn new(store: &mut ParamStore, name: &str, cfg: BlockConfig, rng: &mut Rng) -> Result<Self> {
        Ok(Self {
            attn: MultiHeadAttention::new(store, &format!("{name}.attn"), cfg.d_model, cfg.n_head, false, rng)?,
            norm1: LayerNorm::new(store, &format!("{name}.norm1"), cfg.d_model),
            ff: FeedForward::new(store, &format!("{name}.ff"), cfg.d_model, cfg.d_ff, rng),
            norm2: LayerNorm::new(store, &format!("{name}.norm2"), cfg.d_model),
            dropout: cfg.dropout,
        })
    }

    pub fn forward(&self, g: &mut Graph, z: NodeId) -> Result<NodeId> {
        let a = self.attn.forward(g, z, z)?;
        let z = residual_norm(g, z, a, &self.norm1, self.dropout)?;
        let f = self.ff.forward(g, z)?;
        residual_norm(g, z, f, &self.norm2, self.dropout)
    }
}

/// Causal self-attention, optional cross-attention over encoder output, then
/// a feed-forward network. Without cross-attention this is the block used by
/// the state generator.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderBlock {
    pub self_attn: MultiHeadAttention,
    pub norm1: LayerNorm,
    pub cross: Option<(MultiHeadAttention, LayerNorm)>,
    pub ff: FeedForward,
    pub norm3: LayerNorm,
    pub dropout: f64,
}

impl DecoderBlock {
    pub fn new(store: &mut ParamStore, name: &str, cfg: BlockConfig, cross: bool, rng: &mut Rng) -> Result<Self> {
        let self_attn = MultiHeadAttention::new(store, &format!("{name}.self_attn"), cfg.d_model, cfg.n_head, true, rng)?;
        let norm1 = LayerNorm::new(store, &format!("{name}.norm1"), cfg.d_model);
        let cross = if cross {
            let attn = MultiHeadAttention::new(store, &format!("{name}.cross_attn"), cfg.d_model, cfg.n_head, false, rng)?;
            Some((attn, LayerNorm::new(store, &format!("{name}.norm2"), cfg.d_model)))
        } else {
            None
        };
        Ok(Self {
            self_attn,
            norm1,
            cross,
            ff: FeedForward::new(store, &format!("{name}.ff"), cfg.d_model, cfg.d_ff, rng),
            norm3: LayerNorm::new(store, &format!("{name}.norm3"), cfg.d_model),
            dropout: cfg.dropout,
        })
    }

    pub fn forward(&self, g: &mut Graph, z: NodeId, memory: Option<NodeId>) -> Result<NodeId> {
        let a = self.self_attn.forward(g, z, z)?;
        let mut z = residual_norm(g, z, a, &self.norm1, self.dropout)?;
        match (&self.cross, memory) {
            (Some((attn, norm)), Some(mem)) => {
                let c = attn.forward(g, z, mem)?;
                z = residual_norm(g, z, c, norm, self.dropout)?;
            }
            (None, None) => {}
            _ => return Err(Error::shape("encoder memory does not match the block configuration")),
        }
        let f = self.ff.forward(g, z)?;
        residual_norm(g, z, f, &self.norm3, self.dropout)
    }
}
