//! Tape-based reverse-mode differentiation over 2-D tensors.
//!
//! Nodes are appended in evaluation order, so the tape is a topological order
//! by construction and the backward sweep simply walks it in reverse.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::{self, Rng};
use crate::tensor::Tensor;

use super::params::{Gradients, ParamId, ParamStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    AddColBias(NodeId, NodeId),
    Scale(NodeId, f64),
    Relu(NodeId),
    Transpose(NodeId),
    SoftmaxCols(NodeId),
    LayerNormCols { x: NodeId, gain: NodeId, bias: NodeId, xhat: Tensor, inv_std: Vec<f64> },
    MulConst(NodeId, Tensor),
    SliceRows(NodeId, usize),
    ConcatRows(Vec<NodeId>),
    SliceCols(NodeId, usize),
    ConcatCols(Vec<NodeId>),
    GatherCols(NodeId, Vec<usize>),
    CircularUnfold(NodeId, usize),
    L1Loss(NodeId, Tensor),
    L2Loss(NodeId, Tensor),
    Focal { logits: NodeId, class: usize, coef: f64, probs: Vec<f64> },
    WeightedSum(NodeId, Tensor),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    // `None` for parameters, whose value lives in the store
    value: Option<Tensor>,
}

pub struct Graph<'a> {
    store: &'a ParamStore,
    nodes: Vec<Node>,
    rng: Option<Rng>,
}

pub const LAYER_NORM_EPS: f64 = 1e-5;

impl<'a> Graph<'a> {
    /// Inference graph: dropout is the identity.
    pub fn new(store: &'a ParamStore) -> Self {
        Self { store, nodes: Vec::new(), rng: None }
    }

    /// Training graph whose dropout masks come from `seed`.
    pub fn training(store: &'a ParamStore, seed: u64) -> Self {
        Self { store, nodes: Vec::new(), rng: Some(rng::seeded(seed)) }
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some()
    }

    pub fn store(&self) -> &'a ParamStore {
        self.store
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        let node = &self.nodes[id.0];
        match (&node.op, &node.value) {
            (_, Some(v)) => v,
            (Op::Param(p), None) => self.store.value(*p),
            _ => unreachable!("every non-parameter node stores its value"),
        }
    }

    fn push(&mut self, op: Op, value: Tensor) -> NodeId {
        self.nodes.push(Node { op, value: Some(value) });
        NodeId(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, t: Tensor) -> NodeId {
        self.push(Op::Leaf, t)
    }

    pub fn param(&mut self, id: ParamId) -> NodeId {
        self.nodes.push(Node { op: Op::Param(id), value: None });
        NodeId(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let v = self.value(a).matmul(self.value(b))?;
        Ok(self.push(Op::MatMul(a, b), v))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(Error::shape(alloc::format!("add {:?} + {:?}", va.shape(), vb.shape())));
        }
        let mut v = va.clone();
        v.add_assign(vb);
        Ok(self.push(Op::Add(a, b), v))
    }

    /// Adds the `rows × 1` vector `bias` to every column of `a`.
    pub fn add_col_bias(&mut self, a: NodeId, bias: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(bias));
        if vb.cols() != 1 || vb.rows() != va.rows() {
            return Err(Error::shape(alloc::format!("bias {:?} for input {:?}", vb.shape(), va.shape())));
        }
        let mut v = va.clone();
        for i in 0..v.rows() {
            let b = vb[(i, 0)];
            v.row_mut(i).iter_mut().for_each(|x| *x += b);
        }
        Ok(self.push(Op::AddColBias(a, bias), v))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        let v = self.value(a).map(|x| x * factor);
        self.push(Op::Scale(a, factor), v)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        self.push(Op::Relu(a), v)
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a).transpose();
        self.push(Op::Transpose(a), v)
    }

    /// Column-wise softmax. With `causal`, entry `(j, i)` is excluded for `j > i`,
    /// so column `i` only spreads weight over rows `0..=i`.
    pub fn softmax_cols(&mut self, a: NodeId, causal: bool) -> NodeId {
        let x = self.value(a);
        let (r, c) = x.shape();
        let mut v = Tensor::zeros(r, c);
        for j in 0..c {
            let top = if causal { (j + 1).min(r) } else { r };
            if top == 0 {
                continue;
            }
            let mut m = f64::NEG_INFINITY;
            for i in 0..top {
                m = m.max(x[(i, j)]);
            }
            let mut s = 0.0;
            for i in 0..top {
                let e = libm::exp(x[(i, j)] - m);
                v[(i, j)] = e;
                s += e;
            }
            for i in 0..top {
                v[(i, j)] /= s;
            }
        }
        self.push(Op::SoftmaxCols(a), v)
    }

    /// Normalises each column over its rows, then applies `gain ⊙ x̂ + bias`.
    pub fn layer_norm_cols(&mut self, x: NodeId, gain: NodeId, bias: NodeId) -> Result<NodeId> {
        let xv = self.value(x);
        let (gv, bv) = (self.value(gain), self.value(bias));
        let (d, q) = xv.shape();
        if gv.shape() != (d, 1) || bv.shape() != (d, 1) {
            return Err(Error::shape(alloc::format!("layer norm gain {:?} for input {:?}", gv.shape(), xv.shape())));
        }
        let mut xhat = Tensor::zeros(d, q);
        let mut inv_std = vec![0.0; q];
        let mut out = Tensor::zeros(d, q);
        for j in 0..q {
            let mean = (0..d).map(|i| xv[(i, j)]).sum::<f64>() / d as f64;
            let var = (0..d).map(|i| (xv[(i, j)] - mean) * (xv[(i, j)] - mean)).sum::<f64>() / d as f64;
            let inv = 1.0 / libm::sqrt(var + LAYER_NORM_EPS);
            inv_std[j] = inv;
            for i in 0..d {
                let h = (xv[(i, j)] - mean) * inv;
                xhat[(i, j)] = h;
                out[(i, j)] = gv[(i, 0)] * h + bv[(i, 0)];
            }
        }
        Ok(self.push(Op::LayerNormCols { x, gain, bias, xhat, inv_std }, out))
    }

    /// Inverted dropout; the identity on inference graphs or for `rate == 0`.
    pub fn dropout(&mut self, a: NodeId, rate: f64) -> NodeId {
        if self.rng.is_none() || rate <= 0.0 {
            return a;
        }
        let (r, c) = self.value(a).shape();
        let rng = self.rng.as_mut().expect("training graph");
        let keep = 1.0 / (1.0 - rate);
        let mask = Tensor::from_fn(r, c, |_, _| if rng::uniform(rng) < rate { 0.0 } else { keep });
        self.mul_const(a, mask)
    }

    /// Element-wise product with a constant tensor.
    pub fn mul_const(&mut self, a: NodeId, mask: Tensor) -> NodeId {
        let x = self.value(a);
        let data = x.as_slice().iter().zip(mask.as_slice()).map(|(x, m)| x * m).collect();
        let v = Tensor::from_vec(x.rows(), x.cols(), data).expect("same shape");
        self.push(Op::MulConst(a, mask), v)
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let v = self.value(a).slice_rows(start, len);
        self.push(Op::SliceRows(a, start), v)
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let refs: Vec<&Tensor> = parts.iter().map(|p| self.value(*p)).collect();
        let v = Tensor::concat_rows(&refs)?;
        Ok(self.push(Op::ConcatRows(parts.to_vec()), v))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> NodeId {
        let v = self.value(a).slice_cols(start, len);
        self.push(Op::SliceCols(a, start), v)
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let refs: Vec<&Tensor> = parts.iter().map(|p| self.value(*p)).collect();
        let v = Tensor::concat_cols(&refs)?;
        Ok(self.push(Op::ConcatCols(parts.to_vec()), v))
    }

    /// Picks columns of `table` by index (an embedding lookup).
    pub fn gather_cols(&mut self, table: NodeId, indices: &[usize]) -> Result<NodeId> {
        let t = self.value(table);
        if let Some(&bad) = indices.iter().find(|&&k| k >= t.cols()) {
            return Err(Error::UnknownState { state: bad, n_states: t.cols() });
        }
        let mut v = Tensor::zeros(t.rows(), indices.len());
        for (j, &k) in indices.iter().enumerate() {
            for i in 0..t.rows() {
                v[(i, j)] = t[(i, k)];
            }
        }
        Ok(self.push(Op::GatherCols(table, indices.to_vec()), v))
    }

    /// Stacks `kernel` circularly shifted copies of the `m × q` input into an
    /// `(m·kernel) × q` matrix whose block `s` holds column `(t + s − kernel/2) mod q`.
    /// A weight of shape `d × (m·kernel)` applied to it is a circular convolution.
    pub fn circular_unfold(&mut self, x: NodeId, kernel: usize) -> NodeId {
        let xv = self.value(x);
        let (m, q) = xv.shape();
        let half = kernel / 2;
        let mut v = Tensor::zeros(m * kernel, q);
        if q > 0 {
            for s in 0..kernel {
                for t in 0..q {
                    let src = (t + s + q * kernel - half) % q;
                    for i in 0..m {
                        v[(s * m + i, t)] = xv[(i, src)];
                    }
                }
            }
        }
        self.push(Op::CircularUnfold(x, kernel), v)
    }

    /// Mean absolute error against a constant target.
    pub fn l1_loss(&mut self, pred: NodeId, target: &Tensor) -> Result<NodeId> {
        let p = self.value(pred);
        if p.shape() != target.shape() || p.is_empty() {
            return Err(Error::shape(alloc::format!("loss {:?} vs target {:?}", p.shape(), target.shape())));
        }
        let s: f64 = p.as_slice().iter().zip(target.as_slice()).map(|(a, b)| (a - b).abs()).sum();
        let v = Tensor::filled(1, 1, s / p.len() as f64);
        Ok(self.push(Op::L1Loss(pred, target.clone()), v))
    }

    /// Mean squared error against a constant target.
    pub fn l2_loss(&mut self, pred: NodeId, target: &Tensor) -> Result<NodeId> {
        let p = self.value(pred);
        if p.shape() != target.shape() || p.is_empty() {
            return Err(Error::shape(alloc::format!("loss {:?} vs target {:?}", p.shape(), target.shape())));
        }
        let s: f64 = p.as_slice().iter().zip(target.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum();
        let v = Tensor::filled(1, 1, s / p.len() as f64);
        Ok(self.push(Op::L2Loss(pred, target.clone()), v))
    }

    /// `−w (1 − p_c)^γ ln p_c` where `p = softmax(logits)` for an `n × 1` logit column.
    pub fn focal_loss(&mut self, logits: NodeId, class: usize, gamma: f64, weight: f64) -> Result<NodeId> {
        let z = self.value(logits);
        if z.cols() != 1 || z.rows() == 0 {
            return Err(Error::shape(alloc::format!("focal loss expects a logit column, got {:?}", z.shape())));
        }
        let n = z.rows();
        if class >= n {
            return Err(Error::UnknownState { state: class, n_states: n });
        }
        let m = z.as_slice().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = z.as_slice().iter().map(|x| libm::exp(x - m)).collect();
        let total: f64 = exps.iter().sum();
        let probs: Vec<f64> = exps.iter().map(|e| e / total).collect();
        let log_pc = z[(class, 0)] - m - libm::log(total);
        let pc = probs[class];
        if !(pc > 0.0) {
            return Err(Error::DegenerateProbability(pc));
        }
        // 1 − p_c from the complementary mass avoids cancellation near p_c = 1
        let one_minus: f64 = exps.iter().enumerate().filter(|(k, _)| *k != class).map(|(_, e)| e).sum::<f64>() / total;
        let mod_factor = pow_nonneg(one_minus, gamma);
        let loss = -weight * mod_factor * log_pc;
        let deriv = if gamma == 0.0 { 0.0 } else { gamma * pow_nonneg(one_minus, gamma - 1.0) };
        // ∂L/∂z_k = −w [ (1−p_c)^γ − γ (1−p_c)^{γ−1} p_c ln p_c ] (δ_ck − p_k)
        let coef = -weight * (mod_factor - deriv * pc * log_pc);
        let v = Tensor::filled(1, 1, loss);
        Ok(self.push(Op::Focal { logits, class, coef, probs }, v))
    }

    /// `Σ weights ⊙ a`, a scalar probe used by gradient checks.
    pub fn weighted_sum(&mut self, a: NodeId, weights: &Tensor) -> Result<NodeId> {
        let x = self.value(a);
        if x.shape() != weights.shape() {
            return Err(Error::shape("weighted sum shape"));
        }
        let s: f64 = x.as_slice().iter().zip(weights.as_slice()).map(|(a, b)| a * b).sum();
        Ok(self.push(Op::WeightedSum(a, weights.clone()), Tensor::filled(1, 1, s)))
    }

    /// Gradients of the scalar node `loss` with respect to every parameter on the tape.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients> {
        let lv = self.value(loss);
        if lv.shape() != (1, 1) {
            return Err(Error::NonScalarLoss { rows: lv.rows(), cols: lv.cols() });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::filled(1, 1, 1.0));
        let mut out = Gradients::new(self.store.len());

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            match &self.nodes[idx].op {
                Op::Leaf => {}
                Op::Param(p) => out.accumulate(*p, &g),
                Op::MatMul(a, b) => {
                    let ga = g.matmul_nt(self.value(*b))?;
                    let gb = self.value(*a).matmul_tn(&g)?;
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::AddColBias(a, b) => {
                    let sums: Vec<f64> = (0..g.rows()).map(|i| g.row(i).iter().sum()).collect();
                    acc(&mut grads, *b, Tensor::column_vector(&sums));
                    acc(&mut grads, *a, g);
                }
                Op::Scale(a, f) => acc(&mut grads, *a, g.map(|x| x * f)),
                Op::Relu(a) => {
                    let x = self.value(*a);
                    let data = g.as_slice().iter().zip(x.as_slice()).map(|(g, x)| if *x > 0.0 { *g } else { 0.0 });
                    acc(&mut grads, *a, Tensor::from_vec(g.rows(), g.cols(), data.collect())?);
                }
                Op::Transpose(a) => acc(&mut grads, *a, g.transpose()),
                Op::SoftmaxCols(a) => {
                    let y = self.nodes[idx].value.as_ref().expect("softmax value");
                    let (r, c) = y.shape();
                    let mut gx = Tensor::zeros(r, c);
                    for j in 0..c {
                        let dot: f64 = (0..r).map(|i| g[(i, j)] * y[(i, j)]).sum();
                        for i in 0..r {
                            gx[(i, j)] = y[(i, j)] * (g[(i, j)] - dot);
                        }
                    }
                    acc(&mut grads, *a, gx);
                }
                Op::LayerNormCols { x, gain, bias, xhat, inv_std } => {
                    let gv = self.value(*gain);
                    let (d, q) = xhat.shape();
                    let mut gx = Tensor::zeros(d, q);
                    let mut ggain = vec![0.0; d];
                    let mut gbias = vec![0.0; d];
                    for j in 0..q {
                        let mut s1 = 0.0;
                        let mut s2 = 0.0;
                        for i in 0..d {
                            let dh = g[(i, j)] * gv[(i, 0)];
                            s1 += dh;
                            s2 += dh * xhat[(i, j)];
                            ggain[i] += g[(i, j)] * xhat[(i, j)];
                            gbias[i] += g[(i, j)];
                        }
                        let k = inv_std[j] / d as f64;
                        for i in 0..d {
                            let dh = g[(i, j)] * gv[(i, 0)];
                            gx[(i, j)] = k * (d as f64 * dh - s1 - xhat[(i, j)] * s2);
                        }
                    }
                    acc(&mut grads, *gain, Tensor::column_vector(&ggain));
                    acc(&mut grads, *bias, Tensor::column_vector(&gbias));
                    acc(&mut grads, *x, gx);
                }
                Op::MulConst(a, mask) => {
                    let data = g.as_slice().iter().zip(mask.as_slice()).map(|(g, m)| g * m).collect();
                    acc(&mut grads, *a, Tensor::from_vec(g.rows(), g.cols(), data)?);
                }
                Op::SliceRows(a, start) => {
                    let (r, c) = self.value(*a).shape();
                    let mut ga = Tensor::zeros(r, c);
                    for i in 0..g.rows() {
                        ga.row_mut(start + i).copy_from_slice(g.row(i));
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let r = self.value(*p).rows();
                        acc(&mut grads, *p, g.slice_rows(off, r));
                        off += r;
                    }
                }
                Op::SliceCols(a, start) => {
                    let (r, c) = self.value(*a).shape();
                    let mut ga = Tensor::zeros(r, c);
                    for i in 0..r {
                        ga.row_mut(i)[*start..start + g.cols()].copy_from_slice(g.row(i));
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let c = self.value(*p).cols();
                        acc(&mut grads, *p, g.slice_cols(off, c));
                        off += c;
                    }
                }
                Op::GatherCols(table, indices) => {
                    let (r, c) = self.value(*table).shape();
                    let mut gt = Tensor::zeros(r, c);
                    for (j, &k) in indices.iter().enumerate() {
                        for i in 0..r {
                            gt[(i, k)] += g[(i, j)];
                        }
                    }
                    acc(&mut grads, *table, gt);
                }
                Op::CircularUnfold(x, kernel) => {
                    let (m, q) = self.value(*x).shape();
                    let half = kernel / 2;
                    let mut gx = Tensor::zeros(m, q);
                    for s in 0..*kernel {
                        for t in 0..q {
                            let src = (t + s + q * kernel - half) % q;
                            for i in 0..m {
                                gx[(i, src)] += g[(s * m + i, t)];
                            }
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::L1Loss(pred, target) => {
                    let p = self.value(*pred);
                    let n = p.len() as f64;
                    let up = g[(0, 0)];
                    let data = p.as_slice().iter().zip(target.as_slice()).map(|(a, b)| up * sign(a - b) / n);
                    acc(&mut grads, *pred, Tensor::from_vec(p.rows(), p.cols(), data.collect())?);
                }
                Op::L2Loss(pred, target) => {
                    let p = self.value(*pred);
                    let n = p.len() as f64;
                    let up = g[(0, 0)];
                    let data = p.as_slice().iter().zip(target.as_slice()).map(|(a, b)| up * 2.0 * (a - b) / n);
                    acc(&mut grads, *pred, Tensor::from_vec(p.rows(), p.cols(), data.collect())?);
                }
                Op::Focal { logits, class, coef, probs } => {
                    let up = g[(0, 0)];
                    let gz: Vec<f64> = probs
                        .iter()
                        .enumerate()
                        .map(|(k, pk)| up * coef * (if k == *class { 1.0 } else { 0.0 } - pk))
                        .collect();
                    acc(&mut grads, *logits, Tensor::column_vector(&gz));
                }
                Op::WeightedSum(a, w) => acc(&mut grads, *a, w.map(|x| x * g[(0, 0)])),
            }
        }
        Ok(out)
    }
}

fn acc(grads: &mut [Option<Tensor>], id: NodeId, g: Tensor) {
    match &mut grads[id.0] {
        Some(t) => t.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn pow_nonneg(base: f64, exp: f64) -> f64 {
    if exp == 0.0 {
        1.0
    } else {
        libm::pow(base.max(0.0), exp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::gradcheck::check_grads;
    use crate::neural::params::ParamStore;
    use crate::rng::seeded;

    fn random(rows: usize, cols: usize, seed: u64) -> Tensor {
        let mut r = seeded(seed);
        Tensor::from_fn(rows, cols, |_, _| rng::standard_normal(&mut r))
    }

    #[test]
    fn non_scalar_loss_is_rejected() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let a = g.constant(Tensor::zeros(2, 2));
        assert_eq!(g.backward(a).unwrap_err(), Error::NonScalarLoss { rows: 2, cols: 2 });
    }

    #[test]
    fn matmul_bias_relu_gradients() {
        let mut store = ParamStore::new();
        let w = store.add("w", random(3, 4, 1));
        let b = store.add("b", random(3, 1, 2));
        let x = random(4, 5, 3);
        let probe = random(3, 5, 4);
        check_grads(&mut store, |g| {
            let xn = g.constant(x.clone());
            let wn = g.param(w);
            let bn = g.param(b);
            let z = g.matmul(wn, xn).unwrap();
            let z = g.add_col_bias(z, bn).unwrap();
            let z = g.relu(z);
            g.weighted_sum(z, &probe).unwrap()
        });
    }

    #[test]
    fn softmax_gradients_plain_and_causal() {
        for causal in [false, true] {
            let mut store = ParamStore::new();
            let a = store.add("a", random(4, 4, 5));
            let probe = random(4, 4, 6);
            check_grads(&mut store, |g| {
                let an = g.param(a);
                let s = g.softmax_cols(an, causal);
                g.weighted_sum(s, &probe).unwrap()
            });
        }
    }

    #[test]
    fn causal_softmax_masks_future_rows() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let a = g.constant(random(3, 3, 7));
        let s = g.softmax_cols(a, true);
        let v = g.value(s);
        assert_eq!(v[(0, 0)], 1.0);
        assert_eq!(v[(1, 0)], 0.0);
        assert_eq!(v[(2, 1)], 0.0);
        for j in 0..3 {
            let col: f64 = (0..3).map(|i| v[(i, j)]).sum();
            assert!((col - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn layer_norm_gradients() {
        let mut store = ParamStore::new();
        let x = store.add("x", random(5, 3, 8));
        let gain = store.add("g", random(5, 1, 9));
        let bias = store.add("b", random(5, 1, 10));
        let probe = random(5, 3, 11);
        check_grads(&mut store, |g| {
            let (xn, gn, bn) = (g.param(x), g.param(gain), g.param(bias));
            let y = g.layer_norm_cols(xn, gn, bn).unwrap();
            g.weighted_sum(y, &probe).unwrap()
        });
    }

    #[test]
    fn layer_norm_output_is_standardised() {
        let mut store = ParamStore::new();
        let gain = store.add("g", Tensor::filled(6, 1, 1.0));
        let bias = store.add("b", Tensor::zeros(6, 1));
        let mut g = Graph::new(&store);
        let x = g.constant(random(6, 4, 12));
        let (gn, bn) = (g.param(gain), g.param(bias));
        let y = g.layer_norm_cols(x, gn, bn).unwrap();
        for j in 0..4 {
            let col = g.value(y).column(j);
            let mean = col.iter().sum::<f64>() / 6.0;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 6.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-4);
        }
    }

    #[test]
    fn structural_op_gradients() {
        let mut store = ParamStore::new();
        let a = store.add("a", random(3, 4, 13));
        let b = store.add("b", random(2, 4, 14));
        let table = store.add("t", random(3, 5, 15));
        let probe = random(4, 5, 16);
        check_grads(&mut store, |g| {
            let (an, bn, tn) = (g.param(a), g.param(b), g.param(table));
            let rows = g.concat_rows(&[an, bn]).unwrap();
            let top = g.slice_rows(rows, 1, 3);
            let e = g.gather_cols(tn, &[0, 4, 4, 2]).unwrap();
            let e = g.add(e, top).unwrap();
            let e = g.scale(e, 0.7);
            let t = g.transpose(e);
            let left = g.slice_cols(t, 0, 2);
            let wide = g.concat_cols(&[t, left]).unwrap();
            g.weighted_sum(wide, &probe).unwrap()
        });
    }

    #[test]
    fn circular_unfold_matches_direct_convolution() {
        let store = ParamStore::new();
        let x = random(2, 5, 17);
        let w = random(3, 6, 18);
        let mut g = Graph::new(&store);
        let xn = g.constant(x.clone());
        let wn = g.constant(w.clone());
        let u = g.circular_unfold(xn, 3);
        let y = g.matmul(wn, u).unwrap();
        for o in 0..3 {
            for t in 0..5 {
                let mut expect = 0.0;
                for s in 0..3usize {
                    let src = (t + 5 + s - 1) % 5;
                    for i in 0..2 {
                        expect += w[(o, s * 2 + i)] * x[(i, src)];
                    }
                }
                assert!((g.value(y)[(o, t)] - expect).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_and_regression_loss_gradients() {
        let mut store = ParamStore::new();
        let x = store.add("x", random(2, 6, 19));
        let w = store.add("w", random(4, 6, 20));
        let target = random(4, 6, 21);
        for l1 in [false, true] {
            check_grads(&mut store, |g| {
                let (xn, wn) = (g.param(x), g.param(w));
                let u = g.circular_unfold(xn, 3);
                let y = g.matmul(wn, u).unwrap();
                if l1 {
                    g.l1_loss(y, &target).unwrap()
                } else {
                    g.l2_loss(y, &target).unwrap()
                }
            });
        }
    }

    #[test]
    fn focal_loss_gradients_for_several_gammas() {
        for gamma in [0.0, 0.5, 1.0, 2.0, 3.5] {
            let mut store = ParamStore::new();
            let z = store.add("z", random(5, 1, 22));
            check_grads(&mut store, |g| {
                let zn = g.param(z);
                g.focal_loss(zn, 3, gamma, 1.3).unwrap()
            });
        }
    }

    #[test]
    fn focal_with_zero_gamma_is_weighted_cross_entropy() {
        let store = ParamStore::new();
        let z = random(4, 1, 23);
        let mut g = Graph::new(&store);
        let zn = g.constant(z.clone());
        let l = g.focal_loss(zn, 1, 0.0, 2.0).unwrap();
        let lse = libm::log(z.as_slice().iter().map(|v| libm::exp(*v)).sum::<f64>());
        assert!((g.value(l)[(0, 0)] - 2.0 * (lse - z[(1, 0)])).abs() < 1e-12);
    }

    #[test]
    fn dropout_is_identity_at_inference_and_unbiased_in_training() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let a = g.constant(Tensor::filled(10, 10, 1.0));
        assert_eq!(g.dropout(a, 0.5), a);

        let mut g = Graph::training(&store, 3);
        let a = g.constant(Tensor::filled(100, 100, 1.0));
        let d = g.dropout(a, 0.25);
        let v = g.value(d);
        let mean = v.as_slice().iter().sum::<f64>() / v.len() as f64;
        assert!((mean - 1.0).abs() < 0.03);
        assert!(v.as_slice().iter().all(|x| *x == 0.0 || (*x - 1.0 / 0.75).abs() < 1e-12));
    }

    #[test]
    fn gather_rejects_unknown_column() {
        let store = ParamStore::new();
        let mut g = Graph::new(&store);
        let t = g.constant(Tensor::zeros(2, 3));
        assert_eq!(g.gather_cols(t, &[0, 3]).unwrap_err(), Error::UnknownState { state: 3, n_states: 3 });
    }

    #[test]
    fn shared_parameter_gradients_accumulate() {
        let mut store = ParamStore::new();
        let w = store.add("w", random(3, 3, 24));
        let probe = random(3, 3, 25);
        check_grads(&mut store, |g| {
            let a = g.param(w);
            let b = g.param(w);
            let p = g.matmul(a, b).unwrap();
            let p = g.matmul(p, a).unwrap();
            g.weighted_sum(p, &probe).unwrap()
        });
    }
}
