//! Encoder-decoder model mapping a window of values, Markov states and stamps
//! to the next `q_out` values. The decoder sees the last `q_dec_in` encoder
//! columns followed by a zero placeholder, together with the known future
//! states and stamps.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::embed::{sum_nodes, CalendarScaler, StateEmbedding, TimeEmbedding, ValueEmbedding, VALUE_KERNEL};
use crate::neural::layers::{BlockConfig, DecoderBlock, EncoderBlock, Linear};
use crate::neural::train::{train, TrainConfig, TrainReport, Trainable};
use crate::neural::{Graph, NodeId, ParamStore};
use crate::rng::{seeded, Rng};
use crate::series::{HyperParams, TimeStampVector, WindowPair};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenFormerConfig {
    /// Number of locations (rows of the value matrix).
    pub m: usize,
    pub n_states: usize,
    pub q_enc_in: usize,
    pub q_dec_in: usize,
    pub q_out: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub n_head: usize,
    pub n_enc: usize,
    pub n_dec: usize,
    pub dropout: f64,
    pub kernel: usize,
    pub calendar: Option<CalendarScaler>,
}

impl GenFormerConfig {
    pub fn from_hyperparams(hp: &HyperParams, m: usize, n_states: usize, calendar: Option<CalendarScaler>) -> Self {
        Self {
            m,
            n_states,
            q_enc_in: hp.q_enc_in,
            q_dec_in: hp.q_dec_in,
            q_out: hp.q_out,
            d_model: hp.d_model,
            d_ff: hp.d_ff,
            n_head: hp.n_head,
            n_enc: hp.n_enc,
            n_dec: hp.n_dec,
            dropout: hp.dropout_rate,
            kernel: VALUE_KERNEL,
            calendar,
        }
    }

    fn validate(&self) -> Result<()> {
        let sizes = [self.m, self.n_states, self.q_enc_in, self.q_out, self.d_model, self.d_ff, self.n_enc, self.n_dec, self.kernel];
        if sizes.contains(&0) {
            return Err(Error::InvalidParameter("model sizes must be positive".into()));
        }
        if self.q_dec_in > self.q_enc_in {
            return Err(Error::InvalidParameter(format!("q_dec_in {} exceeds q_enc_in {}", self.q_dec_in, self.q_enc_in)));
        }
        Ok(())
    }
}

/// Value, Markov-state and time embeddings of one stream (encoder or decoder).
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub value: ValueEmbedding,
    pub state: StateEmbedding,
    pub time: TimeEmbedding,
    d_model: usize,
}

impl Embedding {
    fn new(store: &mut ParamStore, name: &str, cfg: &GenFormerConfig, rng: &mut Rng) -> Self {
        let d = cfg.d_model;
        let value = ValueEmbedding::new(store, &format!("{name}.value"), cfg.m, d, cfg.kernel, rng);
        let state = StateEmbedding::new(store, &format!("{name}.state"), d, cfg.n_states, rng);
        let time = match cfg.calendar {
            Some(s) => TimeEmbedding::calendar(store, &format!("{name}.time"), d, s, rng),
            None => TimeEmbedding::Positional,
        };
        Self { value, state, time, d_model: d }
    }

    /// `d_model × q` sum of the three embeddings.
    pub fn forward(&self, g: &mut Graph, x: NodeId, y: &[usize], t: &TimeStampVector) -> Result<NodeId> {
        let q = g.value(x).cols();
        if y.len() != q || t.len() != q {
            return Err(Error::shape(format!("{q} value columns, {} states, {} stamps", y.len(), t.len())));
        }
        let v = self.value.forward(g, x)?;
        let s = self.state.forward(g, y)?;
        let e = self.time.forward(g, t, self.d_model)?;
        sum_nodes(g, &[v, s, e])
    }
}

#[derive(Debug, Clone)]
pub struct GenFormerModel {
    pub config: GenFormerConfig,
    pub store: ParamStore,
    pub enc_embed: Embedding,
    pub dec_embed: Embedding,
    encoders: Vec<EncoderBlock>,
    decoders: Vec<DecoderBlock>,
    pub head: Linear,
}

impl GenFormerModel {
    pub fn new(config: GenFormerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded(seed);
        let mut store = ParamStore::new();
        let enc_embed = Embedding::new(&mut store, "enc_embed", &config, &mut rng);
        let dec_embed = Embedding::new(&mut store, "dec_embed", &config, &mut rng);
        let block = BlockConfig { d_model: config.d_model, d_ff: config.d_ff, n_head: config.n_head, dropout: config.dropout };
        let encoders = (0..config.n_enc)
            .map(|i| EncoderBlock::new(&mut store, &format!("encoder{i}"), block, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let decoders = (0..config.n_dec)
            .map(|i| DecoderBlock::new(&mut store, &format!("decoder{i}"), block, true, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let head = Linear::new(&mut store, "head", config.d_model, config.m, true, &mut rng);
        Ok(Self { config, store, enc_embed, dec_embed, encoders, decoders, head })
    }

    /// `m × q_out` prediction node for one window. `enc_*` cover `q_enc_in`
    /// columns; `out_y`/`out_t` are the states and stamps of the predicted block.
    pub fn forward(
        &self,
        g: &mut Graph,
        enc_x: &Tensor,
        enc_y: &[usize],
        enc_t: &TimeStampVector,
        out_y: &[usize],
        out_t: &TimeStampVector,
    ) -> Result<NodeId> {
        let c = &self.config;
        if enc_x.shape() != (c.m, c.q_enc_in) || enc_y.len() != c.q_enc_in || enc_t.len() != c.q_enc_in {
            return Err(Error::shape(format!(
                "encoder input must be {}×{} with matching states and stamps, got {:?}",
                c.m,
                c.q_enc_in,
                enc_x.shape()
            )));
        }
        if out_y.len() != c.q_out || out_t.len() != c.q_out {
            return Err(Error::shape(format!("output block needs {} states and stamps", c.q_out)));
        }
        let x = g.constant(enc_x.clone());
        let mut mem = self.enc_embed.forward(g, x, enc_y, enc_t)?;
        for b in &self.encoders {
            mem = b.forward(g, mem)?;
        }

        let start = c.q_enc_in - c.q_dec_in;
        let dec_x = Tensor::concat_cols(&[&enc_x.slice_cols(start, c.q_dec_in), &Tensor::zeros(c.m, c.q_out)])?;
        let mut dec_y = enc_y[start..].to_vec();
        dec_y.extend_from_slice(out_y);
        let dec_t = enc_t.slice(start..c.q_enc_in).concat(out_t)?;
        let x = g.constant(dec_x);
        let mut z = self.dec_embed.forward(g, x, &dec_y, &dec_t)?;
        for b in &self.decoders {
            z = b.forward(g, z, Some(mem))?;
        }
        let z = g.slice_cols(z, c.q_dec_in, c.q_out);
        self.head.forward(g, z)
    }

    pub fn forward_window(&self, g: &mut Graph, w: &WindowPair) -> Result<NodeId> {
        self.forward(g, &w.enc_x, &w.enc_y, &w.enc_t, &w.out_y, &w.out_t)
    }

    /// Single-step prediction with dropout off.
    pub fn predict(&self, w: &WindowPair) -> Result<Tensor> {
        let mut g = Graph::new(&self.store);
        let p = self.forward_window(&mut g, w)?;
        Ok(g.value(p).clone())
    }

    pub fn fit(&mut self, train_set: &[WindowPair], val_set: &[WindowPair], cfg: &TrainConfig) -> Result<TrainReport> {
        train(self, train_set, val_set, cfg)
    }

    /// Generates `future_y.len()` columns after the observed block by
    /// repeatedly predicting `q_out` columns and sliding the encoder window
    /// over observed and predicted values. A final partial block is predicted
    /// in full and truncated.
    pub fn infer_autoregressive(
        &self,
        init_x: &Tensor,
        init_y: &[usize],
        init_t: &TimeStampVector,
        future_y: &[usize],
        future_t: &TimeStampVector,
    ) -> Result<Tensor> {
        let c = &self.config;
        let n_future = future_y.len();
        if future_t.len() != n_future {
            return Err(Error::shape(format!("{n_future} future states but {} stamps", future_t.len())));
        }
        if init_x.shape() != (c.m, c.q_enc_in) || init_y.len() != c.q_enc_in || init_t.len() != c.q_enc_in {
            return Err(Error::shape(format!("initial block must be {}×{}", c.m, c.q_enc_in)));
        }
        let iters = autoregressive_iterations(n_future, c.q_out);
        let padded = iters * c.q_out;
        let mut ys = init_y.to_vec();
        ys.extend_from_slice(future_y);
        let mut ts = init_t.concat(future_t)?;
        if padded > n_future {
            let fill = ys.last().copied().unwrap_or(0);
            ys.resize(c.q_enc_in + padded, fill);
            ts = ts.concat(&ts.continuation(padded - n_future))?;
        }
        let mut xs = Tensor::concat_cols(&[init_x, &Tensor::zeros(c.m, padded)])?;
        for l in 0..iters {
            let s = l * c.q_out;
            let o = s + c.q_enc_in;
            let mut g = Graph::new(&self.store);
            let p = self.forward(
                &mut g,
                &xs.slice_cols(s, c.q_enc_in),
                &ys[s..o],
                &ts.slice(s..o),
                &ys[o..o + c.q_out],
                &ts.slice(o..o + c.q_out),
            )?;
            let pred = g.value(p);
            for j in 0..c.q_out {
                xs.set_column(o + j, &pred.column(j));
            }
        }
        Ok(xs.slice_cols(c.q_enc_in, n_future))
    }
}

/// Forward calls needed to cover `n_future` columns.
pub fn autoregressive_iterations(n_future: usize, q_out: usize) -> usize {
    n_future.div_ceil(q_out)
}

impl Trainable for GenFormerModel {
    type Sample = WindowPair;

    fn store(&self) -> &ParamStore {
        &self.store
    }

    fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn loss(&self, g: &mut Graph, w: &WindowPair) -> Result<NodeId> {
        let p = self.forward_window(g, w)?;
        g.l1_loss(p, &w.target_x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::gradcheck::check_grads;
    use crate::neural::{AdamConfig, LrSchedule};
    use crate::rng::standard_normal;
    use crate::series::{build_windows_with, CalendarStamp, MarkovStateSequence, Space, TimeSeriesMatrix};
    use alloc::vec;

    fn tiny(m: usize) -> GenFormerConfig {
        GenFormerConfig {
            m,
            n_states: 4,
            q_enc_in: 6,
            q_dec_in: 3,
            q_out: 3,
            d_model: 8,
            d_ff: 16,
            n_head: 2,
            n_enc: 1,
            n_dec: 1,
            dropout: 0.0,
            kernel: VALUE_KERNEL,
            calendar: None,
        }
    }

    fn random_windows(cfg: &GenFormerConfig, n: usize, seed: u64) -> Vec<WindowPair> {
        let mut rng = seeded(seed);
        let len = n + cfg.q_enc_in + cfg.q_out - 1;
        let data = Tensor::from_fn(cfg.m, len, |i, j| libm::sin(0.4 * j as f64 + i as f64) + 0.3 * standard_normal(&mut rng));
        let states: Vec<usize> = (0..len).map(|j| (j / 2) % cfg.n_states).collect();
        let series = TimeSeriesMatrix::regular(data, Space::Gaussian, 1.0).unwrap();
        build_windows_with(&series, &MarkovStateSequence::new(states, cfg.n_states).unwrap(), cfg.q_enc_in, cfg.q_out).unwrap()
    }

    #[test]
    fn gradients_match_finite_differences() {
        let cfg = tiny(2);
        let w = random_windows(&cfg, 1, 3).remove(0);
        let mut m = GenFormerModel::new(cfg, 5).unwrap();
        let model = m.clone();
        let worst = check_grads(&mut m.store, |g| {
            // L2 keeps the loss smooth at the finite-difference points
            let p = model.forward_window(g, &w).unwrap();
            g.l2_loss(p, &w.target_x).unwrap()
        });
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn l1_training_loss_has_correct_gradients() {
        let cfg = tiny(2);
        let mut w = random_windows(&cfg, 1, 4).remove(0);
        // keep every residual well away from the kink at zero
        w.target_x = Tensor::filled(2, 3, 50.0);
        let mut m = GenFormerModel::new(cfg, 6).unwrap();
        let model = m.clone();
        let worst = check_grads(&mut m.store, |g| model.loss(g, &w).unwrap());
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn zero_head_predicts_its_bias() {
        let cfg = tiny(3);
        let w = random_windows(&cfg, 1, 1).remove(0);
        let mut m = GenFormerModel::new(cfg, 2).unwrap();
        *m.store.value_mut(m.head.weight) = Tensor::zeros(3, 8);
        *m.store.value_mut(m.head.bias.unwrap()) = Tensor::column_vector(&[1.5, -2.0, 0.25]);
        let p = m.predict(&w).unwrap();
        assert_eq!(p.shape(), (3, 3));
        for j in 0..3 {
            assert_eq!(p.column(j), vec![1.5, -2.0, 0.25]);
        }
    }

    #[test]
    fn output_shape_at_reference_window_sizes() {
        let cfg = GenFormerConfig { q_enc_in: 40, q_dec_in: 20, q_out: 20, ..tiny(3) };
        let w = random_windows(&cfg, 1, 7).remove(0);
        let m = GenFormerModel::new(cfg, 1).unwrap();
        assert_eq!(m.predict(&w).unwrap().shape(), (3, 20));
    }

    #[test]
    fn states_reach_the_decoder_but_targets_do_not() {
        let cfg = tiny(2);
        let w = random_windows(&cfg, 1, 8).remove(0);
        let m = GenFormerModel::new(cfg, 3).unwrap();
        let base = m.predict(&w).unwrap();
        let mut w2 = w.clone();
        w2.out_y = vec![3, 3, 3];
        assert!(m.predict(&w2).unwrap().max_abs_diff(&base) > 1e-6);
        let mut w3 = w.clone();
        w3.target_x = Tensor::filled(2, 3, 1e6);
        assert_eq!(m.predict(&w3).unwrap(), base);
        let mut w4 = w;
        w4.enc_y[0] = 3;
        assert!(m.predict(&w4).unwrap().max_abs_diff(&base) > 1e-9);
    }

    #[test]
    fn embedding_is_additive() {
        let stamp = CalendarStamp::new(2000, 1, 1, 0).unwrap();
        let cfg = GenFormerConfig { calendar: Some(CalendarScaler::fit(&[stamp])), ..tiny(2) };
        let mut m = GenFormerModel::new(cfg, 4).unwrap();
        let TimeEmbedding::Calendar { weight, .. } = m.enc_embed.time else { panic!() };
        *m.store.value_mut(weight) = Tensor::zeros(8, 4);
        *m.store.value_mut(m.enc_embed.value.weight) = Tensor::zeros(8, 6);
        let stamps = TimeStampVector::hourly(stamp, 5);
        let y = [2, 0, 1, 3, 2];
        let mut g = Graph::new(&m.store);
        let x = g.constant(Tensor::filled(2, 5, 0.7));
        let e = m.enc_embed.forward(&mut g, x, &y, &stamps).unwrap();
        let table = m.store.value(m.enc_embed.state.table);
        for (j, &s) in y.iter().enumerate() {
            assert_eq!(g.value(e).column(j), table.column(s));
        }
    }

    #[test]
    fn embedding_width_follows_the_window() {
        let cfg = GenFormerConfig { m: 3, ..tiny(3) };
        let m = GenFormerModel::new(cfg, 4).unwrap();
        let mut g = Graph::new(&m.store);
        let x = g.constant(Tensor::filled(3, 40, 0.1));
        let e = m.enc_embed.forward(&mut g, x, &[1; 40], &TimeStampVector::regular(0.0, 1.0, 40)).unwrap();
        assert_eq!(g.value(e).shape(), (8, 40));
    }

    #[test]
    fn kernel_one_embedding_commutes_with_column_swaps() {
        // a one-year scaler maps every year to 0, so these stamps embed identically
        let cfg = GenFormerConfig { kernel: 1, calendar: Some(CalendarScaler { year_min: 2001, year_max: 2001 }), ..tiny(2) };
        let m = GenFormerModel::new(cfg, 9).unwrap();
        let stamps = (0..4).map(|k| CalendarStamp::new(2001 + k, 1, 4, 5).unwrap()).collect();
        let stamps = TimeStampVector::calendar(stamps).unwrap();
        let x = Tensor::from_rows(&[[0.1, 0.5, 0.1, -0.3], [1.0, 2.0, 1.0, 0.0]]).unwrap();
        let xs = Tensor::from_rows(&[[0.1, 0.1, 0.5, -0.3], [1.0, 1.0, 2.0, 0.0]]).unwrap();
        let mut g = Graph::new(&m.store);
        let a = g.constant(x);
        let b = g.constant(xs);
        let ea = m.enc_embed.forward(&mut g, a, &[1, 2, 1, 0], &stamps).unwrap();
        let eb = m.enc_embed.forward(&mut g, b, &[1, 1, 2, 0], &stamps).unwrap();
        let (ea, eb) = (g.value(ea), g.value(eb));
        for (i, j) in [(0, 0), (1, 2), (2, 1), (3, 3)] {
            assert_eq!(ea.column(i), eb.column(j));
        }
    }

    #[test]
    fn overfits_eight_windows() {
        let cfg = GenFormerConfig { d_model: 16, d_ff: 32, ..tiny(2) };
        let windows = random_windows(&cfg, 8, 10);
        let mut m = GenFormerModel::new(cfg, 11).unwrap();
        let tc = TrainConfig {
            schedule: LrSchedule::constant(1e-2),
            max_epochs: 500,
            batch_size: 8,
            patience: 500,
            seed: 1,
            max_steps: Some(500),
            adam: AdamConfig::default(),
        };
        let r = m.fit(&windows, &[], &tc).unwrap();
        assert!(r.steps <= 500);
        assert!(r.best_val_loss < 0.05, "{}", r.best_val_loss);
    }

    #[test]
    fn iteration_counts() {
        assert_eq!(autoregressive_iterations(160, 20), 8);
        assert_eq!(autoregressive_iterations(26 * 24, 48), 13);
        assert_eq!(autoregressive_iterations(21, 20), 2);
    }

    #[test]
    fn single_block_inference_equals_forward() {
        let cfg = tiny(2);
        let w = random_windows(&cfg, 1, 12).remove(0);
        let m = GenFormerModel::new(cfg, 13).unwrap();
        let p = m.infer_autoregressive(&w.enc_x, &w.enc_y, &w.enc_t, &w.out_y, &w.out_t).unwrap();
        assert_eq!(p, m.predict(&w).unwrap());
    }

    #[test]
    fn autoregression_feeds_predictions_back() {
        let cfg = tiny(2);
        let first = random_windows(&cfg, 1, 14).remove(0);
        let m = GenFormerModel::new(cfg.clone(), 15).unwrap();
        let future_y: Vec<usize> = (0..7).map(|j| j % 4).collect();
        let future_t = first.enc_t.continuation(7);
        let out = m.infer_autoregressive(&first.enc_x, &first.enc_y, &first.enc_t, &future_y, &future_t).unwrap();
        assert_eq!(out.shape(), (2, 7));

        // second block by hand: encoder window = last 3 observed + first prediction block
        let p1 = out.slice_cols(0, 3);
        let enc_x = Tensor::concat_cols(&[&first.enc_x.slice_cols(3, 3), &p1]).unwrap();
        let mut enc_y = first.enc_y[3..].to_vec();
        enc_y.extend_from_slice(&future_y[..3]);
        let enc_t = first.enc_t.slice(3..6).concat(&future_t.slice(0..3)).unwrap();
        let mut g = Graph::new(&m.store);
        let p2 = m.forward(&mut g, &enc_x, &enc_y, &enc_t, &future_y[3..6], &future_t.slice(3..6)).unwrap();
        assert_eq!(g.value(p2), &out.slice_cols(3, 3));

        let again = m.infer_autoregressive(&first.enc_x, &first.enc_y, &first.enc_t, &future_y, &future_t).unwrap();
        assert_eq!(again, out);
    }

    #[test]
    fn shape_errors() {
        let cfg = tiny(2);
        let w = random_windows(&cfg, 1, 16).remove(0);
        let m = GenFormerModel::new(cfg, 17).unwrap();
        let mut g = Graph::new(&m.store);
        assert!(matches!(
            m.forward(&mut g, &Tensor::zeros(2, 5), &w.enc_y, &w.enc_t, &w.out_y, &w.out_t),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(matches!(
            m.infer_autoregressive(&w.enc_x, &w.enc_y, &w.enc_t, &[0, 1], &w.out_t),
            Err(Error::ShapeMismatch(_))
        ));
        assert!(GenFormerModel::new(GenFormerConfig { q_dec_in: 7, ..tiny(2) }, 0).is_err());
    }
}
