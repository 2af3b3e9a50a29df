//! First-order transition estimation, order selection by information
//! criteria, and chain simulation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, seeded};
use crate::series::MarkovStateSequence;
use crate::tensor::Tensor;

/// Largest dense count table `select_order` will allocate.
pub const MAX_COUNT_CELLS: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    pub n_states: usize,
    /// Row-stochastic, `probs[(a, b)] = P(b | a)`.
    pub probs: Tensor,
    /// Raw counts, row-major `n_states × n_states`.
    pub counts: Vec<u64>,
}

fn common_n_states(seqs: &[MarkovStateSequence]) -> Result<usize> {
    let n = seqs.first().ok_or(Error::EmptyInput)?.n_states();
    if seqs.iter().any(|s| s.n_states() != n) {
        return Err(Error::shape("sequences over different state spaces"));
    }
    Ok(n)
}

/// Normalised frequency of each state over all sequences.
pub fn state_frequencies(seqs: &[MarkovStateSequence]) -> Result<Vec<f64>> {
    let n = common_n_states(seqs)?;
    let mut counts = vec![0u64; n];
    for s in seqs {
        for &y in s.states() {
            counts[y] += 1;
        }
    }
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::EmptyInput);
    }
    Ok(counts.iter().map(|c| *c as f64 / total as f64).collect())
}

impl TransitionMatrix {
    /// Maximum-likelihood estimate; rows never left fall back to the
    /// empirical state frequencies.
    pub fn estimate(seqs: &[MarkovStateSequence]) -> Result<Self> {
        let n = common_n_states(seqs)?;
        let mut counts = vec![0u64; n * n];
        for s in seqs {
            for w in s.states().windows(2) {
                counts[w[0] * n + w[1]] += 1;
            }
        }
        if counts.iter().all(|c| *c == 0) {
            return Err(Error::NoTransitions);
        }
        let stationary = state_frequencies(seqs)?;
        let mut probs = Tensor::zeros(n, n);
        for a in 0..n {
            let row = &counts[a * n..(a + 1) * n];
            let total: u64 = row.iter().sum();
            if total == 0 {
                probs.row_mut(a).copy_from_slice(&stationary);
            } else {
                for b in 0..n {
                    probs[(a, b)] = row[b] as f64 / total as f64;
                }
            }
        }
        Ok(Self { n_states: n, probs, counts })
    }

    pub fn from_probs(probs: Tensor) -> Result<Self> {
        let n = probs.rows();
        if probs.cols() != n || n == 0 {
            return Err(Error::shape("transition matrix must be square"));
        }
        for a in 0..n {
            let s: f64 = probs.row(a).iter().sum();
            if (s - 1.0).abs() > 1e-9 || probs.row(a).iter().any(|p| *p < 0.0) {
                return Err(Error::InvalidParameter(format!("row {a} is not a distribution")));
            }
        }
        Ok(Self { n_states: n, probs, counts: vec![0; n * n] })
    }

    /// `n_steps` states following `init`, sampled sequentially.
    pub fn simulate(&self, init: usize, n_steps: usize, seed: u64) -> Result<MarkovStateSequence> {
        if init >= self.n_states {
            return Err(Error::InvalidState { state: init, n_states: self.n_states });
        }
        let mut rng = seeded(seed);
        let mut out = Vec::with_capacity(n_steps);
        let mut cur = init;
        for _ in 0..n_steps {
            cur = rng::categorical(&mut rng, self.probs.row(cur));
            out.push(cur);
        }
        MarkovStateSequence::new(out, self.n_states)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Criterion {
    Aic,
    Bic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderScore {
    pub order: usize,
    pub log_likelihood: f64,
    pub n_params: f64,
    pub aic: f64,
    pub bic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSelection {
    pub candidates: Vec<OrderScore>,
    pub chosen: usize,
    pub criterion: Criterion,
    pub n_transitions: u64,
}

/// Scores orders `1..=p_max` on the common set of positions `t ≥ p_max` so
/// that every order is fitted to the same targets.
pub fn select_order(seqs: &[MarkovStateSequence], p_max: usize, criterion: Criterion) -> Result<OrderSelection> {
    if p_max == 0 {
        return Err(Error::InvalidParameter("p_max must be at least 1".into()));
    }
    let n = common_n_states(seqs)?;
    let cells = (n as u128).checked_pow(p_max as u32 + 1).unwrap_or(u128::MAX);
    if cells > MAX_COUNT_CELLS {
        return Err(Error::StateSpaceTooLarge { cells });
    }
    let n_transitions: u64 = seqs.iter().map(|s| s.len().saturating_sub(p_max) as u64).sum();
    if n_transitions == 0 {
        return Err(Error::NoTransitions);
    }
    let mut candidates = Vec::with_capacity(p_max);
    for p in 1..=p_max {
        let contexts = n.pow(p as u32);
        let mut table = vec![0u64; contexts * n];
        for s in seqs {
            let y = s.states();
            for t in p_max..y.len() {
                let mut ctx = 0usize;
                for lag in 1..=p {
                    ctx = ctx * n + y[t - lag];
                }
                table[ctx * n + y[t]] += 1;
            }
        }
        let mut ll = 0.0;
        for ctx in 0..contexts {
            let row = &table[ctx * n..(ctx + 1) * n];
            let total: u64 = row.iter().sum();
            for &c in row.iter().filter(|c| **c > 0) {
                ll += c as f64 * libm::log(c as f64 / total as f64);
            }
        }
        let k = contexts as f64 * (n as f64 - 1.0);
        candidates.push(OrderScore {
            order: p,
            log_likelihood: ll,
            n_params: k,
            aic: -2.0 * ll + 2.0 * k,
            bic: -2.0 * ll + k * libm::log(n_transitions as f64),
        });
    }
    let score = |c: &OrderScore| match criterion {
        Criterion::Aic => c.aic,
        Criterion::Bic => c.bic,
    };
    let chosen = candidates.iter().fold(&candidates[0], |best, c| if score(c) < score(best) { c } else { best }).order;
    Ok(OrderSelection { candidates, chosen, criterion, n_transitions })
}

/// Largest total-variation distance between corresponding rows.
pub fn max_row_tv(a: &TransitionMatrix, b: &TransitionMatrix) -> f64 {
    (0..a.n_states)
        .map(|r| 0.5 * a.probs.row(r).iter().zip(b.probs.row(r)).map(|(x, y)| (x - y).abs()).sum::<f64>())
        .fold(0.0, f64::max)
}
