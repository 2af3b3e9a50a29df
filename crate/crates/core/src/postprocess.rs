//! Post-processing of generated Gaussian-space series: a Cholesky-based map
//! onto a target spatial correlation, then rank reshuffling of fresh marginal
//! samples so each location's marginal is reproduced exactly.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, invert_lower, PIVOT_FLOOR};
use crate::marginals::MarginalSet;
use crate::rng::{derive_seed, seeded};
use crate::series::TimeSeriesMatrix;
use crate::tensor::Tensor;

/// Uncentered second-moment matrix `X Xᵀ / n` of an `m × n` matrix.
pub fn second_moment(data: &Tensor) -> Result<Tensor> {
    if data.cols() == 0 || data.rows() == 0 {
        return Err(Error::EmptySeries);
    }
    let mut c = data.matmul_nt(data)?;
    c.scale(1.0 / data.cols() as f64);
    // exact symmetry
    for i in 0..c.rows() {
        for j in 0..i {
            c[(i, j)] = c[(j, i)];
        }
    }
    Ok(c)
}

pub fn spatial_correlation(series: &TimeSeriesMatrix) -> Result<Tensor> {
    second_moment(series.data())
}

/// Which triangular map is applied to the sample factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrectionVariant {
    /// `L L̃⁻¹`: maps the sample second moments exactly onto the target.
    #[default]
    Inverse,
    /// `L L̃ᵀ`, kept only for comparison runs.
    PrintedTranspose,
}

/// `m × m` matrix `A` with `Ũ = A X̃`.
pub fn correction_map(sample: &Tensor, target: &Tensor, variant: CorrectionVariant) -> Result<Tensor> {
    if sample.shape() != target.shape() {
        return Err(Error::shape(format!("sample moments {:?} vs target {:?}", sample.shape(), target.shape())));
    }
    let l = cholesky(target)?;
    let ls = match cholesky(sample) {
        Ok(ls) => ls,
        Err(Error::NotPsd { .. }) => return Err(Error::SingularSampleCorrelation),
        Err(e) => return Err(e),
    };
    let scale = (0..sample.rows()).map(|i| sample[(i, i)]).fold(1.0, f64::max);
    if (0..ls.rows()).any(|i| ls[(i, i)] * ls[(i, i)] <= PIVOT_FLOOR * scale) {
        return Err(Error::SingularSampleCorrelation);
    }
    match variant {
        CorrectionVariant::Inverse => l.matmul(&invert_lower(&ls)?),
        CorrectionVariant::PrintedTranspose => l.matmul(&ls.transpose()),
    }
}

/// `Ũ = L L̃⁻¹ X̃` where `L`, `L̃` are the Cholesky factors of the target and
/// of the sample second-moment matrix.
pub fn correlation_correct(x: &TimeSeriesMatrix, target: &Tensor, variant: CorrectionVariant) -> Result<TimeSeriesMatrix> {
    let a = correction_map(&spatial_correlation(x)?, target, variant)?;
    x.with_data(a.matmul(x.data())?, x.space())
}

/// Zero-based descending ranks: the largest entry gets rank 0. Ties keep
/// time order.
pub fn descending_ranks(row: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
    let mut ranks = alloc::vec![0; row.len()];
    for (r, &j) in order.iter().enumerate() {
        ranks[j] = r;
    }
    ranks
}

/// Places the samples of row `i` at the positions given by the descending
/// ranks of row `i` of `u`. `samples[i]` must have `u.cols()` entries.
pub fn reshuffle_with(u: &Tensor, samples: &[Vec<f64>]) -> Result<Tensor> {
    if samples.len() != u.rows() || samples.iter().any(|s| s.len() != u.cols()) {
        return Err(Error::shape(format!("reshuffle needs {} rows of {} samples", u.rows(), u.cols())));
    }
    let mut out = Tensor::zeros(u.rows(), u.cols());
    for (i, z) in samples.iter().enumerate() {
        let mut z = z.clone();
        z.sort_by(|a, b| b.total_cmp(a));
        for (j, r) in descending_ranks(u.row(i)).into_iter().enumerate() {
            out[(i, j)] = z[r];
        }
    }
    Ok(out)
}

/// Draws `n` fresh samples per location from `marginals` and reorders them
/// by the ranks of `u`. Location `i` uses stream `i` of `seed`.
pub fn reshuffle(u: &TimeSeriesMatrix, marginals: &MarginalSet, seed: u64) -> Result<TimeSeriesMatrix> {
    if marginals.len() != u.dim() {
        return Err(Error::shape(format!("{} marginals for {} locations", marginals.len(), u.dim())));
    }
    let samples = marginals
        .models
        .iter()
        .enumerate()
        .map(|(i, model)| {
            let mut rng = seeded(derive_seed(seed, i as u64));
            (0..u.len()).map(|_| model.sample(&mut rng)).collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    u.with_data(reshuffle_with(u.data(), &samples)?, u.space())
}
