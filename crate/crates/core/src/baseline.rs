//! Translation-process baseline: a stationary Gaussian process with the
//! observed spatial correlation and temporal autocorrelation, pushed through
//! each location's marginal.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::symmetric_eigen;
use crate::marginals::MarginalSet;
use crate::metrics::autocorr_curves;
use crate::postprocess::second_moment;
use crate::rng::{derive_seed, seeded, standard_normal};
use crate::series::{concat_realizations, Space, TimeSeriesMatrix, TimeStampVector};
use crate::tensor::Tensor;

/// Largest space-time covariance dimension factorised densely.
pub const MAX_COVARIANCE_DIM: usize = 5000;
/// Largest relative Frobenius change allowed by the eigenvalue clip.
pub const MAX_REPAIR_CHANGE: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranslationModel {
    /// `m × m` spatial correlation (unit diagonal).
    pub spatial: Tensor,
    /// `m × (τ_max + 1)` per-location autocorrelations.
    pub autocorr: Tensor,
    pub marginals: MarginalSet,
}

impl TranslationModel {
    pub fn dim(&self) -> usize {
        self.spatial.rows()
    }

    pub fn tau_max(&self) -> usize {
        self.autocorr.cols() - 1
    }

    /// Location-averaged temporal kernel `ρ̄(τ)`.
    pub fn mean_autocorr(&self) -> Vec<f64> {
        let m = self.dim() as f64;
        (0..=self.tau_max()).map(|t| self.autocorr.column(t).iter().sum::<f64>() / m).collect()
    }
}

/// Estimates second moments from Gaussian-space observations.
pub fn fit_translation(observations: &[TimeSeriesMatrix], tau_max: usize, marginals: MarginalSet) -> Result<TranslationModel> {
    for o in observations {
        Space::Gaussian.expect(o.space())?;
    }
    let autocorr = autocorr_curves(observations, tau_max)?;
    let joined = concat_realizations(observations)?;
    let c = second_moment(joined.data())?;
    let m = c.rows();
    if marginals.len() != m {
        return Err(Error::shape(format!("{} marginals for {m} locations", marginals.len())));
    }
    let sd: Vec<f64> = (0..m).map(|i| libm::sqrt(c[(i, i)])).collect();
    if sd.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::InsufficientData("a location has zero second moment".into()));
    }
    let spatial = Tensor::from_fn(m, m, |i, k| if i == k { 1.0 } else { c[(i, k)] / (sd[i] * sd[k]) });
    Ok(TranslationModel { spatial, autocorr, marginals })
}

/// `Σ[(s, i), (u, k)] = C[i, k] · ρ̄(|s − u|)`, zero beyond `τ_max`;
/// row index `s · m + i`.
pub fn space_time_covariance(model: &TranslationModel, n_steps: usize) -> Result<Tensor> {
    let m = model.dim();
    let dim = m * n_steps;
    if dim > MAX_COVARIANCE_DIM {
        return Err(Error::CovarianceTooLarge { dim, limit: MAX_COVARIANCE_DIM });
    }
    let rho = model.mean_autocorr();
    Ok(Tensor::from_fn(dim, dim, |a, b| {
        let (s, i) = (a / m, a % m);
        let (u, k) = (b / m, b % m);
        let lag = s.abs_diff(u);
        if lag < rho.len() {
            model.spatial[(i, k)] * rho[lag]
        } else {
            0.0
        }
    }))
}

/// `V diag(√λ⁺)` of the eigenvalue-clipped covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceFactor {
    pub factor: Tensor,
    /// Relative Frobenius change made by the clip.
    pub repair_change: f64,
}

pub fn repaired_factor(cov: &Tensor) -> Result<CovarianceFactor> {
    let (vals, vecs) = symmetric_eigen(cov)?;
    let norm = cov.frobenius_norm();
    let removed: f64 = vals.iter().filter(|v| **v < 0.0).map(|v| v * v).sum();
    let repair_change = if norm > 0.0 { libm::sqrt(removed) / norm } else { 0.0 };
    if repair_change > MAX_REPAIR_CHANGE {
        return Err(Error::RepairFailed { relative_change: repair_change });
    }
    let n = cov.rows();
    let factor = Tensor::from_fn(n, n, |r, c| vecs[(r, c)] * libm::sqrt(vals[c].max(0.0)));
    Ok(CovarianceFactor { factor, repair_change })
}

/// Gaussian-space realizations; realization `r` uses stream `r` of `seed`.
pub fn sample_gaussian(model: &TranslationModel, stamps: &TimeStampVector, n_realizations: usize, seed: u64) -> Result<Vec<TimeSeriesMatrix>> {
    let (m, n) = (model.dim(), stamps.len());
    let f = repaired_factor(&space_time_covariance(model, n)?)?;
    (0..n_realizations)
        .map(|r| {
            let mut rng = seeded(derive_seed(seed, r as u64));
            let xi = Tensor::from_fn(m * n, 1, |_, _| standard_normal(&mut rng));
            let x = f.factor.matmul(&xi)?;
            let data = Tensor::from_fn(m, n, |i, s| x[(s * m + i, 0)]);
            TimeSeriesMatrix::new(data, Space::Gaussian, stamps.clone())
        })
        .collect()
}

/// Physical-space realizations `F_i⁻¹(Φ(X*_i))`.
pub fn simulate_translation(model: &TranslationModel, stamps: &TimeStampVector, n_realizations: usize, seed: u64) -> Result<Vec<TimeSeriesMatrix>> {
    sample_gaussian(model, stamps, n_realizations, seed)?
        .iter()
        .map(|g| model.marginals.from_gaussian(g))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marginals::{gamma_cdf, MarginalModel};
    use crate::metrics::ks_test;
    use crate::postprocess::spatial_correlation;

    fn white(m: usize, n: usize, seed: u64) -> TimeSeriesMatrix {
        let mut rng = seeded(seed);
        TimeSeriesMatrix::regular(Tensor::from_fn(m, n, |_, _| standard_normal(&mut rng)), Space::Gaussian, 1.0).unwrap()
    }

    fn model(spatial: Tensor, rho: &[f64]) -> TranslationModel {
        let m = spatial.rows();
        let autocorr = Tensor::from_fn(m, rho.len(), |_, t| rho[t]);
        TranslationModel { spatial, autocorr, marginals: MarginalSet::uniform(MarginalModel::StandardGaussian, m) }
    }

    #[test]
    fn white_noise_fit() {
        let n = 50_000;
        let m = fit_translation(&[white(2, n, 1)], 5, MarginalSet::uniform(MarginalModel::StandardGaussian, 2)).unwrap();
        for i in 0..2 {
            assert_eq!(m.autocorr[(i, 0)], 1.0);
            for t in 1..=5 {
                assert!(m.autocorr[(i, t)].abs() < 3.0 / libm::sqrt(n as f64));
            }
        }
        assert!(m.spatial[(0, 1)].abs() < 0.02);
        assert!(matches!(
            fit_translation(&[white(2, 4, 1)], 5, MarginalSet::uniform(MarginalModel::StandardGaussian, 2)),
            Err(Error::SeriesTooShort { .. })
        ));
    }

    #[test]
    fn independent_case_is_iid() {
        let m = model(Tensor::identity(2), &[1.0]);
        let cov = space_time_covariance(&m, 5).unwrap();
        assert_eq!(cov, Tensor::identity(10));
        let out = sample_gaussian(&m, &TimeStampVector::regular(0.0, 1.0, 5), 20_000, 3).unwrap();
        let joined = concat_realizations(&out).unwrap();
        let c = spatial_correlation(&joined).unwrap();
        assert!((c[(0, 0)] - 1.0).abs() < 0.03 && c[(0, 1)].abs() < 0.02);
    }

    #[test]
    fn second_moments_are_reproduced() {
        let spatial = Tensor::from_rows(&[[1.0, 0.5, 0.3], [0.5, 1.0, 0.4], [0.3, 0.4, 1.0]]).unwrap();
        let rho: Vec<f64> = (0..30).map(|t| libm::exp(-0.04 * t as f64 * 10.0)).collect();
        let m = model(spatial.clone(), &rho);
        let stamps = TimeStampVector::regular(0.0, 1.0, 100);
        let out = sample_gaussian(&m, &stamps, 1000, 4).unwrap();
        let c = spatial_correlation(&concat_realizations(&out).unwrap()).unwrap();
        assert!(c.max_abs_diff(&spatial) < 0.05, "{c:?}");
        let a = autocorr_curves(&out, 10).unwrap();
        for t in 0..=10 {
            assert!((a[(0, t)] - rho[t]).abs() < 0.05);
        }
    }

    #[test]
    fn size_guard_and_repair_failure() {
        let m = model(Tensor::identity(3), &[1.0]);
        assert_eq!(
            space_time_covariance(&m, 2000).unwrap_err(),
            Error::CovarianceTooLarge { dim: 6000, limit: MAX_COVARIANCE_DIM }
        );
        let bad = model(Tensor::identity(1), &[1.0, -0.99, -0.99]);
        let cov = space_time_covariance(&bad, 30).unwrap();
        assert!(matches!(repaired_factor(&cov), Err(Error::RepairFailed { .. })));
    }

    #[test]
    fn physical_marginals_are_exact() {
        let mut m = model(Tensor::from_rows(&[[1.0, 0.5], [0.5, 1.0]]).unwrap(), &[1.0, 0.5]);
        m.marginals = MarginalSet::uniform(MarginalModel::gamma(2.0, 1.0).unwrap(), 2);
        let out = simulate_translation(&m, &TimeStampVector::regular(0.0, 1.0, 4), 3000, 5).unwrap();
        assert_eq!(out[0].space(), Space::Physical);
        // one column per realization: independent draws
        let x: Vec<f64> = out.iter().map(|s| s.data()[(1, 2)]).collect();
        assert!(ks_test(&x, |v| gamma_cdf(v, 2.0, 1.0).unwrap(), 0.01).unwrap().passed);
        assert_eq!(out, simulate_translation(&m, &TimeStampVector::regular(0.0, 1.0, 4), 3000, 5).unwrap());
    }
}
