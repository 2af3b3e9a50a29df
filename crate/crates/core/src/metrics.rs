//! Evaluation metrics: matrix errors, autocorrelation, kernel density error,
//! exceedance probabilities and return periods, goodness of fit, and the
//! downstream quantities `S` of the two experiments.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::series::{Space, TimeSeriesMatrix};
use crate::tensor::Tensor;

/// `‖C − C̃‖_F / ‖C‖_F`.
pub fn frobenius_rel_error(target: &Tensor, estimate: &Tensor) -> Result<f64> {
    if target.shape() != estimate.shape() {
        return Err(Error::shape(format!("{:?} vs {:?}", target.shape(), estimate.shape())));
    }
    let norm = target.frobenius_norm();
    if norm == 0.0 {
        return Err(Error::ZeroTarget);
    }
    let mut d = estimate.clone();
    d.add_scaled(target, -1.0);
    Ok(d.frobenius_norm() / norm)
}

/// `m × (τ_max + 1)` autocorrelations pooled over realizations: each
/// location's mean and lag-0 variance are taken over all of them, and lag
/// products never straddle two realizations.
pub fn autocorr_curves(series: &[TimeSeriesMatrix], tau_max: usize) -> Result<Tensor> {
    let first = series.first().ok_or(Error::EmptySeries)?;
    let m = first.dim();
    if series.iter().any(|s| s.dim() != m) {
        return Err(Error::shape("realizations differ in dimension"));
    }
    let n_min = series.iter().map(|s| s.len()).min().unwrap_or(0);
    if n_min <= tau_max {
        return Err(Error::SeriesTooShort { len: n_min, required: tau_max + 1 });
    }
    let mut out = Tensor::zeros(m, tau_max + 1);
    for i in 0..m {
        let total: usize = series.iter().map(|s| s.len()).sum();
        let mean = series.iter().map(|s| s.data().row(i).iter().sum::<f64>()).sum::<f64>() / total as f64;
        for tau in 0..=tau_max {
            let (mut acc, mut count) = (0.0, 0usize);
            for s in series {
                let r = s.data().row(i);
                for j in 0..r.len() - tau {
                    acc += (r[j] - mean) * (r[j + tau] - mean);
                    count += 1;
                }
            }
            out[(i, tau)] = acc / count as f64;
        }
        let c0 = out[(i, 0)];
        for tau in 0..=tau_max {
            out[(i, tau)] = if c0 > 0.0 { out[(i, tau)] / c0 } else if tau == 0 { 1.0 } else { 0.0 };
        }
    }
    Ok(out)
}

pub fn autocorr_curve(series: &TimeSeriesMatrix, tau_max: usize) -> Result<Tensor> {
    autocorr_curves(core::slice::from_ref(series), tau_max)
}

fn mean_sd(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, libm::sqrt(var))
}

fn sorted(x: &[f64]) -> Vec<f64> {
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Linear-interpolated sample quantile on sorted data.
fn sorted_quantile(s: &[f64], p: f64) -> f64 {
    let h = p * (s.len() - 1) as f64;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(s.len() - 1);
    s[lo] + (h - lo as f64) * (s[hi] - s[lo])
}

/// Silverman's rule of thumb `0.9 · min(σ, IQR / 1.34) · n^(−1/5)`.
pub fn silverman_bandwidth(samples: &[f64]) -> Result<f64> {
    if samples.len() < 2 {
        return Err(Error::InsufficientData("bandwidth needs at least two samples".into()));
    }
    let s = sorted(samples);
    let (_, sd) = mean_sd(&s);
    let iqr = sorted_quantile(&s, 0.75) - sorted_quantile(&s, 0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    if !(spread > 0.0) {
        return Err(Error::InsufficientData("samples have no spread".into()));
    }
    Ok(0.9 * spread * libm::pow(s.len() as f64, -0.2))
}

/// Gaussian-kernel density estimate at each grid point.
pub fn kde(samples: &[f64], grid: &[f64]) -> Result<Vec<f64>> {
    let h = silverman_bandwidth(samples)?;
    let s = sorted(samples);
    let norm = 1.0 / (s.len() as f64 * h * libm::sqrt(2.0 * core::f64::consts::PI));
    // kernel mass beyond 9 bandwidths is below 1e-17
    let reach = 9.0 * h;
    Ok(grid
        .iter()
        .map(|&x| {
            let lo = s.partition_point(|&v| v < x - reach);
            let hi = s.partition_point(|&v| v <= x + reach);
            s[lo..hi].iter().map(|&v| libm::exp(-0.5 * ((x - v) / h) * ((x - v) / h))).sum::<f64>() * norm
        })
        .collect())
}

pub fn trapezoid(grid: &[f64], f: &[f64]) -> f64 {
    grid.windows(2).zip(f.windows(2)).map(|(g, v)| 0.5 * (g[1] - g[0]) * (v[0] + v[1])).sum()
}

/// `∫|f̂ − f| / ∫f` on `grid` by the trapezoid rule.
pub fn density_l1_error(samples: &[f64], reference: impl Fn(f64) -> f64, grid: &[f64]) -> Result<f64> {
    let est = kde(samples, grid)?;
    let f: Vec<f64> = grid.iter().map(|&x| reference(x)).collect();
    let diff: Vec<f64> = est.iter().zip(&f).map(|(a, b)| (a - b).abs()).collect();
    let denom = trapezoid(grid, &f);
    if !(denom > 0.0) {
        return Err(Error::ZeroTarget);
    }
    Ok(trapezoid(grid, &diff) / denom)
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceCurve {
    pub grid: Vec<f64>,
    /// Fraction of samples strictly above each grid point.
    pub prob: Vec<f64>,
    /// Number of samples strictly above each grid point.
    pub tail_counts: Vec<usize>,
    pub n_samples: usize,
}

impl ExceedanceCurve {
    pub fn return_periods(&self) -> Vec<f64> {
        self.prob.iter().map(|&p| if p > 0.0 { 1.0 / p } else { f64::INFINITY }).collect()
    }
}

pub fn exceedance_curve(samples: &[f64], grid: &[f64]) -> Result<ExceedanceCurve> {
    if samples.is_empty() {
        return Err(Error::EmptySeries);
    }
    let s = sorted(samples);
    let n = s.len();
    let tail_counts: Vec<usize> = grid.iter().map(|&g| n - s.partition_point(|&v| v <= g)).collect();
    let prob = tail_counts.iter().map(|&c| c as f64 / n as f64).collect();
    Ok(ExceedanceCurve { grid: grid.to_vec(), prob, tail_counts, n_samples: n })
}

/// Mean relative return-period error over grid points where both curves
/// have at least `min_tail` exceedances (and so positive probability).
pub fn return_period_l1_error(target: &ExceedanceCurve, model: &ExceedanceCurve, min_tail: usize) -> Result<f64> {
    if target.grid != model.grid {
        return Err(Error::shape("exceedance curves use different grids"));
    }
    let min_tail = min_tail.max(1);
    let errs: Vec<f64> = (0..target.grid.len())
        .filter(|&k| target.tail_counts[k] >= min_tail && model.tail_counts[k] >= min_tail)
        .map(|k| {
            let (rt, rm) = (1.0 / target.prob[k], 1.0 / model.prob[k]);
            (rm - rt).abs() / rt
        })
        .collect();
    if errs.is_empty() {
        return Err(Error::EmptyTailGrid);
    }
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

/// Two-sided Kolmogorov–Smirnov statistic of `samples` against `cdf`.
pub fn ks_statistic(samples: &[f64], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptySeries);
    }
    let s = sorted(samples);
    let n = s.len() as f64;
    Ok(s.iter()
        .enumerate()
        .map(|(j, &x)| {
            let f = cdf(x);
            (f - j as f64 / n).max((j + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max))
}

/// Asymptotic critical value `sqrt(−ln(α/2) / 2) / sqrt(n)`.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    libm::sqrt(-libm::log(alpha / 2.0) / 2.0) / libm::sqrt(n as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub critical: f64,
    pub n: usize,
    pub passed: bool,
}

pub fn ks_test(samples: &[f64], cdf: impl Fn(f64) -> f64, alpha: f64) -> Result<KsResult> {
    let statistic = ks_statistic(samples, cdf)?;
    let critical = ks_critical(samples.len(), alpha);
    Ok(KsResult { statistic, critical, n: samples.len(), passed: statistic <= critical })
}

fn check_physical(s: &TimeSeriesMatrix) -> Result<()> {
    s.space().expect(Space::Physical)
}

/// `S(t) = Σ_i V_i(t)` at every stamp, pooled over realizations.
pub fn sde_metric_s(series: &[TimeSeriesMatrix]) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for s in series {
        check_physical(s)?;
        out.extend((0..s.len()).map(|j| s.data().column(j).iter().sum::<f64>()));
    }
    Ok(out)
}

/// Largest time-average over locations of one realization.
pub fn wind_metric_s(series: &TimeSeriesMatrix) -> Result<f64> {
    check_physical(series)?;
    if series.len() == 0 {
        return Err(Error::EmptySeries);
    }
    Ok((0..series.dim())
        .map(|i| series.data().row(i).iter().sum::<f64>() / series.len() as f64)
        .fold(f64::NEG_INFINITY, f64::max))
}

pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::shape(format!("pearson needs equal lengths ≥ 2, got {} and {}", a.len(), b.len())));
    }
    let (ma, _) = mean_sd(a);
    let (mb, _) = mean_sd(b);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::InsufficientData("pearson correlation of a constant".into()));
    }
    Ok(sab / libm::sqrt(saa * sbb))
}

/// Every `step`-th entry starting at 0.
pub fn thin(samples: &[f64], step: usize) -> Vec<f64> {
    samples.iter().step_by(step.max(1)).copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marginals::{gaussian_cdf, gaussian_pdf};
    use crate::rng::{seeded, standard_normal, uniform};
    use crate::sdebench::{simulate_v, SdeParams};

    #[test]
    fn frobenius_examples() {
        let i2 = Tensor::identity(2);
        assert_eq!(frobenius_rel_error(&i2, &i2).unwrap(), 0.0);
        let mut two = i2.clone();
        two.scale(2.0);
        assert_eq!(frobenius_rel_error(&i2, &two).unwrap(), 1.0);
        assert_eq!(frobenius_rel_error(&Tensor::zeros(2, 2), &i2).unwrap_err(), Error::ZeroTarget);
    }

    #[test]
    fn white_noise_autocorrelation() {
        let mut rng = seeded(1);
        let n = 20_000;
        let data = Tensor::from_fn(2, n, |_, _| standard_normal(&mut rng));
        let s = TimeSeriesMatrix::regular(data, Space::Gaussian, 1.0).unwrap();
        let c = autocorr_curve(&s, 10).unwrap();
        for i in 0..2 {
            assert_eq!(c[(i, 0)], 1.0);
            for tau in 1..=10 {
                assert!(c[(i, tau)].abs() < 3.0 / libm::sqrt(n as f64));
            }
        }
        assert!(matches!(autocorr_curve(&s.slice(0..5), 10), Err(Error::SeriesTooShort { .. })));
    }

    #[test]
    fn autocorrelation_of_the_benchmark_decays_exponentially() {
        let p = SdeParams { n_realizations: 300, seed: 2, ..SdeParams::paper() };
        let v = simulate_v(&p).unwrap();
        let c = autocorr_curves(&v, 25).unwrap();
        for tau in 0..=25 {
            let expect = libm::exp(-p.theta * tau as f64 * p.dt);
            for i in 0..3 {
                assert!((c[(i, tau)] - expect).abs() < 0.05, "{tau}: {}", c[(i, tau)]);
            }
        }
    }

    #[test]
    fn gaussian_density_error_is_small() {
        let mut rng = seeded(3);
        let x: Vec<f64> = (0..1_000_000).map(|_| standard_normal(&mut rng)).collect();
        let grid = linspace(-5.0, 5.0, 401);
        let e = density_l1_error(&x, gaussian_pdf, &grid).unwrap();
        assert!(e < 0.02, "{e}");
    }

    #[test]
    fn kde_matches_direct_sum() {
        let x = [0.0, 0.3, 1.1, 2.0, -0.7];
        let h = silverman_bandwidth(&x).unwrap();
        let est = kde(&x, &[0.5]).unwrap()[0];
        let direct: f64 = x.iter().map(|v| gaussian_pdf((0.5 - v) / h) / h).sum::<f64>() / 5.0;
        assert!((est - direct).abs() < 1e-15);
    }

    #[test]
    fn exceedance_examples() {
        let c = exceedance_curve(&[5.0, 6.0, 7.0], &[0.0, 1.0]).unwrap();
        assert_eq!(c.prob, vec![1.0, 1.0]);
        let mut rng = seeded(4);
        let u: Vec<f64> = (0..100_000).map(|_| uniform(&mut rng)).collect();
        let c = exceedance_curve(&u, &[0.5]).unwrap();
        assert!((c.prob[0] - 0.5).abs() < 0.01);
        let c = exceedance_curve(&[1.0, 2.0, 3.0, 4.0], &[0.0, 2.0, 4.0]).unwrap();
        assert_eq!(c.tail_counts, vec![4, 2, 0]);
        assert_eq!(c.return_periods()[1], 2.0);
    }

    #[test]
    fn return_period_error() {
        let grid = [0.0, 1.0, 2.0, 3.0];
        let target = exceedance_curve(&[0.5, 1.5, 2.5, 3.5], &grid).unwrap();
        let model = exceedance_curve(&[0.5, 0.6, 1.5, 2.5], &grid).unwrap();
        // counts target 4,3,2,1 model 4,2,1,0; with min_tail 1 use the first three
        let e = return_period_l1_error(&target, &model, 1).unwrap();
        let expect = (0.0 + (2.0 - 4.0 / 3.0) / (4.0 / 3.0) + (4.0 - 2.0) / 2.0) / 3.0;
        assert!((e - expect).abs() < 1e-15);
        assert_eq!(return_period_l1_error(&target, &model, 5).unwrap_err(), Error::EmptyTailGrid);
        assert_eq!(return_period_l1_error(&target, &target, 1).unwrap(), 0.0);
    }

    #[test]
    fn ks_accepts_and_rejects() {
        let mut rng = seeded(5);
        let x: Vec<f64> = (0..10_000).map(|_| standard_normal(&mut rng)).collect();
        assert!(ks_test(&x, gaussian_cdf, 0.01).unwrap().passed);
        let shifted: Vec<f64> = x.iter().map(|v| v + 0.1).collect();
        assert!(!ks_test(&shifted, gaussian_cdf, 0.01).unwrap().passed);
        assert!((ks_critical(1, 0.01) - 1.6276).abs() < 1e-4);
        assert_eq!(ks_statistic(&[0.0], |_| 0.5).unwrap(), 0.5);
    }

    #[test]
    fn downstream_quantities() {
        let data = Tensor::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        let s = TimeSeriesMatrix::regular(data, Space::Physical, 1.0).unwrap();
        assert_eq!(sde_metric_s(core::slice::from_ref(&s)).unwrap(), vec![1.0, 2.0, 3.0]);
        let c = Tensor::from_rows(&[[2.0; 5], [7.0; 5], [4.0; 5]]).unwrap();
        let s = TimeSeriesMatrix::regular(c, Space::Physical, 1.0).unwrap();
        assert_eq!(wind_metric_s(&s).unwrap(), 7.0);
        let g = s.with_data(s.data().clone(), Space::Gaussian).unwrap();
        assert!(matches!(wind_metric_s(&g), Err(Error::SpaceTagMismatch { .. })));
        assert!(matches!(sde_metric_s(&[g]), Err(Error::SpaceTagMismatch { .. })));
    }

    #[test]
    fn mean_of_s_for_gamma_locations() {
        let v = simulate_v(&SdeParams { seed: 6, ..SdeParams::paper() }).unwrap();
        let s = sde_metric_s(&v).unwrap();
        let mean = s.iter().sum::<f64>() / s.len() as f64;
        // Var S = 12 and ~4 decorrelation times per path: sd of the mean ≈ 0.055
        assert!((mean - 6.0).abs() < 0.2, "{mean}");
    }

    #[test]
    fn pearson_and_thinning() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.5]).unwrap() - 0.997950).abs() < 1e-5);
        assert!(pearson(&[1.0, 1.0], &[1.0, 2.0]).is_err());
        assert_eq!(thin(&[0.0, 1.0, 2.0, 3.0, 4.0], 2), vec![0.0, 2.0, 4.0]);
    }
}
