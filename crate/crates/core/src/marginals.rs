//! Marginal distributions and the entrywise transform `Φ⁻¹(F_i(x))` between
//! physical space and standard-Gaussian space.

use alloc::format;
use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};

use rand_distr::Distribution;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{standard_normal, uniform, Rng};
use crate::series::{Space, TimeSeriesMatrix};
use crate::tensor::Tensor;

pub fn gaussian_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

pub fn gaussian_pdf(x: f64) -> f64 {
    libm::exp(-0.5 * x * x) / libm::sqrt(2.0 * PI)
}

/// Inverse standard-Gaussian CDF: Acklam's rational approximation followed by
/// one Halley correction against `erfc`.
pub fn gaussian_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::DomainError(format!("gaussian quantile needs 0 < p < 1, got {p}")));
    }
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
    const P_LOW: f64 = 0.02425;

    let x = if p < P_LOW {
        let q = libm::sqrt(-2.0 * libm::log(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = libm::sqrt(-2.0 * libm::log1p(-p));
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    // refine in whichever tail keeps the residual well conditioned
    let e = if x <= 0.0 { gaussian_cdf(x) - p } else { (1.0 - p) - gaussian_cdf(-x) };
    let u = e * libm::sqrt(2.0 * PI) * libm::exp(0.5 * x * x);
    Ok(x - u / (1.0 + 0.5 * x * u))
}

/// Regularised lower incomplete gamma function `P(a, x)`.
pub fn regularized_gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_continued_fraction(a, x)
    }
}

/// Regularised upper incomplete gamma function `Q(a, x) = 1 − P(a, x)`.
pub fn regularized_gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_continued_fraction(a, x)
    }
}

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut sum = 1.0 / a;
    let mut term = sum;
    let mut ap = a;
    for _ in 0..10_000 {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    sum * libm::exp(-x + a * libm::log(x) - libm::lgamma(a))
}

// Modified Lentz evaluation of the continued fraction for Q(a, x).
fn gamma_continued_fraction(a: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-17 {
            break;
        }
    }
    libm::exp(-x + a * libm::log(x) - libm::lgamma(a)) * h
}

fn check_gamma(shape: f64, rate: f64) -> Result<()> {
    if shape > 0.0 && rate > 0.0 && shape.is_finite() && rate.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("gamma shape {shape} and rate {rate} must be positive")))
    }
}

/// CDF of Gamma(shape, rate).
pub fn gamma_cdf(x: f64, shape: f64, rate: f64) -> Result<f64> {
    check_gamma(shape, rate)?;
    if !(x >= 0.0) {
        return Err(Error::DomainError(format!("gamma cdf needs x >= 0, got {x}")));
    }
    Ok(regularized_gamma_p(shape, rate * x))
}

pub fn gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    if x == 0.0 {
        return if shape < 1.0 {
            f64::INFINITY
        } else if shape == 1.0 {
            rate
        } else {
            0.0
        };
    }
    libm::exp(shape * libm::log(rate) + (shape - 1.0) * libm::log(x) - rate * x - libm::lgamma(shape))
}

/// Quantile of Gamma(shape, rate) by safeguarded Newton iteration on a bracket.
pub fn gamma_quantile(p: f64, shape: f64, rate: f64) -> Result<f64> {
    check_gamma(shape, rate)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::DomainError(format!("gamma quantile needs 0 < p < 1, got {p}")));
    }
    let upper = p > 0.5;
    let target = if upper { 1.0 - p } else { p };
    // residual in the tail that is numerically small
    let resid = |x: f64| {
        if upper {
            target - regularized_gamma_q(shape, x)
        } else {
            regularized_gamma_p(shape, x) - target
        }
    };
    // Wilson-Hilferty start
    let z = gaussian_quantile(p)?;
    let wh = shape * libm::pow(1.0 - 1.0 / (9.0 * shape) + z / (3.0 * libm::sqrt(shape)), 3.0);
    let x = solve_increasing(resid, shape, wh)?;
    Ok(x / rate)
}

/// Rank-based empirical CDF: the value of rank `k` (1-based, ties at their
/// mean rank) maps to `k / (n + 1)`, with linear interpolation between
/// distinct order statistics and clamping outside the sample range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
    knots: Vec<f64>,
    probs: Vec<f64>,
}

impl TryFrom<Vec<f64>> for EmpiricalCdf {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        EmpiricalCdf::new(v)
    }
}

impl From<EmpiricalCdf> for Vec<f64> {
    fn from(e: EmpiricalCdf) -> Self {
        e.sorted
    }
}

impl EmpiricalCdf {
    pub fn new(mut samples: Vec<f64>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InsufficientData(format!("empirical CDF needs 2 samples, got {}", samples.len())));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::InsufficientData("non-finite sample".into()));
        }
        samples.sort_by(f64::total_cmp);
        let n1 = (samples.len() + 1) as f64;
        let mut knots = Vec::new();
        let mut probs = Vec::new();
        let mut i = 0;
        while i < samples.len() {
            let mut j = i;
            while j + 1 < samples.len() && samples[j + 1] == samples[i] {
                j += 1;
            }
            let mean_rank = (i + j) as f64 / 2.0 + 1.0;
            knots.push(samples[i]);
            probs.push(mean_rank / n1);
            i = j + 1;
        }
        Ok(Self { sorted: samples, knots, probs })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let k = &self.knots;
        let last = k.len() - 1;
        if x <= k[0] {
            return self.probs[0];
        }
        if x >= k[last] {
            return self.probs[last];
        }
        // first knot strictly greater than x
        let hi = k.partition_point(|v| *v <= x);
        let lo = hi - 1;
        let w = (x - k[lo]) / (k[hi] - k[lo]);
        self.probs[lo] + w * (self.probs[hi] - self.probs[lo])
    }

    pub fn quantile(&self, p: f64) -> f64 {
        let last = self.knots.len() - 1;
        if p <= self.probs[0] {
            return self.knots[0];
        }
        if p >= self.probs[last] {
            return self.knots[last];
        }
        let hi = self.probs.partition_point(|v| *v <= p);
        let lo = hi - 1;
        let w = (p - self.probs[lo]) / (self.probs[hi] - self.probs[lo]);
        self.knots[lo] + w * (self.knots[hi] - self.knots[lo])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MarginalModel {
    Empirical { samples: EmpiricalCdf },
    Gamma { shape: f64, rate: f64 },
    StandardGaussian,
}

// keeps parametric quantiles finite when Φ rounds to 0 or 1
const P_FLOOR: f64 = 1e-300;
const P_CEIL: f64 = 1.0 - f64::EPSILON / 2.0;

impl MarginalModel {
    pub fn gamma(shape: f64, rate: f64) -> Result<Self> {
        check_gamma(shape, rate)?;
        Ok(MarginalModel::Gamma { shape, rate })
    }

    pub fn cdf(&self, x: f64) -> Result<f64> {
        match self {
            MarginalModel::Empirical { samples } => Ok(samples.cdf(x)),
            MarginalModel::Gamma { shape, rate } => gamma_cdf(x.max(0.0), *shape, *rate),
            MarginalModel::StandardGaussian => Ok(gaussian_cdf(x)),
        }
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        match self {
            MarginalModel::Empirical { samples } => Ok(samples.quantile(p)),
            MarginalModel::Gamma { shape, rate } => gamma_quantile(p.clamp(P_FLOOR, P_CEIL), *shape, *rate),
            MarginalModel::StandardGaussian => gaussian_quantile(p.clamp(P_FLOOR, P_CEIL)),
        }
    }

    /// One draw from the distribution.
    pub fn sample(&self, rng: &mut Rng) -> Result<f64> {
        match self {
            MarginalModel::Empirical { samples } => Ok(samples.quantile(uniform(rng))),
            MarginalModel::Gamma { shape, rate } => {
                let d = rand_distr::Gamma::new(*shape, 1.0 / *rate)
                    .map_err(|e| Error::InvalidParameter(format!("gamma sampler: {e}")))?;
                Ok(d.sample(rng))
            }
            MarginalModel::StandardGaussian => Ok(standard_normal(rng)),
        }
    }

    /// `Φ⁻¹(F(x))`.
    pub fn to_gaussian(&self, x: f64) -> Result<f64> {
        match self {
            MarginalModel::StandardGaussian => Ok(x),
            MarginalModel::Gamma { shape, rate } => {
                // go through whichever tail probability is not rounded away
                let y = *rate * x.max(0.0);
                let p = regularized_gamma_p(*shape, y);
                if p <= 0.0 || p >= 1.0 {
                    return Err(Error::NonFiniteResult(format!("F({x}) = {p}")));
                }
                if p > 0.5 {
                    Ok(-gaussian_quantile(regularized_gamma_q(*shape, y))?)
                } else {
                    gaussian_quantile(p)
                }
            }
            MarginalModel::Empirical { .. } => {
                let p = self.cdf(x)?;
                if p <= 0.0 || p >= 1.0 {
                    return Err(Error::NonFiniteResult(format!("F({x}) = {p}")));
                }
                gaussian_quantile(p)
            }
        }
    }

    /// `F⁻¹(Φ(z))`.
    pub fn from_gaussian(&self, z: f64) -> Result<f64> {
        match self {
            MarginalModel::StandardGaussian => Ok(z),
            MarginalModel::Gamma { shape, rate } if z > 0.0 => {
                // upper tail: solve Q(a, y) = Φ(−z) directly
                let q = gaussian_cdf(-z).max(P_FLOOR);
                Ok(gamma_quantile_upper(q, *shape)? / rate)
            }
            _ => self.quantile(gaussian_cdf(z)),
        }
    }
}

fn gamma_quantile_upper(q: f64, shape: f64) -> Result<f64> {
    if q >= 0.5 {
        return gamma_quantile(1.0 - q, shape, 1.0);
    }
    solve_increasing(|x| q - regularized_gamma_q(shape, x), shape, f64::NAN)
}

// Root of an increasing residual whose derivative is the Gamma(shape, 1)
// density: Newton steps, falling back to bisection outside the bracket.
fn solve_increasing(resid: impl Fn(f64) -> f64, shape: f64, start: f64) -> Result<f64> {
    let (mut lo, mut hi) = (0.0, shape.max(1.0));
    while resid(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return Err(Error::NonFiniteResult("gamma quantile bracket".into()));
        }
    }
    let mut x = if start > lo && start < hi { start } else { 0.5 * (lo + hi) };
    for _ in 0..200 {
        let f = resid(x);
        if f == 0.0 {
            break;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let mut next = x - f / gamma_pdf(x, shape, 1.0);
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        let done = (next - x).abs() <= 1e-15 * x.abs() || hi - lo <= 1e-15 * hi;
        x = next;
        if done {
            break;
        }
    }
    Ok(x)
}

/// One marginal model per location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalSet {
    pub models: Vec<MarginalModel>,
}

impl MarginalSet {
    pub fn new(models: Vec<MarginalModel>) -> Self {
        Self { models }
    }

    pub fn uniform(model: MarginalModel, m: usize) -> Self {
        Self { models: alloc::vec![model; m] }
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    /// Empirical marginal per row of a physical-space series.
    pub fn fit_empirical(series: &TimeSeriesMatrix) -> Result<Self> {
        Space::Physical.expect(series.space())?;
        Self::fit_empirical_rows(series.data())
    }

    /// Empirical marginals from pooled samples, one row per location.
    pub fn fit_empirical_rows(data: &Tensor) -> Result<Self> {
        let models = (0..data.rows())
            .map(|i| EmpiricalCdf::new(data.row(i).to_vec()).map(|samples| MarginalModel::Empirical { samples }))
            .collect::<Result<_>>()?;
        Ok(Self { models })
    }

    fn check_dim(&self, series: &TimeSeriesMatrix) -> Result<()> {
        if self.models.len() != series.dim() {
            return Err(Error::shape(format!(
                "{} marginals for a {}-variate series",
                self.models.len(),
                series.dim()
            )));
        }
        Ok(())
    }

    pub fn to_gaussian(&self, series: &TimeSeriesMatrix) -> Result<TimeSeriesMatrix> {
        Space::Physical.expect(series.space())?;
        self.check_dim(series)?;
        let d = series.data();
        let mut out = Tensor::zeros(d.rows(), d.cols());
        for i in 0..d.rows() {
            for j in 0..d.cols() {
                let z = self.models[i].to_gaussian(d[(i, j)])?;
                if !z.is_finite() {
                    return Err(Error::NonFiniteResult(format!("location {i}, step {j}")));
                }
                out[(i, j)] = z;
            }
        }
        series.with_data(out, Space::Gaussian)
    }

    pub fn from_gaussian(&self, series: &TimeSeriesMatrix) -> Result<TimeSeriesMatrix> {
        Space::Gaussian.expect(series.space())?;
        self.check_dim(series)?;
        let d = series.data();
        let mut out = Tensor::zeros(d.rows(), d.cols());
        for i in 0..d.rows() {
            for j in 0..d.cols() {
                out[(i, j)] = self.models[i].from_gaussian(d[(i, j)])?;
            }
        }
        series.with_data(out, Space::Physical)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use alloc::vec;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Gamma};

    // Independent oracles: trapezoid integration of the density and bisection.
    fn gamma_cdf_oracle(x: f64, shape: f64) -> f64 {
        let n = 200_000;
        let h = x / n as f64;
        let f = |t: f64| if t <= 0.0 { 0.0 } else { t.powf(shape - 1.0) * (-t).exp() / libm::tgamma(shape) };
        let mut s = 0.5 * (f(0.0) + f(x));
        for k in 1..n {
            s += f(k as f64 * h);
        }
        s * h
    }

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn gaussian_reference_values() {
        assert_eq!(gaussian_cdf(0.0), 0.5);
        let q96 = gaussian_quantile(0.96).unwrap();
        assert!((q96 - 1.75).abs() < 0.01, "{q96}");
        assert!((q96 - 1.750_686_071_252_170).abs() < 1e-12);
        assert!(gaussian_quantile(0.0).is_err());
        assert!(gaussian_quantile(1.0).is_err());
    }

    #[test]
    fn gaussian_quantile_inverts_cdf_tightly() {
        for k in 1..2000 {
            let p = k as f64 / 2000.0;
            let x = gaussian_quantile(p).unwrap();
            assert!((gaussian_cdf(x) - p).abs() < 1e-12, "p {p}");
        }
        for p in [1e-12, 1e-8, 1e-5, 0.01] {
            let x = gaussian_quantile(p).unwrap();
            assert!(((gaussian_cdf(x) - p) / p).abs() < 1e-10);
        }
    }

    #[test]
    fn gamma_cdf_against_closed_forms_and_quadrature() {
        assert!((gamma_cdf(1.0, 1.0, 1.0).unwrap() - (1.0 - (-1.0f64).exp())).abs() < 1e-14);
        // shape 2: 1 − e^{−x}(1 + x)
        for x in [0.1, 1.0, 2.0, 5.0, 12.0] {
            let exact = 1.0 - (-x as f64).exp() * (1.0 + x);
            assert!((gamma_cdf(x, 2.0, 1.0).unwrap() - exact).abs() < 1e-13);
        }
        for (x, a) in [(0.7, 0.5 + 2.0), (3.3, 4.5), (9.0, 7.25)] {
            assert!((gamma_cdf(x, a, 1.0).unwrap() - gamma_cdf_oracle(x, a)).abs() < 1e-8);
        }
        assert!((gamma_cdf(2.0, 2.0, 1.0).unwrap() - 0.594).abs() < 1e-3);
        assert!(gamma_cdf(-1.0, 2.0, 1.0).is_err());
        assert!(gamma_cdf(1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn gamma_median_maps_to_zero() {
        let median = bisect(|x| 1.0 - (-x as f64).exp() * (1.0 + x) - 0.5, 0.0, 10.0);
        assert!((median - 1.678).abs() < 1e-3);
        let m = MarginalModel::gamma(2.0, 1.0).unwrap();
        assert!(m.to_gaussian(median).unwrap().abs() < 1e-12);
    }

    #[test]
    fn gamma_quantile_is_consistent() {
        for shape in [0.5, 1.0, 2.0, 7.5] {
            for k in 1..100 {
                let p = k as f64 / 100.0;
                let x = gamma_quantile(p, shape, 2.0).unwrap();
                assert!((gamma_cdf(x, shape, 2.0).unwrap() - p).abs() < 1e-10);
            }
        }
        assert!(gamma_quantile(1.0, 2.0, 1.0).is_err());
    }

    #[test]
    fn gamma_round_trip_to_1e9() {
        let m = MarginalModel::gamma(2.0, 1.0).unwrap();
        for k in 1..400 {
            let x = k as f64 * 0.05;
            let back = m.from_gaussian(m.to_gaussian(x).unwrap()).unwrap();
            assert!((back - x).abs() < 1e-9 * x.max(1.0), "{x} -> {back}");
        }
    }

    #[test]
    fn standard_gaussian_is_identity() {
        let m = MarginalModel::StandardGaussian;
        assert_eq!(m.to_gaussian(0.37).unwrap(), 0.37);
        assert_eq!(m.from_gaussian(-1.2).unwrap(), -1.2);
    }

    #[test]
    fn empirical_rank_estimator() {
        let e = EmpiricalCdf::new(vec![3.0, 1.0, 2.0]).unwrap();
        assert_eq!(e.cdf(2.0), 0.5);
        assert_eq!(e.cdf(-10.0), 0.25);
        assert_eq!(e.cdf(10.0), 0.75);
        assert_eq!(e.cdf(1.5), 0.375);
        assert_eq!(e.quantile(0.375), 1.5);
        let ties = EmpiricalCdf::new(vec![1.0, 2.0, 2.0, 3.0]).unwrap();
        assert_eq!(ties.cdf(2.0), 2.5 / 5.0);
        assert!(EmpiricalCdf::new(vec![1.0]).is_err());
    }

    #[test]
    fn empirical_estimate_of_gamma_cdf() {
        let mut rng = seeded(4);
        let dist = Gamma::new(2.0, 1.0).unwrap();
        let samples: Vec<f64> = (0..10_000).map(|_| dist.sample(&mut rng)).collect();
        let e = EmpiricalCdf::new(samples).unwrap();
        let exact = gamma_cdf_oracle(2.0, 2.0);
        assert!((e.cdf(2.0) - exact).abs() < 0.02);
    }

    #[test]
    fn set_transform_checks_space_tags() {
        let data = Tensor::from_rows(&[vec![0.5, 1.0, 2.0]]).unwrap();
        let s = TimeSeriesMatrix::regular(data, Space::Gaussian, 1.0).unwrap();
        let set = MarginalSet::uniform(MarginalModel::gamma(2.0, 1.0).unwrap(), 1);
        assert!(matches!(set.to_gaussian(&s), Err(Error::SpaceTagMismatch { .. })));
        let phys = set.from_gaussian(&s).unwrap();
        assert_eq!(phys.space(), Space::Physical);
        let back = set.to_gaussian(&phys).unwrap();
        assert!(back.data().max_abs_diff(s.data()) < 1e-9);
    }

    #[test]
    fn empirical_json_round_trip() {
        let set = MarginalSet::new(vec![
            MarginalModel::Empirical { samples: EmpiricalCdf::new(vec![2.0, 1.0, 5.0]).unwrap() },
            MarginalModel::gamma(2.0, 1.0).unwrap(),
        ]);
        let json = serde_json::to_string(&set).unwrap();
        let back: MarginalSet = serde_json::from_str(&json).unwrap();
        assert_eq!(back, set);
    }

    proptest! {
        #[test]
        fn cdfs_and_quantiles_are_monotone(mut xs in proptest::collection::vec(-5.0f64..20.0, 2..40), n in 2usize..50) {
            xs.sort_by(f64::total_cmp);
            let mut rng = seeded(n as u64);
            let samples: Vec<f64> = (0..n).map(|_| crate::rng::standard_normal(&mut rng) * 3.0 + 2.0).collect();
            let e = EmpiricalCdf::new(samples).unwrap();
            for w in xs.windows(2) {
                prop_assert!(gaussian_cdf(w[0]) <= gaussian_cdf(w[1]));
                prop_assert!(e.cdf(w[0]) <= e.cdf(w[1]));
                if w[0] >= 0.0 {
                    prop_assert!(gamma_cdf(w[0], 2.0, 1.0).unwrap() <= gamma_cdf(w[1], 2.0, 1.0).unwrap());
                }
                let p0 = gaussian_cdf(w[0] / 5.0).clamp(1e-6, 1.0 - 1e-6);
                let p1 = gaussian_cdf(w[1] / 5.0).clamp(1e-6, 1.0 - 1e-6);
                prop_assert!(gaussian_quantile(p0).unwrap() <= gaussian_quantile(p1).unwrap());
                prop_assert!(gamma_quantile(p0, 2.0, 1.0).unwrap() <= gamma_quantile(p1, 2.0, 1.0).unwrap());
                prop_assert!(e.quantile(p0) <= e.quantile(p1));
            }
            for x in &xs {
                let p = e.cdf(*x);
                prop_assert!(p > 0.0 && p < 1.0);
            }
        }
    }

    #[test]
    fn sampling_matches_first_moments() {
        let mut rng = crate::rng::seeded(12);
        let g = MarginalModel::gamma(2.0, 1.0).unwrap();
        let n = 40_000;
        let xs: Vec<f64> = (0..n).map(|_| g.sample(&mut rng).unwrap()).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        // sd of the mean is sqrt(2 / n) ≈ 0.007
        assert!((mean - 2.0).abs() < 0.03, "{mean}");
        let e = MarginalModel::Empirical { samples: EmpiricalCdf::new(vec![1.0, 2.0, 3.0]).unwrap() };
        for _ in 0..100 {
            let v = e.sample(&mut rng).unwrap();
            assert!((1.0..=3.0).contains(&v));
        }
    }
}
