//! Synthetic benchmark: independent square-root diffusions `Q_0 .. Q_m`
//! integrated with the Milstein scheme, combined as `V_i = Q_0 + Q_i`, and
//! the closed-form moments used to check them.

use alloc::format;
use alloc::vec::Vec;

use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marginals::MarginalModel;
use crate::rng::{derive_seed, seeded, standard_normal};
use crate::series::{Space, TimeSeriesMatrix};
use crate::tensor::Tensor;

/// Floor applied when a step would leave the positive half-line.
pub const CLAMP_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SdeParams {
    pub theta: f64,
    pub alpha: f64,
    pub beta: f64,
    /// Number of locations; `m + 1` diffusions are simulated.
    pub m: usize,
    pub dt: f64,
    /// Columns per realization, the initial draw included.
    pub n_steps: usize,
    pub n_realizations: usize,
    pub seed: u64,
}

impl SdeParams {
    pub fn paper() -> Self {
        Self { theta: 40.0, alpha: 1.0, beta: 1.0, m: 3, dt: 0.001, n_steps: 200, n_realizations: 1000, seed: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.beta > 0.0 && self.dt > 0.0) || !(self.alpha >= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "need theta > 0, alpha >= 1, beta > 0, dt > 0; got {} {} {} {}",
                self.theta, self.alpha, self.beta, self.dt
            )));
        }
        if self.m == 0 || self.n_steps == 0 || self.n_realizations == 0 {
            return Err(Error::InvalidParameter("m, n_steps and n_realizations must be positive".into()));
        }
        Ok(())
    }

    /// `½ b b′`, constant for this diffusion: `θ / (2β)`.
    pub fn milstein_correction(&self) -> f64 {
        self.theta / (2.0 * self.beta)
    }

    fn drift(&self, x: f64) -> f64 {
        self.theta * (self.alpha / self.beta - x)
    }

    fn diffusion(&self, x: f64) -> f64 {
        libm::sqrt(2.0 * self.theta * x / self.beta)
    }

    /// One Milstein update; returns the new value and whether it was clamped.
    pub fn step(&self, x: f64, db: f64) -> (f64, bool) {
        let next = x + self.drift(x) * self.dt + self.diffusion(x) * db + self.milstein_correction() * (db * db - self.dt);
        if next < CLAMP_EPS {
            (CLAMP_EPS, true)
        } else {
            (next, false)
        }
    }
}

/// Path from `x0` driven by the given Brownian increments.
pub fn milstein_path(p: &SdeParams, x0: f64, increments: &[f64]) -> (Vec<f64>, u64) {
    let mut out = Vec::with_capacity(increments.len() + 1);
    let mut x = x0;
    let mut clamped = 0;
    out.push(x);
    for &db in increments {
        let (next, c) = p.step(x, db);
        clamped += c as u64;
        x = next;
        out.push(x);
    }
    (out, clamped)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SdeRun {
    /// One `(m + 1) × n_steps` matrix per realization; row 0 is `Q_0`.
    pub q: Vec<Tensor>,
    pub clamped: u64,
    pub updates: u64,
}

impl SdeRun {
    pub fn clamp_rate(&self) -> f64 {
        if self.updates == 0 {
            0.0
        } else {
            self.clamped as f64 / self.updates as f64
        }
    }
}

/// Simulates every realization. Component `i` of realization `r` draws its
/// stationary start and its increments from stream `(r, i)` of the seed.
pub fn milstein_simulate(p: &SdeParams) -> Result<SdeRun> {
    p.validate()?;
    let init = Gamma::new(p.alpha, 1.0 / p.beta).map_err(|e| Error::InvalidParameter(format!("{e}")))?;
    let sq = libm::sqrt(p.dt);
    let mut q = Vec::with_capacity(p.n_realizations);
    let mut clamped = 0;
    for r in 0..p.n_realizations {
        let mut t = Tensor::zeros(p.m + 1, p.n_steps);
        for i in 0..=p.m {
            let mut rng = seeded(derive_seed(derive_seed(p.seed, r as u64), i as u64));
            let x0: f64 = init.sample(&mut rng);
            let inc: Vec<f64> = (1..p.n_steps).map(|_| sq * standard_normal(&mut rng)).collect();
            let (path, c) = milstein_path(p, x0, &inc);
            clamped += c;
            t.row_mut(i).copy_from_slice(&path);
        }
        q.push(t);
    }
    let updates = (p.n_realizations * (p.m + 1) * (p.n_steps - 1)) as u64;
    Ok(SdeRun { q, clamped, updates })
}

/// `V_i = Q_0 + Q_i` for `i = 1..=m`, stamped `0, dt, 2dt, …`.
pub fn build_v(q: &Tensor, dt: f64) -> Result<TimeSeriesMatrix> {
    if q.rows() < 2 {
        return Err(Error::shape(format!("need Q_0 and at least one Q_i, got {} rows", q.rows())));
    }
    let v = Tensor::from_fn(q.rows() - 1, q.cols(), |i, j| q[(0, j)] + q[(i + 1, j)]);
    TimeSeriesMatrix::regular(v, Space::Physical, dt)
}

/// All realizations of `V` for `p`.
pub fn simulate_v(p: &SdeParams) -> Result<Vec<TimeSeriesMatrix>> {
    milstein_simulate(p)?.q.iter().map(|q| build_v(q, p.dt)).collect()
}

/// Closed-form moments of `Q` and `V`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdeOracles {
    pub theta: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl SdeOracles {
    pub fn new(p: &SdeParams) -> Self {
        Self { theta: p.theta, alpha: p.alpha, beta: p.beta }
    }

    pub fn mean_q(&self) -> f64 {
        self.alpha / self.beta
    }

    pub fn var_q(&self) -> f64 {
        self.alpha / (self.beta * self.beta)
    }

    pub fn autocorr(&self, tau: f64) -> f64 {
        libm::exp(-self.theta * tau.abs())
    }

    /// Correlation of `V_k(t)` and `V_i(t + τ)`: the shared `Q_0` carries
    /// half the variance when `k ≠ i`.
    pub fn cross_corr(&self, k: usize, i: usize, tau: f64) -> f64 {
        let w = if k == i { 1.0 } else { 0.5 };
        w * self.autocorr(tau)
    }

    pub fn mean_v(&self) -> f64 {
        2.0 * self.alpha / self.beta
    }

    pub fn var_v(&self) -> f64 {
        2.0 * self.alpha / (self.beta * self.beta)
    }

    pub fn v_marginal(&self) -> Result<MarginalModel> {
        MarginalModel::gamma(2.0 * self.alpha, self.beta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marginals::gamma_cdf;

    fn small(n_realizations: usize) -> SdeParams {
        SdeParams { n_realizations, seed: 7, ..SdeParams::paper() }
    }

    #[test]
    fn correction_coefficient() {
        assert_eq!(SdeParams::paper().milstein_correction(), 20.0);
        let p = SdeParams { theta: 3.0, beta: 4.0, ..SdeParams::paper() };
        // b b' = d/dx (θ x / β) · 2 / 2 = θ / β
        let x = 0.7;
        let h = 1e-6;
        let bbp = p.diffusion(x) * (p.diffusion(x + h) - p.diffusion(x - h)) / (2.0 * h);
        assert!((0.5 * bbp - p.milstein_correction()).abs() < 1e-8);
    }

    #[test]
    fn zero_noise_relaxes_geometrically() {
        let mut p = SdeParams::paper();
        p.alpha = 2.0;
        // with ΔB = 0 the correction contributes −θΔt/(2β) each step
        let (path, c) = milstein_path(&p, 5.0, &[0.0; 30]);
        assert_eq!(c, 0);
        let fixed = p.alpha / p.beta - p.milstein_correction() * p.dt / (p.theta * p.dt);
        let r = 1.0 - p.theta * p.dt;
        for (k, x) in path.iter().enumerate() {
            let expect = fixed + (5.0 - fixed) * r.powi(k as i32);
            assert!((x - expect).abs() < 1e-12, "{k}: {x} vs {expect}");
        }
    }

    #[test]
    fn clamps_negative_excursions() {
        // the update is quadratic in ΔB with minimum θΔt((α − ½)/β − x) at
        // ΔB = −sqrt(2xβ/θ), so only starts above (α − ½)/β can cross zero
        let p = SdeParams::paper();
        let db = -libm::sqrt(2.0 * 2.0 * p.beta / p.theta);
        let (path, c) = milstein_path(&p, 2.0, &[db]);
        assert_eq!(c, 1);
        assert_eq!(path[1], CLAMP_EPS);
    }

    #[test]
    fn shapes_and_reproducibility() {
        let p = SdeParams { n_realizations: 3, n_steps: 17, ..small(3) };
        let a = milstein_simulate(&p).unwrap();
        assert_eq!(a.q.len(), 3);
        assert_eq!(a.q[0].shape(), (4, 17));
        assert_eq!(a, milstein_simulate(&p).unwrap());
        assert_ne!(a.q[0].row(0), a.q[0].row(1));
        let v = build_v(&a.q[1], p.dt).unwrap();
        assert_eq!(v.data().shape(), (3, 17));
        assert_eq!(v.space(), Space::Physical);
        assert_eq!(v.data()[(2, 5)], a.q[1][(0, 5)] + a.q[1][(3, 5)]);
        assert!(milstein_simulate(&SdeParams { alpha: 0.5, ..p }).is_err());
    }

    #[test]
    fn zero_common_component_gives_q() {
        let mut q = Tensor::from_fn(3, 4, |i, j| (i * 10 + j) as f64);
        q.row_mut(0).fill(0.0);
        let v = build_v(&q, 1.0).unwrap();
        assert_eq!(v.data().row(0), q.row(1));
        assert_eq!(v.data().row(1), q.row(2));
        assert!(matches!(build_v(&Tensor::zeros(1, 4), 1.0), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn closed_form_values() {
        let o = SdeOracles::new(&SdeParams::paper());
        assert_eq!(o.cross_corr(1, 1, 0.0), 1.0);
        assert_eq!(o.cross_corr(0, 2, 0.0), 0.5);
        assert!((o.autocorr(0.025) - 0.36787944117144233).abs() < 1e-15);
        assert_eq!((o.mean_v(), o.var_v()), (2.0, 2.0));
        assert_eq!(o.v_marginal().unwrap(), MarginalModel::Gamma { shape: 2.0, rate: 1.0 });
    }

    #[test]
    fn monte_carlo_moments() {
        let p = small(500);
        let run = milstein_simulate(&p).unwrap();
        assert!(run.clamp_rate() < 1e-3, "{}", run.clamp_rate());
        let o = SdeOracles::new(&p);

        let all: Vec<f64> = run.q.iter().flat_map(|t| t.as_slice().iter().copied()).collect();
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        assert!((mean - o.mean_q()).abs() < 0.05, "{mean}");
        let var = all.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / all.len() as f64;

        for lag in [1usize, 5, 10, 25, 50] {
            let (mut s, mut c) = (0.0, 0usize);
            for t in &run.q {
                for i in 0..t.rows() {
                    let r = t.row(i);
                    for j in 0..r.len() - lag {
                        s += (r[j] - mean) * (r[j + lag] - mean);
                        c += 1;
                    }
                }
            }
            let rho = s / c as f64 / var;
            let expect = o.autocorr(lag as f64 * p.dt);
            assert!((rho - expect).abs() < 0.05, "lag {lag}: {rho} vs {expect}");
        }

        let vs: Vec<TimeSeriesMatrix> = run.q.iter().map(|q| build_v(q, p.dt).unwrap()).collect();
        let vals: Vec<[f64; 3]> = vs
            .iter()
            .flat_map(|v| (0..v.len()).map(move |j| [v.data()[(0, j)], v.data()[(1, j)], v.data()[(2, j)]]))
            .collect();
        let n = vals.len() as f64;
        let mu: Vec<f64> = (0..3).map(|i| vals.iter().map(|v| v[i]).sum::<f64>() / n).collect();
        for m in &mu {
            assert!((m - o.mean_v()).abs() < 0.05, "{m}");
        }
        let cov = |a: usize, b: usize| vals.iter().map(|v| (v[a] - mu[a]) * (v[b] - mu[b])).sum::<f64>() / n;
        for (a, b) in [(0, 1), (0, 2), (1, 2)] {
            let r = cov(a, b) / libm::sqrt(cov(a, a) * cov(b, b));
            assert!((r - 0.5).abs() < 0.05, "{a}{b}: {r}");
        }

        // one column per realization keeps the KS sample nearly independent
        let mut first: Vec<f64> = vs.iter().map(|v| v.data()[(0, 100)]).collect();
        first.sort_by(f64::total_cmp);
        let k = first.len() as f64;
        let d = first
            .iter()
            .enumerate()
            .map(|(j, &x)| {
                let f = gamma_cdf(x, 2.0, 1.0).unwrap();
                (f - j as f64 / k).abs().max(((j + 1) as f64 / k - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < 1.628 / libm::sqrt(k), "{d}");
    }
}
