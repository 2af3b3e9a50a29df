//! Tail-aware K-means over per-timestamp vectors. Centroids of the fitted
//! model are the Markov states.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::marginals::gaussian_quantile;
use crate::rng::{self, derive_seed, seeded, Rng};
use crate::series::{MarkovStateSequence, Space, TimeSeriesMatrix};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailRegionSpec {
    pub quantile_level: f64,
    pub threshold: f64,
}

impl TailRegionSpec {
    pub fn new(quantile_level: f64) -> Result<Self> {
        if !(quantile_level > 0.0 && quantile_level < 1.0) {
            return Err(Error::InvalidParameter(format!("tail level {quantile_level} outside (0, 1)")));
        }
        Ok(Self { quantile_level, threshold: gaussian_quantile(quantile_level)? })
    }

    /// A point is in the tail when any coordinate exceeds the threshold.
    pub fn is_tail(&self, x: &[f64]) -> bool {
        x.iter().any(|v| *v > self.threshold)
    }
}

impl Default for TailRegionSpec {
    fn default() -> Self {
        Self::new(0.96).expect("valid level")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Region {
    Tail,
    Bulk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansResult {
    /// `k × m`, one centroid per row.
    pub centroids: Tensor,
    pub assignments: Vec<usize>,
    pub inertia: f64,
    /// Inertia after every assignment step of the winning restart.
    pub history: Vec<f64>,
    pub restart: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest row of `centroids`; ties go to the lowest index.
pub fn nearest(centroids: &Tensor, x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centroids.rows() {
        let d = sq_dist(centroids.row(c), x);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn count_distinct(points: &Tensor) -> usize {
    let mut idx: Vec<usize> = (0..points.rows()).collect();
    let cmp = |a: &usize, b: &usize| {
        points
            .row(*a)
            .iter()
            .zip(points.row(*b))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(core::cmp::Ordering::Equal)
    };
    idx.sort_by(cmp);
    idx.dedup_by(|a, b| cmp(a, b).is_eq());
    idx.len()
}

fn plus_plus_init(points: &Tensor, k: usize, rng: &mut Rng) -> Tensor {
    let (n, m) = points.shape();
    let mut centroids = Tensor::zeros(k, m);
    let first = (rng::uniform(rng) * n as f64) as usize % n;
    centroids.row_mut(0).copy_from_slice(points.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), centroids.row(0))).collect();
    for c in 1..k {
        let pick = rng::categorical(rng, &d2);
        centroids.row_mut(c).copy_from_slice(points.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), centroids.row(c)));
        }
    }
    centroids
}

fn assign(points: &Tensor, centroids: &Tensor) -> (Vec<usize>, Vec<f64>, f64) {
    let mut labels = Vec::with_capacity(points.rows());
    let mut dists = Vec::with_capacity(points.rows());
    let mut inertia = 0.0;
    for i in 0..points.rows() {
        let (c, d) = nearest(centroids, points.row(i));
        labels.push(c);
        dists.push(d);
        inertia += d;
    }
    (labels, dists, inertia)
}

fn update(points: &Tensor, labels: &mut [usize], dists: &mut [f64], k: usize) -> Tensor {
    let m = points.cols();
    let mut sums = Tensor::zeros(k, m);
    let mut counts = alloc::vec![0usize; k];
    for (i, &c) in labels.iter().enumerate() {
        counts[c] += 1;
        for (s, x) in sums.row_mut(c).iter_mut().zip(points.row(i)) {
            *s += x;
        }
    }
    for c in 0..k {
        if counts[c] == 0 {
            // reseed at the point currently worst served; ties to lowest index
            let mut far = 0;
            for i in 1..dists.len() {
                if dists[i] > dists[far] {
                    far = i;
                }
            }
            let old = labels[far];
            counts[old] -= 1;
            for (s, x) in sums.row_mut(old).iter_mut().zip(points.row(far)) {
                *s -= x;
            }
            labels[far] = c;
            dists[far] = 0.0;
            counts[c] = 1;
            sums.row_mut(c).copy_from_slice(points.row(far));
        }
    }
    for c in 0..k {
        let n = counts[c] as f64;
        sums.row_mut(c).iter_mut().for_each(|s| *s /= n);
    }
    sums
}

fn lloyd(points: &Tensor, k: usize, max_iters: usize, rng: &mut Rng) -> (Tensor, Vec<usize>, f64, Vec<f64>) {
    let mut centroids = plus_plus_init(points, k, rng);
    let (mut labels, mut dists, mut inertia) = assign(points, &centroids);
    let mut history = alloc::vec![inertia];
    for _ in 0..max_iters {
        let mut l = labels.clone();
        centroids = update(points, &mut l, &mut dists, k);
        let (new_labels, new_dists, new_inertia) = assign(points, &centroids);
        history.push(new_inertia);
        inertia = new_inertia;
        dists = new_dists;
        let done = new_labels == labels;
        labels = new_labels;
        if done {
            break;
        }
    }
    (centroids, labels, inertia, history)
}

/// K-means with k-means++ seeding over the rows of `points`; the restart with
/// the lowest inertia wins, ties to the earliest restart.
pub fn kmeans(points: &Tensor, k: usize, n_restarts: usize, max_iters: usize, seed: u64) -> Result<KMeansResult> {
    if points.rows() == 0 || k == 0 {
        return Err(Error::EmptyInput);
    }
    let distinct = count_distinct(points);
    if k > distinct {
        return Err(Error::KTooLarge { k, distinct });
    }
    let mut best: Option<KMeansResult> = None;
    for r in 0..n_restarts.max(1) {
        let mut rng = seeded(derive_seed(seed, r as u64));
        let (centroids, assignments, inertia, history) = lloyd(points, k, max_iters, &mut rng);
        if best.as_ref().is_none_or(|b| inertia < b.inertia) {
            best = Some(KMeansResult { centroids, assignments, inertia, history, restart: r });
        }
    }
    Ok(best.expect("at least one restart"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    /// `n_clusters × m`; tail centroids come first.
    pub centroids: Tensor,
    pub regions: Vec<Region>,
    pub n_tail: usize,
    pub n_bulk: usize,
    pub spec: TailRegionSpec,
    pub inertia: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub n_tail: usize,
    pub n_bulk: usize,
    pub n_restarts: usize,
    pub max_iters: usize,
    pub seed: u64,
}

impl ClusterModel {
    pub fn n_states(&self) -> usize {
        self.centroids.rows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.cols()
    }

    /// Centroid vector of a state.
    pub fn centroid(&self, state: usize) -> &[f64] {
        self.centroids.row(state)
    }
}

fn rows_of(points: &[&[f64]], m: usize) -> Tensor {
    let mut t = Tensor::zeros(points.len(), m);
    for (i, p) in points.iter().enumerate() {
        t.row_mut(i).copy_from_slice(p);
    }
    t
}

/// Splits the timestamps of Gaussian-space series by the tail predicate and
/// clusters each region separately. With `n_tail == 0` every point is
/// clustered together as bulk.
pub fn fit_state_space(series: &[&TimeSeriesMatrix], spec: TailRegionSpec, cfg: &ClusterConfig) -> Result<ClusterModel> {
    let first = series.first().ok_or(Error::EmptyInput)?;
    let m = first.dim();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    for s in series {
        Space::Gaussian.expect(s.space())?;
        if s.dim() != m {
            return Err(Error::shape("series of different dimension"));
        }
        for j in 0..s.len() {
            columns.push(s.column(j));
        }
    }
    let (tail, bulk): (Vec<&[f64]>, Vec<&[f64]>) = if cfg.n_tail == 0 {
        (Vec::new(), columns.iter().map(|c| c.as_slice()).collect())
    } else {
        columns.iter().map(|c| c.as_slice()).partition(|c| spec.is_tail(c))
    };
    if tail.len() < cfg.n_tail {
        return Err(Error::RegionEmpty { region: "tail", points: tail.len(), k: cfg.n_tail });
    }
    if bulk.len() < cfg.n_bulk {
        return Err(Error::RegionEmpty { region: "bulk", points: bulk.len(), k: cfg.n_bulk });
    }
    let mut centroids = Vec::new();
    let mut regions = Vec::new();
    let mut inertia = 0.0;
    for (region, pts, k, stream) in [(Region::Tail, &tail, cfg.n_tail, 0), (Region::Bulk, &bulk, cfg.n_bulk, 1)] {
        if k == 0 {
            continue;
        }
        let r = kmeans(&rows_of(pts, m), k, cfg.n_restarts, cfg.max_iters, derive_seed(cfg.seed, stream))?;
        inertia += r.inertia;
        centroids.push(r.centroids);
        regions.extend(core::iter::repeat_n(region, k));
    }
    let refs: Vec<&Tensor> = centroids.iter().collect();
    let centroids = Tensor::concat_rows(&refs)?;
    Ok(ClusterModel { centroids, regions, n_tail: cfg.n_tail, n_bulk: cfg.n_bulk, spec, inertia })
}

/// Nearest-centroid label per timestamp; ties to the lowest state index.
pub fn assign_states(series: &TimeSeriesMatrix, model: &ClusterModel) -> Result<MarkovStateSequence> {
    if series.dim() != model.dim() {
        return Err(Error::shape(format!("{}-variate series for {}-variate centroids", series.dim(), model.dim())));
    }
    let states = (0..series.len()).map(|j| nearest(&model.centroids, &series.column(j)).0).collect();
    MarkovStateSequence::new(states, model.n_states())
}
