//! Evaluation report and the per-figure CSV tables.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use genformer_core::metrics::{ExceedanceCurve, KsResult};
use genformer_core::neural::train::TrainReport;
use genformer_core::series::TimeSeriesMatrix;
use genformer_core::Tensor;

use crate::config::Experiment;
use crate::error::Result;
use crate::io::{write_json, write_table};

/// Row-major matrix for JSON output.
pub type Matrix = Vec<Vec<f64>>;

pub fn matrix(t: &Tensor) -> Matrix {
    (0..t.rows()).map(|i| t.row(i).to_vec()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub locations: usize,
    pub observed_realizations: usize,
    pub observed_columns: usize,
    pub train_realizations: usize,
    pub validation_realizations: usize,
    pub train_windows: usize,
    pub validation_windows: usize,
    pub n_states: usize,
    pub n_tail: usize,
    pub markov_order: usize,
    pub synthetic_realizations: usize,
    pub synthetic_columns: usize,
    pub baseline_realizations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    /// `None` for a first-order chain, which is estimated by counting.
    pub stategen: Option<TrainReport>,
    pub genformer: TrainReport,
}

/// Autoregressive reconstruction of validation realizations from their true
/// state sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tracking {
    pub realizations: usize,
    pub columns: usize,
    pub l1: f64,
    pub validation_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSummary {
    pub target: Matrix,
    pub deep: Matrix,
    pub corrected: Matrix,
    pub last: Matrix,
    pub baseline: Option<Matrix>,
    pub deep_error: f64,
    pub corrected_error: f64,
    pub last_error: f64,
    pub baseline_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AutocorrSummary {
    pub lags: usize,
    pub dt: f64,
    /// `m` curves of `lags + 1` values each.
    pub observed: Matrix,
    pub synthetic: Matrix,
    pub baseline: Option<Matrix>,
    pub analytic: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySummary {
    /// `analytic` or `observed_kde`.
    pub reference_kind: String,
    pub grid: Vec<f64>,
    pub reference: Matrix,
    pub raw: Matrix,
    pub last: Matrix,
    pub raw_error: Vec<f64>,
    pub last_error: Vec<f64>,
    pub baseline_error: Option<Vec<f64>>,
    pub samples_per_location: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateFrequency {
    pub observed: Vec<f64>,
    pub generated: Vec<f64>,
    pub pearson: f64,
    pub observed_count: usize,
    pub generated_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExceedanceSummary {
    pub target: ExceedanceCurve,
    pub genformer: ExceedanceCurve,
    pub baseline: Option<ExceedanceCurve>,
    pub min_tail: usize,
    pub genformer_error: Option<f64>,
    pub baseline_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalCheck {
    pub alpha: f64,
    /// Gaussian-space output of each location against `Φ`.
    pub locations: Vec<KsResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub version: String,
    pub experiment: Experiment,
    pub config_hash: String,
    pub seed: u64,
    pub streams: BTreeMap<String, u64>,
    pub counts: Counts,
    pub sde_clamp_rate: Option<f64>,
    pub training: TrainingSummary,
    pub tracking: Option<Tracking>,
    pub correlation: CorrelationSummary,
    pub autocorrelation: AutocorrSummary,
    pub density: DensitySummary,
    pub state_frequency: StateFrequency,
    pub exceedance: ExceedanceSummary,
    pub marginals: MarginalCheck,
    /// Caveats that apply to the numbers above.
    pub notes: Vec<String>,
}

impl EvaluationReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

fn matrix_rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.iter().enumerate().map(|(i, r)| std::iter::once(i as f64).chain(r.iter().copied()).collect()).collect()
}

fn write_matrix(path: &Path, m: &Matrix) -> Result<()> {
    let mut header = vec!["row".to_string()];
    header.extend((1..=m.len()).map(|k| format!("c{k}")));
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(path, &h, &matrix_rows(m))
}

fn trajectory_rows(s: &TimeSeriesMatrix) -> Vec<Vec<f64>> {
    (0..s.len()).map(|j| std::iter::once(j as f64).chain(s.data().column(j)).collect()).collect()
}

fn write_trajectory(path: &Path, s: &TimeSeriesMatrix) -> Result<()> {
    let mut header = vec!["step".to_string()];
    header.extend((1..=s.dim()).map(|i| format!("x{i}")));
    let h: Vec<&str> = header.iter().map(String::as_str).collect();
    write_table(path, &h, &trajectory_rows(s))
}

/// `report.json` plus one CSV per figure under `dir/figures`.
pub fn write_report(dir: &Path, report: &EvaluationReport, observed: &TimeSeriesMatrix, synthetic: &TimeSeriesMatrix) -> Result<()> {
    write_json(&dir.join("report.json"), report)?;
    let fig = dir.join("figures");
    let c = &report.correlation;
    write_matrix(&fig.join("correlation_target.csv"), &c.target)?;
    write_matrix(&fig.join("correlation_deep.csv"), &c.deep)?;
    write_matrix(&fig.join("correlation_corrected.csv"), &c.corrected)?;
    write_matrix(&fig.join("correlation_final.csv"), &c.last)?;
    if let Some(b) = &c.baseline {
        write_matrix(&fig.join("correlation_baseline.csv"), b)?;
    }

    let a = &report.autocorrelation;
    let mut rows = Vec::new();
    for i in 0..a.observed.len() {
        for t in 0..=a.lags {
            rows.push(vec![
                t as f64 * a.dt,
                i as f64,
                a.observed[i][t],
                a.synthetic[i][t],
                a.baseline.as_ref().map_or(f64::NAN, |b| b[i][t]),
                a.analytic.as_ref().map_or(f64::NAN, |v| v[t]),
            ]);
        }
    }
    write_table(&fig.join("autocorrelation.csv"), &["lag", "location", "observed", "synthetic", "baseline", "analytic"], &rows)?;

    let d = &report.density;
    let mut rows = Vec::new();
    for i in 0..d.reference.len() {
        for (k, x) in d.grid.iter().enumerate() {
            rows.push(vec![*x, i as f64, d.reference[i][k], d.raw[i][k], d.last[i][k]]);
        }
    }
    write_table(&fig.join("density.csv"), &["x", "location", "reference", "raw", "final"], &rows)?;

    let f = &report.state_frequency;
    let rows: Vec<Vec<f64>> = (0..f.observed.len()).map(|s| vec![s as f64, f.observed[s], f.generated[s]]).collect();
    write_table(&fig.join("state_frequency.csv"), &["state", "observed", "generated"], &rows)?;

    let e = &report.exceedance;
    let rows: Vec<Vec<f64>> = (0..e.target.grid.len())
        .map(|k| {
            vec![
                e.target.grid[k],
                e.target.prob[k],
                e.genformer.prob[k],
                e.baseline.as_ref().map_or(f64::NAN, |b| b.prob[k]),
            ]
        })
        .collect();
    write_table(&fig.join("exceedance.csv"), &["s", "target", "genformer", "baseline"], &rows)?;

    write_trajectory(&fig.join("trajectory_observed.csv"), observed)?;
    write_trajectory(&fig.join("trajectory_synthetic.csv"), synthetic)
}
