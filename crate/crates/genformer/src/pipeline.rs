//! End-to-end orchestration: observations → Gaussian marginals → Markov
//! states → state model → encoder-decoder → simulation → correlation
//! correction → reshuffling → evaluation.

use std::collections::BTreeMap;

use genformer_core::baseline::{fit_translation, sample_gaussian, TranslationModel};
use genformer_core::clustering::{assign_states, fit_state_space, ClusterConfig, ClusterModel, TailRegionSpec};
use genformer_core::marginals::{gamma_pdf, gaussian_cdf, MarginalModel, MarginalSet};
use genformer_core::markov::{state_frequencies, TransitionMatrix};
use genformer_core::metrics::{
    autocorr_curves, density_l1_error, exceedance_curve, frobenius_rel_error, kde, ks_test, linspace, pearson,
    return_period_l1_error, sde_metric_s, wind_metric_s,
};
use genformer_core::neural::embed::CalendarScaler;
use genformer_core::neural::train::TrainReport;
use genformer_core::postprocess::{correlation_correct, reshuffle, spatial_correlation};
use genformer_core::rng::{derive_seed, seeded};
use genformer_core::sdebench::{build_v, milstein_simulate, SdeOracles};
use genformer_core::seq2seq::{GenFormerConfig, GenFormerModel};
use genformer_core::series::{
    build_dataset, concat_realizations, split_train_validation, MarkovStateSequence, Realization, Space,
    TimeSeriesMatrix, TimeStampVector, WindowPair,
};
use genformer_core::stategen::{StateGenConfig, StateGenModel};
use genformer_core::wind::{wind_preprocess, PreprocessRecord};
use rand::Rng as _;

use crate::config::{Experiment, PipelineConfig};
use crate::error::{Error, Result, StageContext};
use crate::io::read_wind_csv;
use crate::report::{
    matrix, AutocorrSummary, CorrelationSummary, Counts, DensitySummary, EvaluationReport, ExceedanceSummary,
    MarginalCheck, StateFrequency, Tracking, TrainingSummary,
};

/// Seed streams derived from the configured seed, one per random stage.
pub mod streams {
    pub const SDE: u64 = 1;
    pub const KMEANS: u64 = 2;
    pub const STATEGEN_INIT: u64 = 3;
    pub const STATEGEN_TRAIN: u64 = 4;
    pub const GENFORMER_INIT: u64 = 5;
    pub const GENFORMER_TRAIN: u64 = 6;
    pub const INIT_PICK: u64 = 7;
    pub const GENERATE: u64 = 8;
    pub const RESHUFFLE: u64 = 9;
    pub const BASELINE: u64 = 10;

    pub const ALL: [(&str, u64); 10] = [
        ("sde", SDE),
        ("kmeans", KMEANS),
        ("stategen_init", STATEGEN_INIT),
        ("stategen_train", STATEGEN_TRAIN),
        ("genformer_init", GENFORMER_INIT),
        ("genformer_train", GENFORMER_TRAIN),
        ("init_pick", INIT_PICK),
        ("generate", GENERATE),
        ("reshuffle", RESHUFFLE),
        ("baseline", BASELINE),
    ];
}

pub fn stream_seeds(seed: u64) -> BTreeMap<String, u64> {
    streams::ALL.iter().map(|(name, s)| (name.to_string(), derive_seed(seed, *s))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observations {
    pub physical: Vec<TimeSeriesMatrix>,
    pub preprocess: Option<PreprocessRecord>,
    pub clamp_rate: Option<f64>,
}

pub fn observe(cfg: &PipelineConfig) -> Result<Observations> {
    match cfg.experiment {
        Experiment::SdeBench => {
            let p = cfg.sde_params();
            let run = milstein_simulate(&p).stage("sde-gen")?;
            let physical = run.q.iter().map(|q| build_v(q, p.dt)).collect::<genformer_core::Result<_>>().stage("sde-gen")?;
            Ok(Observations { physical, preprocess: None, clamp_rate: Some(run.clamp_rate()) })
        }
        Experiment::WindCsv => {
            let path = cfg.wind_csv.as_ref().ok_or_else(|| Error::Config("wind_csv is not set".into()))?;
            let rec = read_wind_csv(path)?;
            let (series, record) = wind_preprocess(&rec.raw, &rec.stamps, cfg.wind_kernel).stage("preprocess")?;
            Ok(Observations { physical: vec![series], preprocess: Some(record), clamp_rate: None })
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianData {
    pub marginals: MarginalSet,
    pub gaussian: Vec<TimeSeriesMatrix>,
}

/// Empirical marginals pooled over all observed realizations.
pub fn to_gaussian(physical: &[TimeSeriesMatrix]) -> Result<GaussianData> {
    let joined = concat_realizations(physical).stage("to-gaussian")?;
    let marginals = MarginalSet::fit_empirical(&joined).stage("to-gaussian")?;
    let gaussian = physical.iter().map(|s| marginals.to_gaussian(s)).collect::<genformer_core::Result<_>>().stage("to-gaussian")?;
    Ok(GaussianData { marginals, gaussian })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    pub model: ClusterModel,
    pub sequences: Vec<MarkovStateSequence>,
}

pub fn fit_states(cfg: &PipelineConfig, gaussian: &[TimeSeriesMatrix]) -> Result<StateSpace> {
    let spec = TailRegionSpec::new(cfg.tail_level).stage("fit-states")?;
    let cc = ClusterConfig {
        n_tail: cfg.n_tail,
        n_bulk: cfg.n_clusters - cfg.n_tail,
        n_restarts: cfg.kmeans_restarts,
        max_iters: cfg.kmeans_max_iters,
        seed: derive_seed(cfg.seed, streams::KMEANS),
    };
    let refs: Vec<&TimeSeriesMatrix> = gaussian.iter().collect();
    let model = fit_state_space(&refs, spec, &cc).stage("fit-states")?;
    let sequences = gaussian.iter().map(|g| assign_states(g, &model)).collect::<genformer_core::Result<_>>().stage("fit-states")?;
    Ok(StateSpace { model, sequences })
}

pub fn realizations(gaussian: &[TimeSeriesMatrix], states: &[MarkovStateSequence]) -> Result<Vec<Realization>> {
    if gaussian.len() != states.len() {
        return Err(genformer_core::Error::ShapeMismatch(format!("{} series but {} state sequences", gaussian.len(), states.len())).into());
    }
    gaussian
        .iter()
        .zip(states)
        .map(|(g, s)| Realization::new(g.clone(), s.clone()))
        .collect::<genformer_core::Result<_>>()
        .stage("windowing")
}

pub fn split(cfg: &PipelineConfig, reals: &[Realization]) -> Result<(Vec<Realization>, Vec<Realization>)> {
    split_train_validation(reals, cfg.eta, cfg.split_mode).stage("split")
}

/// Calendar embedding for calendar-stamped data, fitted on training stamps.
pub fn calendar_scaler(train: &[Realization]) -> Option<CalendarScaler> {
    let mut stamps = Vec::new();
    for r in train {
        stamps.extend_from_slice(r.series.stamps().as_calendar()?);
    }
    Some(CalendarScaler::fit(&stamps))
}

#[derive(Debug, Clone)]
pub enum StateModel {
    Chain(TransitionMatrix),
    Generator(Box<StateGenModel>),
}

impl StateModel {
    pub fn order(&self) -> usize {
        match self {
            StateModel::Chain(_) => 1,
            StateModel::Generator(g) => g.config.order,
        }
    }

    /// `n_steps` states following the last `order()` entries of `init`.
    pub fn generate(&self, init: &[usize], init_stamps: &TimeStampVector, n_steps: usize, seed: u64) -> Result<MarkovStateSequence> {
        let p = self.order();
        if init.len() < p || init_stamps.len() != init.len() {
            return Err(genformer_core::Error::ShapeMismatch(format!("state generation needs {p} initial states")).into());
        }
        let k = init.len() - p;
        match self {
            StateModel::Chain(t) => t.simulate(init[init.len() - 1], n_steps, seed),
            StateModel::Generator(g) => g.generate(&init[k..], &init_stamps.slice(k..init.len()), n_steps, seed),
        }
        .stage("generate-states")
    }
}

/// Order 1 is estimated by counting; higher orders train the decoder-only model.
pub fn train_state_model(
    cfg: &PipelineConfig,
    train: &[Realization],
    val: &[Realization],
    n_states: usize,
    n_tail: usize,
) -> Result<(StateModel, Option<TrainReport>)> {
    if cfg.markov_order == 1 {
        let seqs: Vec<MarkovStateSequence> = train.iter().map(|r| r.states.clone()).collect();
        let t = TransitionMatrix::estimate(&seqs).stage("train-stategen")?;
        return Ok((StateModel::Chain(t), None));
    }
    let sc = StateGenConfig::from_hyperparams(&cfg.hyperparams(), n_states, n_tail, calendar_scaler(train));
    let mut model = StateGenModel::new(sc, derive_seed(cfg.seed, streams::STATEGEN_INIT)).stage("train-stategen")?;
    let report = model.fit(train, val, &cfg.stategen_train()).stage("train-stategen")?;
    Ok((StateModel::Generator(Box::new(model)), Some(report)))
}

/// Training windows thinned by `window_stride`, and all validation windows.
pub fn windows(cfg: &PipelineConfig, train: &[Realization], val: &[Realization]) -> Result<(Vec<WindowPair>, Vec<WindowPair>)> {
    let tr: Vec<WindowPair> = build_dataset(train, cfg.q_enc_in, cfg.q_out)
        .stage("windowing")?
        .into_iter()
        .step_by(cfg.window_stride)
        .collect();
    let va = build_dataset(val, cfg.q_enc_in, cfg.q_out).stage("windowing")?;
    Ok((tr, va))
}

pub fn genformer_config(cfg: &PipelineConfig, m: usize, n_states: usize, train: &[Realization]) -> GenFormerConfig {
    GenFormerConfig::from_hyperparams(&cfg.hyperparams(), m, n_states, calendar_scaler(train))
}

pub fn train_genformer(
    cfg: &PipelineConfig,
    train: &[Realization],
    val: &[Realization],
    n_states: usize,
) -> Result<(GenFormerModel, TrainReport)> {
    let m = train.first().ok_or(genformer_core::Error::EmptyInput).stage("train-genformer")?.series.dim();
    let (tr, va) = windows(cfg, train, val)?;
    let gc = genformer_config(cfg, m, n_states, train);
    let mut model = GenFormerModel::new(gc, derive_seed(cfg.seed, streams::GENFORMER_INIT)).stage("train-genformer")?;
    let report = model.fit(&tr, &va, &cfg.genformer_train()).stage("train-genformer")?;
    Ok((model, report))
}

/// Realization index and start column of an initial subsequence.
pub type InitPick = (usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct Simulation {
    pub picks: Vec<InitPick>,
    pub states: Vec<MarkovStateSequence>,
    /// Encoder-decoder output before post-processing.
    pub raw: Vec<TimeSeriesMatrix>,
}

/// `n_per_init` synthetic realizations from each of `n_init` random
/// subsequences of length `max(p, q_enc_in)`.
pub fn simulate(
    cfg: &PipelineConfig,
    reals: &[Realization],
    states: &StateModel,
    model: &GenFormerModel,
) -> Result<Simulation> {
    let q_max = states.order().max(cfg.q_enc_in);
    let eligible: Vec<usize> = (0..reals.len()).filter(|&k| reals[k].len() >= q_max).collect();
    if eligible.is_empty() {
        return Err(genformer_core::Error::SeriesTooShort { len: reals.iter().map(|r| r.len()).max().unwrap_or(0), required: q_max })
            .stage("simulate");
    }
    let mut rng = seeded(derive_seed(cfg.seed, streams::INIT_PICK));
    let gen_seed = derive_seed(cfg.seed, streams::GENERATE);
    let mut sim = Simulation { picks: Vec::new(), states: Vec::new(), raw: Vec::new() };
    for _ in 0..cfg.n_init {
        let r = eligible[rng.random_range(0..eligible.len())];
        let start = rng.random_range(0..=reals[r].len() - q_max);
        let block = reals[r].slice(start..start + q_max);
        let enc = block.slice(q_max - cfg.q_enc_in..q_max);
        let future_t = block.series.stamps().continuation(cfg.n_sim);
        for _ in 0..cfg.n_per_init {
            let k = sim.states.len() as u64;
            let seq = states.generate(block.states.states(), block.series.stamps(), cfg.n_sim, derive_seed(gen_seed, k))?;
            let x = model
                .infer_autoregressive(enc.series.data(), enc.states.states(), enc.series.stamps(), seq.states(), &future_t)
                .stage("simulate")?;
            sim.raw.push(TimeSeriesMatrix::new(x, Space::Gaussian, future_t.clone()).stage("simulate")?);
            sim.states.push(seq);
            sim.picks.push((r, start));
        }
    }
    Ok(sim)
}

/// Cuts `joined` back into pieces shaped like `like`.
pub fn split_like(joined: &TimeSeriesMatrix, like: &[TimeSeriesMatrix]) -> Result<Vec<TimeSeriesMatrix>> {
    let mut off = 0;
    let mut out = Vec::with_capacity(like.len());
    for l in like {
        let data = joined.data().slice_cols(off, l.len());
        out.push(TimeSeriesMatrix::new(data, joined.space(), l.stamps().clone())?);
        off += l.len();
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostProcessed {
    pub corrected: Vec<TimeSeriesMatrix>,
    /// Reshuffled standard-Gaussian samples.
    pub gaussian: Vec<TimeSeriesMatrix>,
    pub physical: Vec<TimeSeriesMatrix>,
}

/// Correction and reshuffling act on all synthetic columns pooled.
pub fn postprocess(cfg: &PipelineConfig, raw: &[TimeSeriesMatrix], target: &genformer_core::Tensor, marginals: &MarginalSet) -> Result<PostProcessed> {
    let joined = concat_realizations(raw).stage("postprocess")?;
    let corrected = correlation_correct(&joined, target, cfg.correction).stage("correlation-correct")?;
    let std = MarginalSet::uniform(MarginalModel::StandardGaussian, joined.dim());
    let shuffled = reshuffle(&corrected, &std, derive_seed(cfg.seed, streams::RESHUFFLE)).stage("reshuffle")?;
    let physical = marginals.from_gaussian(&shuffled).stage("from-gaussian")?;
    Ok(PostProcessed {
        corrected: split_like(&corrected, raw)?,
        gaussian: split_like(&shuffled, raw)?,
        physical: split_like(&physical, raw)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub model: TranslationModel,
    pub gaussian: Vec<TimeSeriesMatrix>,
    pub physical: Vec<TimeSeriesMatrix>,
}

pub fn run_baseline(cfg: &PipelineConfig, gaussian: &[TimeSeriesMatrix], marginals: &MarginalSet, stamps: &TimeStampVector, n: usize) -> Result<Baseline> {
    let model = fit_translation(gaussian, cfg.baseline_tau_max, marginals.clone()).stage("baseline")?;
    let g = sample_gaussian(&model, stamps, n, derive_seed(cfg.seed, streams::BASELINE)).stage("baseline")?;
    let physical = g.iter().map(|s| marginals.from_gaussian(s)).collect::<genformer_core::Result<_>>().stage("baseline")?;
    Ok(Baseline { model, gaussian: g, physical })
}

/// Baseline realizations as many and as long as the synthetic ones.
pub fn baseline_for(cfg: &PipelineConfig, obs: &Observations, gaussian: &GaussianData) -> Result<Baseline> {
    let stamps = obs.physical[0].stamps().restamped(cfg.n_sim);
    run_baseline(cfg, &gaussian.gaussian, &gaussian.marginals, &stamps, cfg.n_init * cfg.n_per_init)
}

/// Everything the evaluation reads.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub observations: Observations,
    pub gaussian: GaussianData,
    pub states: StateSpace,
    pub state_model: StateModel,
    pub stategen_report: Option<TrainReport>,
    pub genformer: GenFormerModel,
    pub genformer_report: TrainReport,
    pub simulation: Simulation,
    pub post: PostProcessed,
    pub baseline: Option<Baseline>,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub artifacts: Artifacts,
    pub report: EvaluationReport,
}

pub fn build_artifacts(cfg: &PipelineConfig) -> Result<Artifacts> {
    cfg.validate()?;
    let observations = observe(cfg)?;
    let gaussian = to_gaussian(&observations.physical)?;
    let states = fit_states(cfg, &gaussian.gaussian)?;
    let reals = realizations(&gaussian.gaussian, &states.sequences)?;
    let (train, val) = split(cfg, &reals)?;
    let n_states = states.model.n_states();
    let (state_model, stategen_report) = train_state_model(cfg, &train, &val, n_states, states.model.n_tail)?;
    let (genformer, genformer_report) = train_genformer(cfg, &train, &val, n_states)?;
    let simulation = simulate(cfg, &reals, &state_model, &genformer)?;
    let target = target_correlation(&gaussian.gaussian)?;
    let post = postprocess(cfg, &simulation.raw, &target, &gaussian.marginals)?;
    let baseline = if cfg.baseline { Some(baseline_for(cfg, &observations, &gaussian)?) } else { None };
    Ok(Artifacts { observations, gaussian, states, state_model, stategen_report, genformer, genformer_report, simulation, post, baseline })
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineRun> {
    let artifacts = build_artifacts(cfg)?;
    let report = evaluate(cfg, &artifacts)?;
    Ok(PipelineRun { artifacts, report })
}

pub fn target_correlation(gaussian: &[TimeSeriesMatrix]) -> Result<genformer_core::Tensor> {
    spatial_correlation(&concat_realizations(gaussian).stage("evaluate")?).stage("evaluate")
}

fn pooled_correlation(series: &[TimeSeriesMatrix]) -> Result<genformer_core::Tensor> {
    target_correlation(series)
}

/// Stamp spacing in the series' own unit (hours for calendar stamps).
fn spacing(stamps: &TimeStampVector) -> f64 {
    if let Some(v) = stamps.as_unitless() {
        return if v.len() >= 2 { v[1] - v[0] } else { 1.0 };
    }
    match stamps.as_calendar() {
        Some(c) if c.len() >= 2 => (c[1].hours_since_epoch() - c[0].hours_since_epoch()) as f64,
        _ => 1.0,
    }
}

fn rows_pooled(series: &[TimeSeriesMatrix]) -> Result<Vec<Vec<f64>>> {
    let joined = concat_realizations(series).stage("evaluate")?;
    Ok((0..joined.dim()).map(|i| joined.row(i).to_vec()).collect())
}

/// Downstream samples: pooled per-stamp sums for the SDE, one maximum
/// time-average per `n_sim`-long piece for wind.
fn metric_samples(cfg: &PipelineConfig, series: &[TimeSeriesMatrix]) -> Result<Vec<f64>> {
    match cfg.experiment {
        Experiment::SdeBench => sde_metric_s(series).stage("evaluate"),
        Experiment::WindCsv => {
            let mut out = Vec::new();
            for s in series {
                let pieces = s.len() / cfg.n_sim;
                for k in 0..pieces {
                    out.push(wind_metric_s(&s.slice(k * cfg.n_sim..(k + 1) * cfg.n_sim)).stage("evaluate")?);
                }
            }
            Ok(out)
        }
    }
}

/// Autoregressive reconstruction of every long-enough validation realization.
pub fn tracking(cfg: &PipelineConfig, model: &GenFormerModel, val: &[Realization], validation_loss: f64) -> Result<Option<Tracking>> {
    let (mut total, mut count, mut used) = (0.0, 0usize, 0usize);
    for r in val.iter().filter(|r| r.len() >= cfg.q_enc_in + cfg.q_out) {
        let q = cfg.q_enc_in;
        let init = r.slice(0..q);
        let rest = r.slice(q..r.len());
        let pred = model
            .infer_autoregressive(init.series.data(), init.states.states(), init.series.stamps(), rest.states.states(), rest.series.stamps())
            .stage("tracking")?;
        for (a, b) in pred.as_slice().iter().zip(rest.series.data().as_slice()) {
            total += (a - b).abs();
        }
        count += pred.len();
        used += 1;
    }
    Ok((used > 0).then(|| Tracking { realizations: used, columns: count / model.config.m, l1: total / count as f64, validation_loss }))
}

pub fn evaluate(cfg: &PipelineConfig, a: &Artifacts) -> Result<EvaluationReport> {
    let observed = &a.observations.physical;
    let m = observed[0].dim();
    let reals = realizations(&a.gaussian.gaussian, &a.states.sequences)?;
    let (train, val) = split(cfg, &reals)?;
    let (tw, vw) = windows(cfg, &train, &val)?;
    let synth = &a.post.physical;
    let mut notes = Vec::new();

    let target = target_correlation(&a.gaussian.gaussian)?;
    let deep = pooled_correlation(&a.simulation.raw)?;
    let corrected = pooled_correlation(&a.post.corrected)?;
    let last = pooled_correlation(&a.post.gaussian)?;
    let base_c = a.baseline.as_ref().map(|b| pooled_correlation(&b.gaussian)).transpose()?;
    let rel = |est: &genformer_core::Tensor| frobenius_rel_error(&target, est).stage("evaluate");
    let correlation = CorrelationSummary {
        target: matrix(&target),
        deep: matrix(&deep),
        corrected: matrix(&corrected),
        last: matrix(&last),
        baseline: base_c.as_ref().map(matrix),
        deep_error: rel(&deep)?,
        corrected_error: rel(&corrected)?,
        last_error: rel(&last)?,
        baseline_error: base_c.as_ref().map(rel).transpose()?,
    };

    let dt = spacing(observed[0].stamps());
    let acf = |s: &[TimeSeriesMatrix]| autocorr_curves(s, cfg.tau_max).stage("evaluate").map(|t| matrix(&t));
    let sde_oracles = (cfg.experiment == Experiment::SdeBench).then(|| SdeOracles::new(&cfg.sde_params()));
    let autocorrelation = AutocorrSummary {
        lags: cfg.tau_max,
        dt,
        observed: acf(observed)?,
        synthetic: acf(synth)?,
        baseline: a.baseline.as_ref().map(|b| acf(&b.physical)).transpose()?,
        analytic: sde_oracles.map(|o| (0..=cfg.tau_max).map(|t| o.autocorr(t as f64 * dt)).collect()),
    };

    let obs_rows = rows_pooled(observed)?;
    let raw_phys: Vec<TimeSeriesMatrix> =
        a.simulation.raw.iter().map(|s| a.gaussian.marginals.from_gaussian(s)).collect::<genformer_core::Result<_>>().stage("evaluate")?;
    let raw_rows = rows_pooled(&raw_phys)?;
    let last_rows = rows_pooled(synth)?;
    let base_rows = a.baseline.as_ref().map(|b| rows_pooled(&b.physical)).transpose()?;
    let lo = obs_rows.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let hi = obs_rows.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = 0.1 * (hi - lo);
    let grid = linspace(lo - pad, hi + pad, cfg.density_points);
    let v_marginal = sde_oracles.map(|o| o.v_marginal()).transpose().stage("evaluate")?;
    let mut reference = Vec::with_capacity(m);
    for row in &obs_rows {
        reference.push(match v_marginal {
            Some(MarginalModel::Gamma { shape, rate }) => grid.iter().map(|&x| gamma_pdf(x, shape, rate)).collect(),
            _ => kde(row, &grid).stage("evaluate")?,
        });
    }
    let err = |rows: &[Vec<f64>]| -> Result<Vec<f64>> {
        rows.iter()
            .zip(&reference)
            .map(|(r, f)| density_l1_error(r, |x| lookup(&grid, f, x), &grid).stage("evaluate"))
            .collect()
    };
    let density = DensitySummary {
        reference_kind: if v_marginal.is_some() { "analytic".into() } else { "observed_kde".into() },
        raw: raw_rows.iter().map(|r| kde(r, &grid)).collect::<genformer_core::Result<_>>().stage("evaluate")?,
        last: last_rows.iter().map(|r| kde(r, &grid)).collect::<genformer_core::Result<_>>().stage("evaluate")?,
        raw_error: err(&raw_rows)?,
        last_error: err(&last_rows)?,
        baseline_error: base_rows.as_deref().map(err).transpose()?,
        samples_per_location: last_rows[0].len(),
        grid: grid.clone(),
        reference: reference.clone(),
    };

    let observed_freq = state_frequencies(&a.states.sequences).stage("evaluate")?;
    let generated_freq = state_frequencies(&a.simulation.states).stage("evaluate")?;
    let state_frequency = StateFrequency {
        pearson: pearson(&observed_freq, &generated_freq).stage("evaluate")?,
        observed_count: a.states.sequences.iter().map(|s| s.len()).sum(),
        generated_count: a.simulation.states.iter().map(|s| s.len()).sum(),
        observed: observed_freq,
        generated: generated_freq,
    };

    let s_target = metric_samples(cfg, observed)?;
    let s_model = metric_samples(cfg, synth)?;
    let s_base = a.baseline.as_ref().map(|b| metric_samples(cfg, &b.physical)).transpose()?;
    let s_lo = cfg.exceedance_min.unwrap_or_else(|| s_target.iter().copied().fold(f64::INFINITY, f64::min));
    let s_hi = cfg.exceedance_max.unwrap_or_else(|| s_target.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    let s_grid = linspace(s_lo, s_hi, cfg.n_grid);
    let target_curve = exceedance_curve(&s_target, &s_grid).stage("evaluate")?;
    let model_curve = exceedance_curve(&s_model, &s_grid).stage("evaluate")?;
    let base_curve = s_base.as_deref().map(|s| exceedance_curve(s, &s_grid)).transpose().stage("evaluate")?;
    let rp = |c: &genformer_core::metrics::ExceedanceCurve| match return_period_l1_error(&target_curve, c, cfg.min_tail) {
        Ok(e) => Ok(Some(e)),
        Err(genformer_core::Error::EmptyTailGrid) => Ok(None),
        Err(e) => Err(e).stage("evaluate"),
    };
    let genformer_error = rp(&model_curve)?;
    let baseline_error = base_curve.as_ref().map(rp).transpose()?.flatten();
    if genformer_error.is_none() || (base_curve.is_some() && baseline_error.is_none()) {
        notes.push(format!("no grid point has {} exceedances in both curves", cfg.min_tail));
    }
    let exceedance = ExceedanceSummary {
        target: target_curve,
        genformer: model_curve,
        baseline: base_curve,
        min_tail: cfg.min_tail,
        genformer_error,
        baseline_error,
    };

    let gauss_rows = rows_pooled(&a.post.gaussian)?;
    let marginals = MarginalCheck {
        alpha: cfg.ks_alpha,
        locations: gauss_rows.iter().map(|r| ks_test(r, gaussian_cdf, cfg.ks_alpha)).collect::<genformer_core::Result<_>>().stage("evaluate")?,
    };

    let tracking = tracking(cfg, &a.genformer, &val, a.genformer_report.best_val_loss)?;
    if a.baseline.is_some() {
        notes.push("baseline: separable space-time covariance with a location-averaged temporal kernel".into());
    }

    Ok(EvaluationReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        experiment: cfg.experiment,
        config_hash: cfg.hash(),
        seed: cfg.seed,
        streams: stream_seeds(cfg.seed),
        counts: Counts {
            locations: m,
            observed_realizations: observed.len(),
            observed_columns: observed.iter().map(|s| s.len()).sum(),
            train_realizations: train.len(),
            validation_realizations: val.len(),
            train_windows: tw.len(),
            validation_windows: vw.len(),
            n_states: a.states.model.n_states(),
            n_tail: a.states.model.n_tail,
            markov_order: a.state_model.order(),
            synthetic_realizations: synth.len(),
            synthetic_columns: synth.iter().map(|s| s.len()).sum(),
            baseline_realizations: a.baseline.as_ref().map_or(0, |b| b.physical.len()),
        },
        sde_clamp_rate: a.observations.clamp_rate,
        training: TrainingSummary { stategen: a.stategen_report.clone(), genformer: a.genformer_report.clone() },
        tracking,
        correlation,
        autocorrelation,
        density,
        state_frequency,
        exceedance,
        marginals,
        notes,
    })
}

/// Value of a function tabulated on `grid` at one of its nodes.
fn lookup(grid: &[f64], f: &[f64], x: f64) -> f64 {
    grid.iter().position(|g| *g == x).map_or(0.0, |k| f[k])
}
