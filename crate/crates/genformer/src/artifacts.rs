//! Output directory layout shared by `run` and the per-stage commands.
//!
//! ```text
//! out/
//!   config.json  manifest.json  marginals.json
//!   observed/    real_*.csv  meta.json
//!   states/      cluster_model.json  states_*.csv
//!   stategen/    transition.json | checkpoint
//!   genformer/   checkpoint
//!   synthetic/   raw/ corrected/ gaussian/ physical/ states/ picks.json
//!   baseline/    gaussian/ physical/ model.json
//!   report.json  figures/
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use genformer_core::baseline::TranslationModel;
use genformer_core::clustering::ClusterModel;
use genformer_core::marginals::MarginalSet;
use genformer_core::markov::TransitionMatrix;
use genformer_core::neural::train::TrainReport;
use genformer_core::seq2seq::{GenFormerConfig, GenFormerModel};
use genformer_core::series::Space;
use genformer_core::stategen::{StateGenConfig, StateGenModel};
use genformer_core::wind::PreprocessRecord;

use crate::checkpoint;
use crate::config::PipelineConfig;
use crate::error::{format_err, Result};
use crate::io::{read_json, read_realizations, read_state_sequences, write_json, write_realizations, write_state_sequences};
use crate::pipeline::{
    stream_seeds, to_gaussian, Artifacts, Baseline, GaussianData, InitPick, Observations, PipelineRun, PostProcessed, Simulation, StateModel,
    StateSpace,
};
use crate::report::write_report;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: String,
    pub experiment: crate::config::Experiment,
    pub config_hash: String,
    pub seed: u64,
    pub streams: BTreeMap<String, u64>,
}

pub fn save_config(dir: &Path, cfg: &PipelineConfig) -> Result<()> {
    write_json(&dir.join("config.json"), cfg)?;
    let manifest = RunManifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        experiment: cfg.experiment,
        config_hash: cfg.hash(),
        seed: cfg.seed,
        streams: stream_seeds(cfg.seed),
    };
    write_json(&dir.join("manifest.json"), &manifest)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ObservedMeta {
    clamp_rate: Option<f64>,
    preprocess: Option<PreprocessRecord>,
}

pub fn save_observations(dir: &Path, obs: &Observations) -> Result<()> {
    let d = dir.join("observed");
    write_realizations(&d, &obs.physical)?;
    write_json(&d.join("meta.json"), &ObservedMeta { clamp_rate: obs.clamp_rate, preprocess: obs.preprocess.clone() })
}

pub fn load_observations(dir: &Path) -> Result<Observations> {
    let d = dir.join("observed");
    let meta: ObservedMeta = read_json(&d.join("meta.json"))?;
    let physical = read_realizations(&d, Space::Physical)?;
    if physical.is_empty() {
        return Err(format_err(&d, "no observed realizations"));
    }
    Ok(Observations { physical, preprocess: meta.preprocess, clamp_rate: meta.clamp_rate })
}

pub fn save_states(dir: &Path, marginals: &MarginalSet, states: &StateSpace) -> Result<()> {
    write_json(&dir.join("marginals.json"), marginals)?;
    let d = dir.join("states");
    write_json(&d.join("cluster_model.json"), &states.model)?;
    write_state_sequences(&d, &states.sequences)
}

pub fn load_states(dir: &Path) -> Result<(MarginalSet, StateSpace)> {
    let marginals: MarginalSet = read_json(&dir.join("marginals.json"))?;
    let d = dir.join("states");
    let model: ClusterModel = read_json(&d.join("cluster_model.json"))?;
    let sequences = read_state_sequences(&d, model.n_states())?;
    Ok((marginals, StateSpace { model, sequences }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StateGenMeta {
    config: StateGenConfig,
    report: TrainReport,
}

pub fn save_state_model(dir: &Path, model: &StateModel, report: Option<&TrainReport>) -> Result<()> {
    let d = dir.join("stategen");
    match (model, report) {
        (StateModel::Chain(t), _) => write_json(&d.join("transition.json"), t),
        (StateModel::Generator(g), Some(r)) => checkpoint::save(&d, &g.store, &StateGenMeta { config: g.config.clone(), report: r.clone() }),
        (StateModel::Generator(_), None) => Err(format_err(&d, "trained state generator without a report")),
    }
}

pub fn load_state_model(dir: &Path) -> Result<(StateModel, Option<TrainReport>)> {
    let d = dir.join("stategen");
    let chain = d.join("transition.json");
    if chain.exists() {
        let t: TransitionMatrix = read_json(&chain)?;
        return Ok((StateModel::Chain(t), None));
    }
    let meta: StateGenMeta = checkpoint::read_meta(&d)?;
    let mut g = StateGenModel::new(meta.config, 0)?;
    checkpoint::load(&d, &mut g.store)?;
    Ok((StateModel::Generator(Box::new(g)), Some(meta.report)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct GenFormerMeta {
    config: GenFormerConfig,
    report: TrainReport,
}

pub fn save_genformer(dir: &Path, model: &GenFormerModel, report: &TrainReport) -> Result<()> {
    checkpoint::save(&dir.join("genformer"), &model.store, &GenFormerMeta { config: model.config.clone(), report: report.clone() })
}

pub fn load_genformer(dir: &Path) -> Result<(GenFormerModel, TrainReport)> {
    let d = dir.join("genformer");
    let meta: GenFormerMeta = checkpoint::read_meta(&d)?;
    let mut model = GenFormerModel::new(meta.config, 0)?;
    checkpoint::load(&d, &mut model.store)?;
    Ok((model, meta.report))
}

pub fn save_simulation(dir: &Path, sim: &Simulation, post: &PostProcessed) -> Result<()> {
    let d = dir.join("synthetic");
    write_realizations(&d.join("raw"), &sim.raw)?;
    write_realizations(&d.join("corrected"), &post.corrected)?;
    write_realizations(&d.join("gaussian"), &post.gaussian)?;
    write_realizations(&d.join("physical"), &post.physical)?;
    write_state_sequences(&d.join("states"), &sim.states)?;
    write_json(&d.join("picks.json"), &sim.picks)
}

pub fn load_simulation(dir: &Path, n_states: usize) -> Result<(Simulation, PostProcessed)> {
    let d = dir.join("synthetic");
    let picks: Vec<InitPick> = read_json(&d.join("picks.json"))?;
    let sim = Simulation {
        picks,
        states: read_state_sequences(&d.join("states"), n_states)?,
        raw: read_realizations(&d.join("raw"), Space::Gaussian)?,
    };
    let post = PostProcessed {
        corrected: read_realizations(&d.join("corrected"), Space::Gaussian)?,
        gaussian: read_realizations(&d.join("gaussian"), Space::Gaussian)?,
        physical: read_realizations(&d.join("physical"), Space::Physical)?,
    };
    if sim.raw.is_empty() || sim.raw.len() != post.physical.len() || sim.raw.len() != sim.states.len() {
        return Err(format_err(&d, "synthetic realizations are incomplete"));
    }
    Ok((sim, post))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct BaselineMeta {
    baseline: String,
    model: TranslationModel,
}

pub fn save_baseline(dir: &Path, b: &Baseline) -> Result<()> {
    let d = dir.join("baseline");
    write_realizations(&d.join("gaussian"), &b.gaussian)?;
    write_realizations(&d.join("physical"), &b.physical)?;
    write_json(&d.join("model.json"), &BaselineMeta { baseline: "translation".into(), model: b.model.clone() })
}

pub fn load_baseline(dir: &Path) -> Result<Option<Baseline>> {
    let d = dir.join("baseline");
    if !d.join("model.json").exists() {
        return Ok(None);
    }
    let meta: BaselineMeta = read_json(&d.join("model.json"))?;
    Ok(Some(Baseline {
        model: meta.model,
        gaussian: read_realizations(&d.join("gaussian"), Space::Gaussian)?,
        physical: read_realizations(&d.join("physical"), Space::Physical)?,
    }))
}

/// Observations with their Gaussian form and Markov states.
pub fn load_prepared(dir: &Path) -> Result<(Observations, GaussianData, StateSpace)> {
    let observations = load_observations(dir)?;
    let (marginals, states) = load_states(dir)?;
    let gaussian = to_gaussian(&observations.physical)?;
    if gaussian.marginals != marginals {
        return Err(format_err(&dir.join("marginals.json"), "marginals do not match the observed data"));
    }
    Ok((observations, gaussian, states))
}

/// Rebuilds the evaluation inputs from a directory written stage by stage.
pub fn load_artifacts(dir: &Path) -> Result<Artifacts> {
    let (observations, gaussian, states) = load_prepared(dir)?;
    let (state_model, stategen_report) = load_state_model(dir)?;
    let (genformer, genformer_report) = load_genformer(dir)?;
    let (simulation, post) = load_simulation(dir, states.model.n_states())?;
    let baseline = load_baseline(dir)?;
    Ok(Artifacts { observations, gaussian, states, state_model, stategen_report, genformer, genformer_report, simulation, post, baseline })
}

pub fn save_artifacts(dir: &Path, a: &Artifacts) -> Result<()> {
    save_observations(dir, &a.observations)?;
    save_states(dir, &a.gaussian.marginals, &a.states)?;
    save_state_model(dir, &a.state_model, a.stategen_report.as_ref())?;
    save_genformer(dir, &a.genformer, &a.genformer_report)?;
    save_simulation(dir, &a.simulation, &a.post)?;
    if let Some(b) = &a.baseline {
        save_baseline(dir, b)?;
    }
    Ok(())
}

pub fn save_report(dir: &Path, a: &Artifacts, report: &crate::report::EvaluationReport) -> Result<()> {
    write_report(dir, report, &a.observations.physical[0], &a.post.physical[0])
}

pub fn write_run(dir: &Path, cfg: &PipelineConfig, run: &PipelineRun) -> Result<()> {
    save_config(dir, cfg)?;
    save_artifacts(dir, &run.artifacts)?;
    save_report(dir, &run.artifacts, &run.report)
}
