//! Command line: one subcommand per pipeline stage plus `run`.
//!
//! Stages communicate through the output directory, so
//! `sde-gen → fit-states → train-stategen → train-genformer → simulate →
//! baseline → evaluate` produces the same files as a single `run`.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::artifacts::{
    load_artifacts, load_genformer, load_observations, load_prepared, load_state_model, save_baseline, save_config,
    save_genformer, save_observations, save_report, save_simulation, save_state_model, save_states, write_run,
};
use crate::config::{Experiment, PipelineConfig, Profile};
use crate::error::{Error, Result};
use crate::io::read_json;
use crate::pipeline::{
    baseline_for, evaluate, fit_states, observe, postprocess, realizations, run_pipeline, simulate, split, target_correlation,
    to_gaussian, train_genformer, train_state_model,
};
use crate::report::EvaluationReport;

#[derive(Debug, Parser)]
#[command(name = "genformer", version, about = "Multi-location stochastic time-series generator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON file of flat config keys overriding the profile.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum, default_value = "desk")]
    pub profile: Profile,
    /// Hourly station CSV; selects the wind experiment.
    #[arg(long, global = true)]
    pub wind_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Simulate the coupled SDE benchmark as observed data.
    SdeGen,
    /// Read a station CSV and smooth it into observed data.
    Preprocess,
    /// Fit marginals and the Markov state space, assign states.
    FitStates,
    /// Train the state generator (or count a first-order chain).
    TrainStategen,
    /// Train the encoder-decoder.
    TrainGenformer,
    /// Generate, correlation-correct and reshuffle synthetic realizations.
    Simulate,
    /// Fit and sample the translation-process baseline.
    Baseline,
    /// Compute the evaluation report and figure tables.
    Evaluate,
    /// Print a summary of an existing report.
    Report,
    /// Every stage in order.
    Run,
}

impl Common {
    /// Explicit `--config`, else a `config.json` left by an earlier stage,
    /// else the profile; `--seed` and `--wind-csv` apply last.
    pub fn resolve(&self, fresh: bool) -> Result<PipelineConfig> {
        let saved = self.out.join("config.json");
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p, self.profile)?,
            None if !fresh && saved.exists() => PipelineConfig::load(&saved, self.profile)?,
            None => {
                let exp = if self.wind_csv.is_some() { Experiment::WindCsv } else { Experiment::SdeBench };
                let mut c = PipelineConfig::profile(self.profile, exp);
                c.wind_csv = self.wind_csv.clone();
                c
            }
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(w) = &self.wind_csv {
            if cfg.experiment != Experiment::WindCsv {
                return Err(Error::Config("--wind-csv given but the config selects the SDE experiment".into()));
            }
            cfg.wind_csv = Some(w.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn require(cfg: &PipelineConfig, exp: Experiment, cmd: &str) -> Result<()> {
    if cfg.experiment != exp {
        return Err(Error::Config(format!("`{cmd}` needs the {exp:?} experiment")));
    }
    Ok(())
}

/// Runs one command and returns the text to print.
pub fn execute(cli: &Cli) -> Result<String> {
    let c = &cli.common;
    let out = &c.out;
    let fresh = matches!(cli.command, Command::SdeGen | Command::Preprocess | Command::Run);
    if cli.command == Command::Report {
        let report: EvaluationReport = read_json(&out.join("report.json"))?;
        return Ok(summary(&report));
    }
    let cfg = c.resolve(fresh)?;
    match cli.command {
        Command::SdeGen | Command::Preprocess => {
            let (exp, name) = match cli.command {
                Command::SdeGen => (Experiment::SdeBench, "sde-gen"),
                _ => (Experiment::WindCsv, "preprocess"),
            };
            require(&cfg, exp, name)?;
            let obs = observe(&cfg)?;
            save_config(out, &cfg)?;
            save_observations(out, &obs)?;
            let cols: usize = obs.physical.iter().map(|s| s.len()).sum();
            Ok(format!("{} realizations, {} locations, {cols} columns", obs.physical.len(), obs.physical[0].dim()))
        }
        Command::FitStates => {
            let obs = load_observations(out)?;
            let g = to_gaussian(&obs.physical)?;
            let states = fit_states(&cfg, &g.gaussian)?;
            save_states(out, &g.marginals, &states)?;
            Ok(format!("{} states ({} tail)", states.model.n_states(), states.model.n_tail))
        }
        Command::TrainStategen => {
            let (_, g, states) = load_prepared(out)?;
            let reals = realizations(&g.gaussian, &states.sequences)?;
            let (train, val) = split(&cfg, &reals)?;
            let (model, report) = train_state_model(&cfg, &train, &val, states.model.n_states(), states.model.n_tail)?;
            save_state_model(out, &model, report.as_ref())?;
            Ok(match report {
                Some(r) => format!("state generator: {} epochs, best validation loss {:.6}", r.epochs.len(), r.best_val_loss),
                None => "first-order transition matrix estimated".to_string(),
            })
        }
        Command::TrainGenformer => {
            let (_, g, states) = load_prepared(out)?;
            let reals = realizations(&g.gaussian, &states.sequences)?;
            let (train, val) = split(&cfg, &reals)?;
            let (model, report) = train_genformer(&cfg, &train, &val, states.model.n_states())?;
            save_genformer(out, &model, &report)?;
            Ok(format!("encoder-decoder: {} epochs, best validation loss {:.6}", report.epochs.len(), report.best_val_loss))
        }
        Command::Simulate => {
            let (_, g, states) = load_prepared(out)?;
            let reals = realizations(&g.gaussian, &states.sequences)?;
            let (state_model, _) = load_state_model(out)?;
            let (model, _) = load_genformer(out)?;
            let sim = simulate(&cfg, &reals, &state_model, &model)?;
            let post = postprocess(&cfg, &sim.raw, &target_correlation(&g.gaussian)?, &g.marginals)?;
            save_simulation(out, &sim, &post)?;
            Ok(format!("{} synthetic realizations of {} steps", sim.raw.len(), cfg.n_sim))
        }
        Command::Baseline => {
            let (obs, g, _) = load_prepared(out)?;
            let b = baseline_for(&cfg, &obs, &g)?;
            save_baseline(out, &b)?;
            Ok(format!("{} baseline realizations", b.physical.len()))
        }
        Command::Evaluate => {
            let a = load_artifacts(out)?;
            let report = evaluate(&cfg, &a)?;
            save_report(out, &a, &report)?;
            Ok(summary(&report))
        }
        Command::Run => {
            let run = run_pipeline(&cfg)?;
            write_run(out, &cfg, &run)?;
            Ok(summary(&run.report))
        }
        Command::Report => unreachable!(),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or("n/a".to_string(), |x| format!("{x:.4}"))
}

/// Headline numbers of a report, one per line.
pub fn summary(r: &EvaluationReport) -> String {
    let mut s = String::new();
    let c = &r.counts;
    let _ = writeln!(s, "experiment {:?}, seed {}, config {}", r.experiment, r.seed, &r.config_hash[..12]);
    let _ = writeln!(
        s,
        "observed {} x {} locations, synthetic {} x {} columns, {} states",
        c.observed_realizations, c.locations, c.synthetic_realizations, c.synthetic_columns / c.synthetic_realizations.max(1), c.n_states
    );
    let g = &r.training.genformer;
    let _ = writeln!(s, "encoder-decoder: {} epochs, best validation loss {:.5}", g.epochs.len(), g.best_val_loss);
    if let Some(t) = &r.tracking {
        let _ = writeln!(s, "tracking L1 {:.5} over {} validation realizations", t.l1, t.realizations);
    }
    let k = &r.correlation;
    let _ = writeln!(
        s,
        "correlation error: deep {:.4}, corrected {:.4}, final {:.4}, baseline {}",
        k.deep_error, k.corrected_error, k.last_error, opt(k.baseline_error)
    );
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
    let d = &r.density;
    let _ = writeln!(
        s,
        "density L1 (mean over locations): raw {:.4}, final {:.4}, baseline {}",
        mean(&d.raw_error),
        mean(&d.last_error),
        opt(d.baseline_error.as_deref().map(mean))
    );
    let _ = writeln!(s, "state frequency pearson {:.4}", r.state_frequency.pearson);
    let e = &r.exceedance;
    let _ = writeln!(s, "return-period L1: genformer {}, baseline {}", opt(e.genformer_error), opt(e.baseline_error));
    let passed = r.marginals.locations.iter().filter(|k| k.passed).count();
    let _ = writeln!(s, "KS at alpha {}: {passed}/{} locations pass", r.marginals.alpha, r.marginals.locations.len());
    if let Some(rate) = r.sde_clamp_rate {
        let _ = writeln!(s, "SDE clamp rate {rate:.2e}");
    }
    for n in &r.notes {
        let _ = writeln!(s, "note: {n}");
    }
    s
}
