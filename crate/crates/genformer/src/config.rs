//! Pipeline configuration: flat JSON keys layered over a named profile.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use genformer_core::neural::train::TrainConfig;
use genformer_core::neural::{AdamConfig, LrSchedule};
use genformer_core::postprocess::CorrectionVariant;
use genformer_core::sdebench::SdeParams;
use genformer_core::series::{HyperParams, SplitMode};
use genformer_core::wind::MOVING_AVERAGE_KERNEL;

use crate::error::{io_err, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    SdeBench,
    WindCsv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Profile {
    /// Single-CPU scale: small models, 100 SDE realizations.
    Desk,
    /// Reported model sizes and data sizes.
    Paper,
    /// Every stage on 2 locations × 64 steps.
    DryRun,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub experiment: Experiment,
    pub seed: u64,

    pub q_enc_in: usize,
    pub q_out: usize,
    pub q_dec_in: usize,
    pub n_clusters: usize,
    /// Clusters reserved for the tail region; the rest cluster the bulk.
    pub n_tail: usize,
    pub d_model: usize,
    pub d_ff: usize,
    pub n_head: usize,
    pub n_enc: usize,
    pub n_dec: usize,
    pub n_markov: usize,
    pub markov_order: usize,
    pub eta: f64,
    pub split_mode: SplitMode,
    pub dropout_rate: f64,
    pub lr: f64,
    /// `[epoch, lr]` pairs, 1-based epochs.
    pub lr_milestones: Vec<(usize, f64)>,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub early_stop_patience: usize,
    pub max_train_steps: Option<u64>,
    /// Keep every `window_stride`-th training window.
    pub window_stride: usize,
    pub stategen_max_epochs: usize,
    pub stategen_lr: f64,
    pub focal_gamma: f64,
    pub tail_class_weight: f64,

    pub sde_theta: f64,
    pub sde_alpha: f64,
    pub sde_beta: f64,
    pub sde_m: usize,
    pub sde_dt: f64,
    pub sde_n_steps: usize,
    pub sde_n_realizations: usize,

    pub wind_csv: Option<PathBuf>,
    pub wind_kernel: usize,

    pub tail_level: f64,
    pub kmeans_restarts: usize,
    pub kmeans_max_iters: usize,

    /// Randomly chosen observed subsequences that start synthetic runs.
    pub n_init: usize,
    /// Synthetic realizations per initial subsequence.
    pub n_per_init: usize,
    /// Length of each synthetic realization.
    pub n_sim: usize,

    pub correction: CorrectionVariant,
    pub baseline: bool,
    /// Lags of the baseline's temporal kernel; zero beyond.
    pub baseline_tau_max: usize,

    pub tau_max: usize,
    pub exceedance_min: Option<f64>,
    pub exceedance_max: Option<f64>,
    pub n_grid: usize,
    pub min_tail: usize,
    pub ks_alpha: f64,
    pub density_points: usize,
}

impl PipelineConfig {
    pub fn profile(profile: Profile, experiment: Experiment) -> Self {
        let base = Self::desk_sde();
        let mut c = match profile {
            Profile::Desk => base,
            Profile::Paper => Self::paper_sde(),
            Profile::DryRun => Self::dry_run_sde(),
        };
        c.experiment = experiment;
        if experiment == Experiment::WindCsv {
            c.apply_wind(profile);
        }
        c
    }

    fn desk_sde() -> Self {
        Self {
            experiment: Experiment::SdeBench,
            seed: 0,
            q_enc_in: 40,
            q_out: 20,
            q_dec_in: 20,
            n_clusters: 30,
            n_tail: 10,
            d_model: 64,
            d_ff: 128,
            n_head: 4,
            n_enc: 1,
            n_dec: 1,
            n_markov: 1,
            markov_order: 3,
            eta: 0.9,
            split_mode: SplitMode::ByRealization,
            dropout_rate: 0.05,
            lr: 1e-3,
            lr_milestones: vec![(5, 3e-4), (7, 1e-4)],
            max_epochs: 8,
            batch_size: 32,
            early_stop_patience: 3,
            max_train_steps: None,
            window_stride: 2,
            stategen_max_epochs: 8,
            stategen_lr: 3e-3,
            focal_gamma: 2.0,
            tail_class_weight: 1.3,
            sde_theta: 40.0,
            sde_alpha: 1.0,
            sde_beta: 1.0,
            sde_m: 3,
            sde_dt: 0.001,
            sde_n_steps: 200,
            sde_n_realizations: 100,
            wind_csv: None,
            wind_kernel: MOVING_AVERAGE_KERNEL,
            tail_level: 0.96,
            kmeans_restarts: 5,
            kmeans_max_iters: 100,
            n_init: 20,
            n_per_init: 5,
            n_sim: 200,
            correction: CorrectionVariant::Inverse,
            baseline: true,
            baseline_tau_max: 100,
            tau_max: 25,
            exceedance_min: Some(0.0),
            exceedance_max: Some(25.0),
            n_grid: 101,
            min_tail: 50,
            ks_alpha: 0.01,
            density_points: 241,
        }
    }

    fn paper_sde() -> Self {
        let hp = HyperParams::paper_sde();
        let p = SdeParams::paper();
        Self {
            n_clusters: hp.n_clusters,
            n_tail: 100,
            d_model: hp.d_model,
            d_ff: hp.d_ff,
            n_head: hp.n_head,
            n_enc: hp.n_enc,
            n_dec: hp.n_dec,
            n_markov: hp.n_markov,
            markov_order: hp.markov_order,
            lr: hp.lr_schedule.initial,
            lr_milestones: hp.lr_schedule.milestones.clone(),
            max_epochs: hp.max_epochs,
            batch_size: hp.batch_size,
            window_stride: 1,
            stategen_max_epochs: hp.max_epochs,
            stategen_lr: hp.lr_schedule.initial,
            sde_n_realizations: p.n_realizations,
            n_init: 1000,
            ..Self::desk_sde()
        }
    }

    fn dry_run_sde() -> Self {
        Self {
            q_enc_in: 8,
            q_out: 4,
            q_dec_in: 4,
            n_clusters: 6,
            n_tail: 2,
            d_model: 8,
            d_ff: 16,
            n_head: 2,
            markov_order: 2,
            lr_milestones: Vec::new(),
            max_epochs: 2,
            batch_size: 16,
            window_stride: 1,
            stategen_max_epochs: 2,
            sde_m: 2,
            sde_n_steps: 64,
            sde_n_realizations: 20,
            kmeans_restarts: 2,
            n_init: 4,
            n_per_init: 5,
            n_sim: 64,
            tau_max: 5,
            // every lag of the 64-step horizon; cutting the kernel short leaves it indefinite
            baseline_tau_max: 63,
            n_grid: 51,
            min_tail: 5,
            density_points: 61,
            ..Self::desk_sde()
        }
    }

    fn apply_wind(&mut self, profile: Profile) {
        let hp = HyperParams::paper_wind();
        self.split_mode = SplitMode::ByTime;
        self.q_enc_in = hp.q_enc_in;
        self.q_out = hp.q_out;
        self.q_dec_in = hp.q_dec_in;
        self.tail_class_weight = hp.tail_class_weight;
        self.n_sim = 672;
        self.tau_max = 48;
        self.baseline_tau_max = 168;
        self.exceedance_min = None;
        self.exceedance_max = None;
        self.min_tail = 5;
        match profile {
            Profile::Paper => {
                self.d_model = hp.d_model;
                self.n_enc = hp.n_enc;
                self.n_dec = hp.n_dec;
                self.markov_order = hp.markov_order;
            }
            Profile::Desk => {
                self.markov_order = 6;
            }
            Profile::DryRun => {
                self.q_enc_in = 8;
                self.q_out = 4;
                self.q_dec_in = 4;
                self.n_sim = 64;
                self.tau_max = 5;
                self.baseline_tau_max = 63;
                self.wind_kernel = 24;
            }
        }
    }

    /// Profile defaults overlaid with the keys present in a JSON file.
    pub fn load(path: &Path, profile: Profile) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        Self::from_json_str(&text, profile)
    }

    pub fn from_json_str(text: &str, profile: Profile) -> Result<Self> {
        let overrides: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let serde_json::Value::Object(overrides) = overrides else {
            return Err(Error::Config("config must be a JSON object".into()));
        };
        let experiment = match overrides.get("experiment") {
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| Error::Config(e.to_string()))?,
            None => Experiment::SdeBench,
        };
        let base = Self::profile(profile, experiment);
        let mut merged = serde_json::to_value(&base).map_err(|e| Error::Config(e.to_string()))?;
        let obj = merged.as_object_mut().expect("config serializes to an object");
        for (k, v) in overrides {
            if !obj.contains_key(&k) {
                return Err(Error::Config(format!("unknown key `{k}`")));
            }
            obj.insert(k, v);
        }
        let cfg: Self = serde_json::from_value(merged).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.hyperparams().validate()?;
        if self.experiment == Experiment::SdeBench {
            self.sde_params().validate()?;
        }
        if self.n_tail >= self.n_clusters {
            return Err(Error::Config("n_tail must leave at least one bulk cluster".into()));
        }
        let positive = [
            ("window_stride", self.window_stride),
            ("stategen_max_epochs", self.stategen_max_epochs),
            ("n_init", self.n_init),
            ("n_per_init", self.n_per_init),
            ("n_sim", self.n_sim),
            ("n_grid", self.n_grid),
            ("density_points", self.density_points),
            ("kmeans_restarts", self.kmeans_restarts),
        ];
        if let Some((k, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{k} must be positive")));
        }
        if self.experiment == Experiment::WindCsv && self.wind_csv.is_none() {
            return Err(Error::Config("wind_csv is required for the wind experiment".into()));
        }
        if !(self.ks_alpha > 0.0 && self.ks_alpha < 1.0) {
            return Err(Error::Config("ks_alpha must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn hyperparams(&self) -> HyperParams {
        HyperParams {
            q_enc_in: self.q_enc_in,
            q_out: self.q_out,
            q_dec_in: self.q_dec_in,
            n_clusters: self.n_clusters,
            d_model: self.d_model,
            d_ff: self.d_ff,
            n_head: self.n_head,
            n_enc: self.n_enc,
            n_dec: self.n_dec,
            n_markov: self.n_markov,
            markov_order: self.markov_order,
            eta: self.eta,
            dropout_rate: self.dropout_rate,
            lr_schedule: LrSchedule { initial: self.lr, milestones: self.lr_milestones.clone() },
            max_epochs: self.max_epochs,
            batch_size: self.batch_size,
            early_stop_patience: self.early_stop_patience,
            focal_gamma: self.focal_gamma,
            tail_class_weight: self.tail_class_weight,
        }
    }

    pub fn sde_params(&self) -> SdeParams {
        SdeParams {
            theta: self.sde_theta,
            alpha: self.sde_alpha,
            beta: self.sde_beta,
            m: self.sde_m,
            dt: self.sde_dt,
            n_steps: self.sde_n_steps,
            n_realizations: self.sde_n_realizations,
            seed: genformer_core::rng::derive_seed(self.seed, crate::pipeline::streams::SDE),
        }
    }

    pub fn genformer_train(&self) -> TrainConfig {
        TrainConfig {
            schedule: LrSchedule { initial: self.lr, milestones: self.lr_milestones.clone() },
            max_epochs: self.max_epochs,
            batch_size: self.batch_size,
            patience: self.early_stop_patience,
            seed: genformer_core::rng::derive_seed(self.seed, crate::pipeline::streams::GENFORMER_TRAIN),
            max_steps: self.max_train_steps,
            adam: AdamConfig::default(),
        }
    }

    /// Milestones scale with the state-generator learning rate.
    pub fn stategen_train(&self) -> TrainConfig {
        let ratio = self.stategen_lr / self.lr;
        TrainConfig {
            schedule: LrSchedule {
                initial: self.stategen_lr,
                milestones: self.lr_milestones.iter().map(|(e, lr)| (*e, lr * ratio)).collect(),
            },
            max_epochs: self.stategen_max_epochs,
            batch_size: self.batch_size,
            patience: self.early_stop_patience,
            seed: genformer_core::rng::derive_seed(self.seed, crate::pipeline::streams::STATEGEN_TRAIN),
            max_steps: self.max_train_steps,
            adam: AdamConfig::default(),
        }
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical_json().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
