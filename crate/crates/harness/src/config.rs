//! Experiment configuration, read from a single TOML file.
//!
//! ```toml
//! task = "srm_qc"          # "srm" or "srm_qc"
//! k = 5
//! esn0_db = [10.0]
//! r_min = [0.5, 0.5, 0.5, 0.0, 0.0]
//! lambda = 10.0
//! ensemble_size = 5
//! output_dir = "runs/k5-qc"
//!
//! [channel]
//! kind = "rayleigh"        # or "rician" (k_factor_db) / "geometry" (area_side)
//!
//! [training]
//! iterations = 20000
//! ```
//!
//! Every section and most keys have defaults; see [`ExperimentConfig`].

use std::path::{Path, PathBuf};

use epcnet_core::channel::ChannelModel;
use epcnet_core::metrics::QosSpec;
use epcnet_core::nnet::AdamConfig;
use epcnet_core::pcnet::{default_shape, Objective, TrainConfig, Variant};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, HarnessResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Srm,
    SrmQc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Task,
    pub k: usize,
    #[serde(default = "one")]
    pub pmax: f64,
    /// Levels cycled through while drawing training and test data.
    #[serde(default = "ten_db")]
    pub esn0_db: Vec<f64>,
    #[serde(default = "pcnet")]
    pub variant: Variant,
    /// Full node counts `{l_0, ..., l_L}`; the reference shape for K when absent.
    #[serde(default)]
    pub shape: Option<Vec<usize>>,
    #[serde(default = "one_usize")]
    pub ensemble_size: usize,
    /// Per-user minimum rates (bits); required for `srm_qc`.
    #[serde(default)]
    pub r_min: Option<Vec<f64>>,
    #[serde(default = "ten")]
    pub lambda: f64,
    /// Master seed; `--seed` on the command line takes precedence.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub channel: ChannelSection,
    #[serde(default)]
    pub training: TrainingSection,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub baselines: BaselineSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub landscape: LandscapeSection,
    #[serde(default)]
    pub bench: BenchSection,
}

fn one() -> f64 {
    1.0
}
fn ten() -> f64 {
    10.0
}
fn one_usize() -> usize {
    1
}
fn ten_db() -> Vec<f64> {
    vec![10.0]
}
fn pcnet() -> Variant {
    Variant::Pcnet
}
fn default_output() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelSection {
    #[default]
    Rayleigh,
    Rician {
        #[serde(default)]
        k_factor_db: f64,
    },
    Geometry {
        #[serde(default = "ten")]
        area_side: f64,
    },
}

impl ChannelSection {
    pub fn model(&self) -> ChannelModel {
        match *self {
            ChannelSection::Rayleigh => ChannelModel::Rayleigh,
            ChannelSection::Rician { k_factor_db } => ChannelModel::Rician { k_factor_db },
            ChannelSection::Geometry { area_side } => ChannelModel::Geometry { area_side },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub iterations: usize,
    pub batch_size: usize,
    pub validation_every: usize,
    pub validation_size: usize,
    pub learning_rate: f64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        Self { iterations: 20_000, batch_size: 1000, validation_every: 50, validation_size: 1000, learning_rate: 1e-3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub test_size: usize,
    /// Abort generation when more than this share of draws is infeasible.
    pub max_rejection_rate: f64,
}

impl Default for DataSection {
    fn default() -> Self {
        Self { test_size: 10_000, max_rejection_rate: 0.999 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    /// Any of `wmmse`, `wmmse_full`, `wmmse_multi`, `gbpc`, `optbpc`, `rr`,
    /// `full_power`, `fallback`, `grid_oracle`.
    pub controllers: Vec<String>,
    pub wmmse_inits: usize,
    pub stop_tol: f64,
    pub max_iterations: usize,
    pub grid_points: usize,
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self {
            controllers: vec!["wmmse".into(), "gbpc".into()],
            wmmse_inits: 10,
            stop_tol: epcnet_core::baselines::DEFAULT_STOP_TOL,
            max_iterations: epcnet_core::baselines::DEFAULT_WMMSE_MAX_ITERATIONS,
            grid_points: 51,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub lambdas: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { lambdas: vec![0.0, 1.0, 10.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LandscapeSection {
    pub esn0_db: Vec<f64>,
    pub samples: usize,
    pub runs: usize,
}

impl Default for LandscapeSection {
    fn default() -> Self {
        Self { esn0_db: vec![0.0, 5.0, 10.0], samples: 1000, runs: 100 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    pub samples: usize,
    pub controllers: Vec<String>,
    pub repeats: usize,
}

impl Default for BenchSection {
    fn default() -> Self {
        Self {
            samples: 10_000,
            controllers: vec!["pcnet".into(), "wmmse".into(), "gbpc".into(), "rr".into()],
            repeats: 1,
        }
    }
}

pub const KNOWN_CONTROLLERS: &[&str] =
    &["wmmse", "wmmse_full", "wmmse_multi", "gbpc", "optbpc", "rr", "full_power", "fallback", "grid_oracle"];

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> HarnessResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> HarnessResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> HarnessResult<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if !(self.pmax.is_finite() && self.pmax > 0.0) {
            return bad(format!("pmax must be positive, got {}", self.pmax));
        }
        if self.esn0_db.is_empty() || self.esn0_db.iter().any(|d| !d.is_finite()) {
            return bad("esn0_db must list at least one finite level".into());
        }
        if self.variant == Variant::Pcnet && self.esn0_db.len() != 1 {
            return bad("the pcnet variant is trained at a single EsN0 level; use pcnet_plus for a range".into());
        }
        if self.ensemble_size == 0 {
            return bad("ensemble_size must be at least 1".into());
        }
        self.channel.model().validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        match (self.task, &self.r_min) {
            (Task::SrmQc, None) => return bad("srm_qc needs r_min".into()),
            (Task::SrmQc, Some(r)) if r.len() != self.k => {
                return bad(format!("r_min has {} entries for k = {}", r.len(), self.k))
            }
            _ => {}
        }
        if let Some(r) = &self.r_min {
            QosSpec::new(r.clone()).map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        let shape = self.shape();
        if shape.first() != Some(&self.variant.input_dim(self.k)) || shape.last() != Some(&self.k) || shape.len() < 2 {
            return bad(format!(
                "shape {shape:?} must start at {} inputs and end at k = {}",
                self.variant.input_dim(self.k),
                self.k
            ));
        }
        self.train_config(0).validate(self.variant).map_err(|e| HarnessError::Config(e.to_string()))?;
        for c in self.baselines.controllers.iter().chain(self.bench.controllers.iter().filter(|c| *c != "pcnet")) {
            if !KNOWN_CONTROLLERS.contains(&c.as_str()) {
                return bad(format!("unknown controller {c:?}; known: {KNOWN_CONTROLLERS:?}"));
            }
        }
        if self.baselines.wmmse_inits == 0 || self.baselines.max_iterations == 0 || !(self.baselines.stop_tol > 0.0) {
            return bad("baseline settings must be positive".into());
        }
        if !(0.0..1.0).contains(&self.data.max_rejection_rate) {
            return bad("max_rejection_rate must be in [0, 1)".into());
        }
        if self.landscape.runs < 2 {
            return bad("landscape runs must be at least 2".into());
        }
        Ok(())
    }

    pub fn shape(&self) -> Vec<usize> {
        self.shape.clone().unwrap_or_else(|| default_shape(self.k, self.variant))
    }

    pub fn qos(&self) -> Option<QosSpec> {
        self.r_min.as_ref().map(|r| QosSpec::new(r.clone()).expect("validated"))
    }

    pub fn objective(&self) -> Objective {
        self.objective_with_lambda(self.lambda)
    }

    pub fn objective_with_lambda(&self, lambda: f64) -> Objective {
        match self.task {
            Task::Srm => Objective::Srm,
            Task::SrmQc => Objective::SrmQc { qos: self.qos().expect("validated"), lambda },
        }
    }

    /// Training recipe for one member; `seed` drives its data streams.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        let t = &self.training;
        TrainConfig {
            batch_size: t.batch_size,
            total_iterations: t.iterations,
            validation_every: t.validation_every,
            validation_set_size: t.validation_size,
            esn0_db_set: self.esn0_db.clone(),
            seed,
            adam: AdamConfig { learning_rate: t.learning_rate, ..AdamConfig::default() },
        }
    }

    pub fn resolve_seed(&self, cli: Option<u64>) -> HarnessResult<u64> {
        cli.or(self.seed).ok_or_else(|| HarnessError::Config("a seed is required (--seed)".into()))
    }
}
