//! Single-threaded wall-clock comparison of controllers.
//!
//! Absolute times depend on the machine; only the ordering is meaningful.

use std::path::Path;
use std::time::Instant;

use epcnet_core::channel::ChannelSample;
use epcnet_core::ensemble::Ensemble;
use epcnet_core::pcnet::PcnetModel;
use epcnet_core::rng::{derive_seed, rng_from_seed};
use serde::Serialize;

use crate::config::{ExperimentConfig, Task};
use crate::controllers::time_controller;
use crate::error::HarnessResult;
use crate::generate::draw_dataset;
use crate::report::{write_csv, write_json};
use crate::streams;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub controller: String,
    pub repeat: usize,
    pub samples: usize,
    pub seconds: f64,
    pub seconds_per_10k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Environment {
    pub os: &'static str,
    pub arch: &'static str,
    pub available_parallelism: usize,
    /// Every controller runs on the calling thread only.
    pub single_threaded: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub k: usize,
    pub environment: Environment,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    /// Mean seconds per 10^4 samples over repeats.
    pub fn per_10k(&self, controller: &str) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter(|r| r.controller == controller).map(|r| r.seconds_per_10k).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }
}

/// Per-sample PCNet inference, the deployment pattern being timed.
fn time_network(models: &[PcnetModel], samples: &[ChannelSample]) -> HarnessResult<f64> {
    let start = Instant::now();
    for s in samples {
        for m in models {
            std::hint::black_box(m.infer_batch(std::slice::from_ref(s))?);
        }
    }
    Ok(start.elapsed().as_secs_f64())
}

/// Times `pcnet` (first member, or an untrained network of the configured
/// shape), `epcnet` (all members, when given) and the configured baselines.
pub fn cmd_bench(cfg: &ExperimentConfig, ensemble: Option<&Ensemble>, seed: u64) -> HarnessResult<BenchReport> {
    let mut data_cfg = cfg.clone();
    data_cfg.task = Task::Srm;
    let samples = draw_dataset(&data_cfg, cfg.bench.samples, derive_seed(seed, streams::BENCH))?.samples;
    let qos = match cfg.task {
        Task::SrmQc => cfg.qos(),
        Task::Srm => None,
    };
    let single = match ensemble {
        Some(e) => e.members()[0].clone(),
        None => PcnetModel::new(cfg.k, cfg.variant, &cfg.shape(), cfg.objective(), cfg.pmax, &mut rng_from_seed(seed))?,
    };
    let scale = 1e4 / samples.len().max(1) as f64;
    let mut rows = Vec::new();
    for repeat in 0..cfg.bench.repeats.max(1) {
        let mut push = |controller: &str, seconds: f64| {
            rows.push(BenchRow {
                controller: controller.to_owned(),
                repeat,
                samples: samples.len(),
                seconds,
                seconds_per_10k: seconds * scale,
            })
        };
        for name in &cfg.bench.controllers {
            let seconds = match name.as_str() {
                "pcnet" => time_network(std::slice::from_ref(&single), &samples)?,
                other => {
                    // The QoS-aware controllers only make sense on feasible data.
                    let q = if matches!(other, "fallback" | "grid_oracle") { qos.as_ref() } else { None };
                    time_controller(other, &samples, cfg.pmax, q, &cfg.baselines, derive_seed(seed, streams::BENCH + 1))?
                }
            };
            push(name, seconds);
        }
        if let Some(e) = ensemble {
            push("epcnet", time_network(e.members(), &samples)?);
        }
    }
    let report = BenchReport {
        k: cfg.k,
        environment: Environment {
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            available_parallelism: std::thread::available_parallelism().map_or(1, |n| n.get()),
            single_threaded: true,
        },
        rows,
    };
    write_bench(&cfg.output_dir, &report)?;
    Ok(report)
}

fn write_bench(dir: &Path, report: &BenchReport) -> HarnessResult<()> {
    let header = ["controller", "repeat", "samples", "seconds", "seconds_per_10k"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                r.controller.clone(),
                r.repeat.to_string(),
                r.samples.to_string(),
                r.seconds.to_string(),
                r.seconds_per_10k.to_string(),
            ]
        })
        .collect();
    write_csv(&dir.join("bench.csv"), &header, &rows)?;
    write_json(&dir.join("bench.json"), report)
}
