//! Ensemble and baseline evaluation on a shared test set.

use std::path::Path;

use epcnet_core::channel::ChannelSample;
use epcnet_core::ensemble::{CandidateTable, Ensemble, SelectionCounts};
use epcnet_core::rng::{derive_seed, rng_from_seed};
use serde::Serialize;

use crate::config::{ExperimentConfig, Task};
use crate::controllers::run_controller;
use crate::error::{HarnessError, HarnessResult};
use crate::report::{mean_stat, median, quantile_grid, write_cdf_csv, write_csv, write_json, MeanStat};
use crate::streams;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControllerSummary {
    pub name: String,
    #[serde(flatten)]
    pub stat: MeanStat,
    pub median: f64,
    pub non_converged: usize,
    /// Share of samples whose deployed profile meets the rate targets.
    pub feasible_share: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleRow {
    pub m: usize,
    #[serde(flatten)]
    pub stat: MeanStat,
    /// Share of samples where some member alone meets the rate targets.
    pub hit_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub k: usize,
    pub test_samples: usize,
    pub ensemble_size: usize,
    /// Controller every rate-difference CDF is taken against.
    pub reference: String,
    pub controllers: Vec<ControllerSummary>,
    pub mean_vs_m: Vec<EnsembleRow>,
    pub selection_histogram: SelectionCounts,
    #[serde(skip)]
    pub rates: Vec<(String, Vec<f64>)>,
}

impl EvalReport {
    pub fn controller(&self, name: &str) -> Option<&ControllerSummary> {
        self.controllers.iter().find(|c| c.name == name)
    }

    pub fn rates_of(&self, name: &str) -> Option<&[f64]> {
        self.rates.iter().find(|(n, _)| n == name).map(|(_, r)| r.as_slice())
    }
}

pub fn ensemble_name(m: usize) -> String {
    format!("epcnet_m{m}")
}

/// Evaluates every ensemble prefix and each configured baseline.
pub fn evaluate(
    cfg: &ExperimentConfig,
    ensemble: &Ensemble,
    samples: &[ChannelSample],
    seed: u64,
) -> HarnessResult<EvalReport> {
    if ensemble.k() != cfg.k || samples.iter().any(|s| s.k() != cfg.k) {
        return Err(HarnessError::Config(format!(
            "ensemble (K = {}) and test set must match k = {}",
            ensemble.k(),
            cfg.k
        )));
    }
    let qos = match cfg.task {
        Task::SrmQc => cfg.qos(),
        Task::Srm => None,
    };
    if ensemble.objective().qos() != qos.as_ref() {
        return Err(HarnessError::Config("ensemble was trained for a different task or rate targets".into()));
    }
    let table = CandidateTable::build(ensemble, samples)?;
    let m_max = ensemble.len();
    let mut rates: Vec<(String, Vec<f64>)> = Vec::new();
    let mut controllers = Vec::new();
    let mut mean_vs_m = Vec::new();
    for m in 1..=m_max {
        let r = table.selected_rates(m)?;
        let hit_rate = match qos {
            Some(_) => Some(table.hit_rate(m)?),
            None => None,
        };
        mean_vs_m.push(EnsembleRow { m, stat: mean_stat(&r), hit_rate });
        controllers.push(ControllerSummary {
            name: ensemble_name(m),
            stat: mean_stat(&r),
            median: median(&r),
            non_converged: 0,
            // Candidates compete only when feasible and the fallback is feasible.
            feasible_share: qos.as_ref().map(|_| 1.0),
        });
        rates.push((ensemble_name(m), r));
    }
    for (idx, name) in cfg.baselines.controllers.iter().enumerate() {
        let run = run_controller(
            name,
            samples,
            cfg.pmax,
            qos.as_ref(),
            &cfg.baselines,
            derive_seed(seed, streams::EVAL_CONTROLLERS + idx as u64),
        )?;
        controllers.push(ControllerSummary {
            name: name.clone(),
            stat: mean_stat(&run.rates),
            median: median(&run.rates),
            non_converged: run.non_converged,
            feasible_share: run.feasible.map(|f| f as f64 / samples.len().max(1) as f64),
        });
        rates.push((name.clone(), run.rates));
    }
    let selection_histogram = table.selection_histogram(m_max, &mut rng_from_seed(derive_seed(seed, streams::EVAL_TIES)))?;
    Ok(EvalReport {
        k: cfg.k,
        test_samples: samples.len(),
        ensemble_size: m_max,
        reference: ensemble_name(m_max),
        controllers,
        mean_vs_m,
        selection_histogram,
        rates,
    })
}

/// `eval_summary.json`, `mean_vs_m.csv`, `rate_cdf.csv` and `diff_cdf.csv`
/// (reference minus each controller, per sample).
pub fn write_eval(dir: &Path, report: &EvalReport) -> HarnessResult<()> {
    write_json(&dir.join("eval_summary.json"), report)?;
    let header = ["m", "mean", "std_error", "hit_rate"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = report
        .mean_vs_m
        .iter()
        .map(|r| {
            vec![
                r.m.to_string(),
                r.stat.mean.to_string(),
                r.stat.std_error.to_string(),
                r.hit_rate.map_or(String::new(), |h| h.to_string()),
            ]
        })
        .collect();
    write_csv(&dir.join("mean_vs_m.csv"), &header, &rows)?;
    let cdfs: Vec<(String, Vec<f64>)> = report.rates.iter().map(|(n, r)| (n.clone(), quantile_grid(r))).collect();
    write_cdf_csv(&dir.join("rate_cdf.csv"), &cdfs)?;
    let reference = report.rates_of(&report.reference).expect("reference is evaluated");
    let diffs: Vec<(String, Vec<f64>)> = report
        .rates
        .iter()
        .map(|(n, r)| {
            let d: Vec<f64> = reference.iter().zip(r).map(|(a, b)| a - b).collect();
            (n.clone(), quantile_grid(&d))
        })
        .collect();
    write_cdf_csv(&dir.join("diff_cdf.csv"), &diffs)
}

pub fn cmd_eval(
    cfg: &ExperimentConfig,
    manifest: &Path,
    dataset: &Path,
    seed: u64,
) -> HarnessResult<EvalReport> {
    let (ensemble, _) = epcnet_core::io::load_ensemble(manifest)?;
    let ds = epcnet_core::io::read_dataset(dataset)?;
    crate::generate::check_dataset(cfg, &ds, dataset)?;
    let report = evaluate(cfg, &ensemble, &ds.samples, seed)?;
    write_eval(&cfg.output_dir, &report)?;
    Ok(report)
}
