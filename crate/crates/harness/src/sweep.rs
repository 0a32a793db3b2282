//! Penalty-weight sweep for minimum-rate training.

use epcnet_core::channel::ChannelSample;
use epcnet_core::ensemble::CandidateTable;
use serde::Serialize;

use crate::config::{ExperimentConfig, Task};
use crate::error::{HarnessError, HarnessResult};
use crate::report::{mean_stat, write_csv, write_json};
use crate::train::{save_members, train_members, write_histories};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub m: usize,
    pub mean: f64,
    pub std_error: f64,
    pub hit_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn row(&self, lambda: f64, m: usize) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.lambda == lambda && r.m == m)
    }
}

/// Trains `ensemble_size` members per penalty weight, every weight using the
/// same member seeds and data streams, and evaluates each prefix on the test
/// set. Models go to `<output_dir>/lambda_<index>/models`.
pub fn cmd_lambda_sweep(
    cfg: &ExperimentConfig,
    lambdas: &[f64],
    test: &[ChannelSample],
    seed: u64,
) -> HarnessResult<SweepReport> {
    if cfg.task != Task::SrmQc {
        return Err(HarnessError::Config("the penalty sweep needs task = \"srm_qc\"".into()));
    }
    if lambdas.is_empty() || lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
        return Err(HarnessError::Config("lambdas must be a non-empty list of non-negative values".into()));
    }
    let mut rows = Vec::new();
    for (idx, &lambda) in lambdas.iter().enumerate() {
        let objective = cfg.objective_with_lambda(lambda);
        let mut members = train_members(cfg, &objective, cfg.ensemble_size, seed)?;
        let dir = cfg.output_dir.join(format!("lambda_{idx}"));
        write_histories(&dir.join("train_history.csv"), &members)?;
        let (_, _, ensemble) = save_members(&dir.join("models"), &mut members)?;
        let table = CandidateTable::build(&ensemble, test)?;
        for m in 1..=ensemble.len() {
            let stat = mean_stat(&table.selected_rates(m)?);
            rows.push(SweepRow { lambda, m, mean: stat.mean, std_error: stat.std_error, hit_rate: table.hit_rate(m)? });
        }
    }
    let report = SweepReport { rows };
    let header = ["lambda", "m", "mean", "std_error", "hit_rate"].map(String::from).to_vec();
    let table: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![r.lambda.to_string(), r.m.to_string(), r.mean.to_string(), r.std_error.to_string(), r.hit_rate.to_string()]
        })
        .collect();
    write_csv(&cfg.output_dir.join("lambda_sweep.csv"), &header, &table)?;
    write_json(&cfg.output_dir.join("lambda_sweep.json"), &report)?;
    Ok(report)
}
