//! Seeded test-set generation with feasibility filtering.

use std::path::{Path, PathBuf};

use epcnet_core::channel::ChannelSource;
use epcnet_core::io::{encode_dataset, sha256_hex, write_bytes, Dataset, DatasetHeader};
use epcnet_core::metrics::{qos_feasibility, qos_screen};
use epcnet_core::rng::{derive_seed, rng_from_seed};
use serde::Serialize;

use crate::config::{ExperimentConfig, Task};
use crate::error::{HarnessError, HarnessResult};
use crate::streams;

/// Draws that must be seen before the rejection-rate guard may abort.
const MIN_DRAWS_BEFORE_ABORT: u64 = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerateReport {
    pub file: PathBuf,
    pub samples: usize,
    pub rejected: u64,
    pub rejection_rate: f64,
    pub sha256: String,
}

/// Draws `n` samples at the configured levels; for minimum-rate tasks only
/// feasible instances are kept.
pub fn draw_dataset(cfg: &ExperimentConfig, n: usize, seed: u64) -> HarnessResult<Dataset> {
    let model = cfg.channel.model();
    let mut source = ChannelSource::new(model, cfg.k, cfg.pmax, &cfg.esn0_db)?;
    let mut rng = rng_from_seed(seed);
    let qos = match cfg.task {
        Task::SrmQc => cfg.qos(),
        Task::Srm => None,
    };
    let mut samples = Vec::with_capacity(n);
    let mut rejected = 0u64;
    while samples.len() < n {
        let s = source.next_sample(&mut rng);
        let keep = match &qos {
            Some(q) => qos_screen(&s, q, cfg.pmax) && qos_feasibility(&s, q, cfg.pmax)?.feasible,
            None => true,
        };
        if keep {
            samples.push(s);
        } else {
            rejected += 1;
            let draws = rejected + samples.len() as u64;
            if draws >= MIN_DRAWS_BEFORE_ABORT && rejected as f64 / draws as f64 > cfg.data.max_rejection_rate {
                return Err(HarnessError::Config(format!(
                    "rate targets {:?} are unsatisfiable in practice: {rejected} of {draws} draws infeasible",
                    cfg.r_min.as_deref().unwrap_or(&[])
                )));
            }
        }
    }
    let header = DatasetHeader {
        k: cfg.k,
        model,
        pmax: cfg.pmax,
        esn0_db: cfg.esn0_db.clone(),
        seed,
        r_min: qos.map(|q| q.r_min().to_vec()).unwrap_or_default(),
        rejected,
    };
    Ok(Dataset { header, samples })
}

/// Writes `<output_dir>/test.epcd` and `generate_report.json`.
pub fn cmd_generate(cfg: &ExperimentConfig, seed: u64) -> HarnessResult<(Dataset, GenerateReport)> {
    let ds = draw_dataset(cfg, cfg.data.test_size, derive_seed(seed, streams::TEST_DATA))?;
    let file = cfg.output_dir.join("test.epcd");
    let bytes = encode_dataset(&ds)?;
    write_bytes(&file, &bytes)?;
    let report = GenerateReport {
        file: PathBuf::from("test.epcd"),
        samples: ds.samples.len(),
        rejected: ds.header.rejected,
        rejection_rate: ds.rejection_rate(),
        sha256: sha256_hex(&bytes),
    };
    crate::report::write_json(&cfg.output_dir.join("generate_report.json"), &report)?;
    Ok((ds, report))
}

/// Checks that a dataset matches the experiment it is used with.
pub fn check_dataset(cfg: &ExperimentConfig, ds: &Dataset, path: &Path) -> HarnessResult<()> {
    if ds.header.k != cfg.k {
        return Err(HarnessError::Config(format!(
            "dataset {} has K = {}, configuration has k = {}",
            path.display(),
            ds.header.k,
            cfg.k
        )));
    }
    if cfg.task == Task::SrmQc {
        let qos = cfg.qos().expect("validated");
        for (idx, s) in ds.samples.iter().enumerate() {
            if !qos_feasibility(s, &qos, cfg.pmax)?.feasible {
                return Err(HarnessError::Config(format!(
                    "dataset {} sample {idx} is infeasible for r_min {:?}",
                    path.display(),
                    qos.r_min()
                )));
            }
        }
    }
    Ok(())
}
