//! Spread of WMMSE local optima under random restarts.

use epcnet_core::baselines::{landscape_stats, LandscapeStats};
use epcnet_core::channel::{ChannelModel, ChannelSource};
use epcnet_core::rng::{derive_seed, rng_from_seed};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::HarnessResult;
use crate::report::{median, quantile_grid, write_cdf_csv, write_json};
use crate::streams;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelSummary {
    pub esn0_db: f64,
    pub samples: usize,
    pub runs: usize,
    pub median_variance: f64,
    pub median_cv: f64,
    pub mean_cv: f64,
    #[serde(skip)]
    pub stats: Vec<LandscapeStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LandscapeReport {
    pub k: usize,
    pub levels: Vec<LevelSummary>,
}

/// Landscape statistics for `samples` channel draws at one level. Sample
/// `i` restarts from `derive_seed(restart_seed, i)`.
pub fn level_stats(
    model: ChannelModel,
    k: usize,
    pmax: f64,
    esn0_db: f64,
    samples: usize,
    runs: usize,
    sample_seed: u64,
    restart_seed: u64,
) -> HarnessResult<Vec<LandscapeStats>> {
    let mut source = ChannelSource::new(model, k, pmax, &[esn0_db])?;
    let draws = source.batch(samples, &mut rng_from_seed(sample_seed));
    Ok(draws
        .par_iter()
        .enumerate()
        .map(|(i, s)| landscape_stats(s, pmax, runs, &mut rng_from_seed(derive_seed(restart_seed, i as u64))))
        .collect::<Result<Vec<_>, _>>()?)
}

/// Writes `landscape_summary.json` and `landscape_cdf.csv` (variance and CV
/// quantiles per level).
pub fn cmd_landscape(cfg: &ExperimentConfig, seed: u64) -> HarnessResult<LandscapeReport> {
    let l = &cfg.landscape;
    let mut levels = Vec::new();
    for (idx, &db) in l.esn0_db.iter().enumerate() {
        let stats = level_stats(
            cfg.channel.model(),
            cfg.k,
            cfg.pmax,
            db,
            l.samples,
            l.runs,
            derive_seed(seed, streams::LANDSCAPE_SAMPLES + idx as u64),
            derive_seed(seed, streams::LANDSCAPE_RESTARTS + idx as u64),
        )?;
        let cv: Vec<f64> = stats.iter().map(|s| s.cv).collect();
        let var: Vec<f64> = stats.iter().map(|s| s.variance).collect();
        levels.push(LevelSummary {
            esn0_db: db,
            samples: stats.len(),
            runs: l.runs,
            median_variance: median(&var),
            median_cv: median(&cv),
            mean_cv: cv.iter().sum::<f64>() / cv.len().max(1) as f64,
            stats,
        });
    }
    let report = LandscapeReport { k: cfg.k, levels };
    let mut series = Vec::new();
    for lv in &report.levels {
        series.push((format!("variance_{}db", lv.esn0_db), quantile_grid(&lv.stats.iter().map(|s| s.variance).collect::<Vec<_>>())));
        series.push((format!("cv_{}db", lv.esn0_db), quantile_grid(&lv.stats.iter().map(|s| s.cv).collect::<Vec<_>>())));
    }
    write_cdf_csv(&cfg.output_dir.join("landscape_cdf.csv"), &series)?;
    write_json(&cfg.output_dir.join("landscape_summary.json"), &report)?;
    Ok(report)
}
