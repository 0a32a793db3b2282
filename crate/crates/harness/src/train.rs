//! Ensemble training: M members with distinct initializations and
//! independent data streams.

use std::path::{Path, PathBuf};

use epcnet_core::channel::ChannelSource;
use epcnet_core::ensemble::Ensemble;
use epcnet_core::io::{config_hash, encode_model, sha256_hex, write_bytes, write_manifest, EnsembleManifest, ManifestEntry};
use epcnet_core::pcnet::{train, Objective, PcnetModel, TrainHistory};
use epcnet_core::rng::{derive_seed, rng_from_seed};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, HarnessResult};
use crate::report::{write_csv, write_json};
use crate::streams;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemberReport {
    pub index: usize,
    pub init_seed: u64,
    pub data_seed: u64,
    pub best_iteration: usize,
    pub best_objective: f64,
    /// Set when training aborted; the member is then left out of the manifest.
    pub diverged: Option<String>,
    pub file: Option<String>,
    pub config_hash: String,
}

#[derive(Debug, Clone)]
pub struct TrainedMember {
    pub report: MemberReport,
    pub history: TrainHistory,
    pub model: Option<PcnetModel>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub members: Vec<MemberReport>,
    pub manifest: Option<PathBuf>,
    pub combined_sha256: Option<String>,
}

pub fn member_seeds(seed: u64, index: usize) -> (u64, u64) {
    (derive_seed(seed, streams::MEMBER_INIT + index as u64), derive_seed(seed, streams::MEMBER_DATA + index as u64))
}

#[derive(Serialize)]
struct MemberRecipe<'a> {
    shape: Vec<usize>,
    variant: epcnet_core::pcnet::Variant,
    objective: &'a Objective,
    channel: &'a crate::config::ChannelSection,
    pmax: f64,
    init_seed: u64,
    train: epcnet_core::pcnet::TrainConfig,
}

/// Trains members `0..m` for `objective`. Member `i` always gets the same
/// seeds for a given master seed, whatever the objective.
pub fn train_members(
    cfg: &ExperimentConfig,
    objective: &Objective,
    m: usize,
    seed: u64,
) -> HarnessResult<Vec<TrainedMember>> {
    (0..m)
        .into_par_iter()
        .map(|index| {
            let (init_seed, data_seed) = member_seeds(seed, index);
            let train_cfg = cfg.train_config(data_seed);
            let recipe = MemberRecipe {
                shape: cfg.shape(),
                variant: cfg.variant,
                objective,
                channel: &cfg.channel,
                pmax: cfg.pmax,
                init_seed,
                train: train_cfg.clone(),
            };
            let hash = config_hash(&recipe)?;
            let model = PcnetModel::new(
                cfg.k,
                cfg.variant,
                &cfg.shape(),
                objective.clone(),
                cfg.pmax,
                &mut rng_from_seed(init_seed),
            )?;
            let mut source = ChannelSource::new(cfg.channel.model(), cfg.k, cfg.pmax, &cfg.esn0_db)?;
            let mut report = MemberReport {
                index,
                init_seed,
                data_seed,
                best_iteration: 0,
                best_objective: f64::NAN,
                diverged: None,
                file: None,
                config_hash: hash,
            };
            Ok(match train(model, &train_cfg, &mut source) {
                Ok(t) => {
                    report.best_iteration = t.history.best_iteration;
                    report.best_objective = t.history.best_objective;
                    TrainedMember { report, history: t.history, model: Some(t.model) }
                }
                Err(aborted) => {
                    report.diverged = Some(aborted.source.to_string());
                    report.best_iteration = aborted.history.best_iteration;
                    report.best_objective = aborted.history.best_objective;
                    TrainedMember { report, history: aborted.history, model: None }
                }
            })
        })
        .collect()
}

/// Saves the surviving members under `dir` as `member_<i>.pcn` plus
/// `manifest.json`. Fails with a divergence error when no member survived.
pub fn save_members(dir: &Path, members: &mut [TrainedMember]) -> HarnessResult<(PathBuf, EnsembleManifest, Ensemble)> {
    let mut entries = Vec::new();
    let mut models = Vec::new();
    for member in members.iter_mut() {
        let Some(model) = &member.model else {
            eprintln!(
                "warning: member {} diverged and is left out of the ensemble: {}",
                member.report.index,
                member.report.diverged.as_deref().unwrap_or("")
            );
            continue;
        };
        let file = format!("member_{}.pcn", member.report.index);
        let bytes = encode_model(model, &member.report.config_hash)?;
        write_bytes(&dir.join(&file), &bytes)?;
        entries.push(ManifestEntry { file: file.clone(), sha256: sha256_hex(&bytes) });
        member.report.file = Some(file);
        models.push(model.clone());
    }
    if models.is_empty() {
        let reason = members.first().and_then(|m| m.report.diverged.clone()).unwrap_or_default();
        return Err(HarnessError::Core(epcnet_core::Error::Divergence {
            iteration: members.first().map_or(0, |m| m.history.points.last().map_or(0, |p| p.0)),
            reason: format!("every ensemble member diverged; first: {reason}"),
        }));
    }
    let manifest = EnsembleManifest::new(entries)?;
    let path = dir.join("manifest.json");
    write_manifest(&path, &manifest)?;
    Ok((path, manifest, Ensemble::new(models)?))
}

pub fn write_histories(path: &Path, members: &[TrainedMember]) -> HarnessResult<()> {
    let header = ["member", "iteration", "objective"].map(String::from).to_vec();
    let rows: Vec<Vec<String>> = members
        .iter()
        .flat_map(|m| {
            m.history.points.iter().map(move |(it, obj)| vec![m.report.index.to_string(), it.to_string(), obj.to_string()])
        })
        .collect();
    write_csv(path, &header, &rows)
}

/// Trains `ensemble_size` members and writes models, manifest, histories and
/// `train_report.json` under the output directory.
pub fn cmd_train(cfg: &ExperimentConfig, seed: u64) -> HarnessResult<(TrainReport, Ensemble)> {
    let mut members = train_members(cfg, &cfg.objective(), cfg.ensemble_size, seed)?;
    let out = &cfg.output_dir;
    write_histories(&out.join("train_history.csv"), &members)?;
    let saved = save_members(&out.join("models"), &mut members);
    let (manifest, combined, ensemble) = match saved {
        Ok((path, manifest, ensemble)) => (Some(path), Some(manifest.combined_sha256), Some(ensemble)),
        Err(e) => {
            let report = TrainReport { members: members.into_iter().map(|m| m.report).collect(), manifest: None, combined_sha256: None };
            write_json(&out.join("train_report.json"), &report)?;
            return Err(e);
        }
    };
    let report = TrainReport {
        members: members.into_iter().map(|m| m.report).collect(),
        manifest: manifest.map(|p| p.strip_prefix(out).map(Path::to_path_buf).unwrap_or(p)),
        combined_sha256: combined,
    };
    write_json(&out.join("train_report.json"), &report)?;
    Ok((report, ensemble.expect("set with manifest")))
}
