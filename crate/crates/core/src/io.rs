//! On-disk formats: channel datasets, model files and ensemble manifests.
//!
//! All numbers are little-endian; floats are IEEE-754 binary64 written bit
//! for bit, so a save/load round trip reproduces every value exactly.
//!
//! Dataset file (`.epcd`):
//!
//! | field           | type                  |
//! |-----------------|-----------------------|
//! | magic           | `b"EPCNDATA"`         |
//! | version         | u32 (= 1)             |
//! | K               | u32                   |
//! | model tag       | u32 (0 rayleigh, 1 rician, 2 geometry) |
//! | model parameter | f64 (Rician K-factor dB, area side, or 0) |
//! | pmax            | f64                   |
//! | level count L   | u32                   |
//! | EsN0 levels     | L × f64 (dB)          |
//! | seed            | u64                   |
//! | r_min count Q   | u32 (0 = unfiltered, else K) |
//! | r_min           | Q × f64               |
//! | rejected        | u64                   |
//! | sample count N  | u64                   |
//! | samples         | N × (noise f64, K² × f64 gains, row-major `g[j*K+i]` tx j → rx i) |
//!
//! Model file (`.pcn`): magic `b"EPCNMODL"`, u32 version, u64 metadata
//! length, UTF-8 JSON metadata ([`ModelMeta`]), then per layer the weight
//! (out × in, row-major), bias, and for hidden layers the batch-norm scale,
//! shift, running mean and running variance.
//!
//! Ensemble manifest: JSON ([`EnsembleManifest`]) listing member files
//! relative to the manifest's directory with their SHA-256 digests, plus a
//! combined digest over the member digests in order.

use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::channel::{ChannelModel, ChannelSample};
use crate::ensemble::Ensemble;
use crate::nnet::{validate_chain, BatchNorm, DenseLayer, LayerKind, LayerSpec, NetworkParams};
use crate::pcnet::{Objective, PcnetModel, Variant};
use crate::{Error, Result};

pub const DATASET_MAGIC: &[u8; 8] = b"EPCNDATA";
pub const MODEL_MAGIC: &[u8; 8] = b"EPCNMODL";
pub const FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FORMAT: &str = "epcnet-ensemble";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

// ── Byte cursor ────────────────────────────────────────────────────────────

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8], path: &'a Path) -> Self {
        Self { buf, pos: 0, path }
    }

    fn fail(&self, reason: impl Into<String>) -> Error {
        Error::format(self.path, reason)
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let Some(end) = end else {
            return Err(self.fail(format!("truncated while reading {what} at byte {}", self.pos)));
        };
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_bits(self.u64(what)?))
    }

    fn f64s(&mut self, n: usize, what: &str) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| self.fail(format!("{what} too long")))?, what)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect())
    }

    fn magic(&mut self, expected: &[u8; 8]) -> Result<()> {
        if self.take(8, "magic")? != expected {
            return Err(self.fail(format!("bad magic, expected {:?}", String::from_utf8_lossy(expected))));
        }
        let version = self.u32("version")?;
        if version != FORMAT_VERSION {
            return Err(self.fail(format!("unsupported format version {version}")));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(self.fail(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, values: impl IntoIterator<Item = f64>) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::Capacity(format!("{what} {v} does not fit the file format")))
}

// ── Datasets ───────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub k: usize,
    pub model: ChannelModel,
    pub pmax: f64,
    /// EsN0 levels (dB) cycled through while drawing.
    pub esn0_db: Vec<f64>,
    pub seed: u64,
    /// Rate targets the samples were filtered against; empty when unfiltered.
    pub r_min: Vec<f64>,
    /// Draws discarded as infeasible while filling the dataset.
    pub rejected: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub header: DatasetHeader,
    pub samples: Vec<ChannelSample>,
}

impl Dataset {
    /// Fraction of draws discarded by feasibility filtering.
    pub fn rejection_rate(&self) -> f64 {
        let total = self.header.rejected + self.samples.len() as u64;
        if total == 0 {
            0.0
        } else {
            self.header.rejected as f64 / total as f64
        }
    }
}

pub fn encode_dataset(ds: &Dataset) -> Result<Vec<u8>> {
    let h = &ds.header;
    if !(h.r_min.is_empty() || h.r_min.len() == h.k) {
        return Err(Error::invalid("dataset rate targets must be empty or have K entries"));
    }
    if let Some(s) = ds.samples.iter().find(|s| s.k() != h.k) {
        return Err(Error::invalid(format!("dataset header says K={}, a sample has K={}", h.k, s.k())));
    }
    let mut out = Vec::with_capacity(64 + ds.samples.len() * (h.k * h.k + 1) * 8);
    out.extend_from_slice(DATASET_MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_u32(&mut out, to_u32(h.k, "K")?);
    put_u32(&mut out, u32::from(h.model.tag()));
    put_f64s(&mut out, [h.model.parameter(), h.pmax]);
    put_u32(&mut out, to_u32(h.esn0_db.len(), "level count")?);
    put_f64s(&mut out, h.esn0_db.iter().copied());
    put_u64(&mut out, h.seed);
    put_u32(&mut out, to_u32(h.r_min.len(), "rate target count")?);
    put_f64s(&mut out, h.r_min.iter().copied());
    put_u64(&mut out, h.rejected);
    put_u64(&mut out, ds.samples.len() as u64);
    for s in &ds.samples {
        put_f64s(&mut out, std::iter::once(s.noise_power()).chain(s.gains().iter().copied()));
    }
    Ok(out)
}

/// Parses a dataset; `path` only labels error messages.
pub fn decode_dataset(bytes: &[u8], path: &Path) -> Result<Dataset> {
    let mut r = Reader::new(bytes, path);
    r.magic(DATASET_MAGIC)?;
    let k = r.u32("K")? as usize;
    if k == 0 {
        return Err(r.fail("K must be at least 1"));
    }
    let tag = r.u32("model tag")?;
    let param = r.f64("model parameter")?;
    let model = u8::try_from(tag)
        .ok()
        .and_then(|t| ChannelModel::from_tag(t, param))
        .ok_or_else(|| r.fail(format!("unknown channel model tag {tag}")))?;
    let pmax = r.f64("pmax")?;
    let n_levels = r.u32("level count")? as usize;
    let esn0_db = r.f64s(n_levels, "EsN0 levels")?;
    let seed = r.u64("seed")?;
    let n_qos = r.u32("rate target count")? as usize;
    if n_qos != 0 && n_qos != k {
        return Err(r.fail(format!("{n_qos} rate targets for K={k}")));
    }
    let r_min = r.f64s(n_qos, "rate targets")?;
    let rejected = r.u64("rejected count")?;
    let count = r.u64("sample count")?;
    let per_sample = k * k + 1;
    let remaining = (bytes.len() - r.pos) / 8;
    if count as u128 * per_sample as u128 != remaining as u128 || !(bytes.len() - r.pos).is_multiple_of(8) {
        return Err(r.fail(format!("header promises {count} samples, body holds {} values", remaining)));
    }
    let mut samples = Vec::with_capacity(count as usize);
    for idx in 0..count {
        let values = r.f64s(per_sample, "sample")?;
        let sample = ChannelSample::new(k, values[1..].to_vec(), values[0])
            .map_err(|e| r.fail(format!("sample {idx}: {e}")))?;
        samples.push(sample);
    }
    r.finish()?;
    Ok(Dataset { header: DatasetHeader { k, model, pmax, esn0_db, seed, r_min, rejected }, samples })
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<()> {
    write_bytes(path, &encode_dataset(ds)?)
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    decode_dataset(&read_bytes(path)?, path)
}

// ── Models ─────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub k: usize,
    pub variant: Variant,
    pub objective: Objective,
    pub pmax: f64,
    pub binary_threshold: f64,
    pub layers: Vec<LayerSpec>,
    /// SHA-256 of the training configuration that produced the weights.
    pub config_hash: String,
}

/// Stable digest of any serializable configuration.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let json = serde_json::to_vec(config).map_err(|e| Error::invalid(format!("unserializable config: {e}")))?;
    Ok(sha256_hex(&json))
}

pub fn encode_model(model: &PcnetModel, config_hash: &str) -> Result<Vec<u8>> {
    let meta = ModelMeta {
        k: model.k,
        variant: model.variant,
        objective: model.objective.clone(),
        pmax: model.pmax,
        binary_threshold: model.binary_threshold,
        layers: model.params.specs(),
        config_hash: config_hash.to_owned(),
    };
    let json = serde_json::to_vec(&meta).map_err(|e| Error::invalid(format!("model metadata: {e}")))?;
    let mut out = Vec::with_capacity(24 + json.len() + model.params.parameter_count() * 8);
    out.extend_from_slice(MODEL_MAGIC);
    put_u32(&mut out, FORMAT_VERSION);
    put_u64(&mut out, json.len() as u64);
    out.extend_from_slice(&json);
    for layer in &model.params.layers {
        put_f64s(&mut out, layer.weight.iter().copied());
        put_f64s(&mut out, layer.bias.iter().copied());
        if let Some(bn) = &layer.bn {
            for v in [&bn.scale, &bn.shift, &bn.running_mean, &bn.running_var] {
                put_f64s(&mut out, v.iter().copied());
            }
        }
    }
    Ok(out)
}

pub fn decode_model(bytes: &[u8], path: &Path) -> Result<(PcnetModel, ModelMeta)> {
    let mut r = Reader::new(bytes, path);
    r.magic(MODEL_MAGIC)?;
    let len = r.u64("metadata length")?;
    let len = usize::try_from(len).map_err(|_| r.fail("metadata length overflows"))?;
    let json = r.take(len, "metadata")?;
    let meta: ModelMeta = serde_json::from_slice(json).map_err(|e| r.fail(format!("metadata: {e}")))?;
    validate_chain(&meta.layers).map_err(|e| r.fail(e.to_string()))?;
    let mut layers = Vec::with_capacity(meta.layers.len());
    for spec in &meta.layers {
        let weight = Array2::from_shape_vec((spec.out_dim, spec.in_dim), r.f64s(spec.out_dim * spec.in_dim, "weight")?)
            .expect("length matches shape");
        let bias = Array1::from(r.f64s(spec.out_dim, "bias")?);
        let bn = match spec.kind {
            LayerKind::HiddenBnRelu => {
                let mut read = |what| r.f64s(spec.out_dim, what).map(Array1::from);
                Some(BatchNorm {
                    scale: read("batch-norm scale")?,
                    shift: read("batch-norm shift")?,
                    running_mean: read("running mean")?,
                    running_var: read("running variance")?,
                })
            }
            LayerKind::OutputSigmoid => None,
        };
        layers.push(DenseLayer { spec: *spec, weight, bias, bn });
    }
    r.finish()?;
    let params = NetworkParams { layers };
    let mut model = PcnetModel::from_params(params, meta.variant, meta.k, meta.objective.clone(), meta.pmax)
        .map_err(|e| r.fail(e.to_string()))?;
    if !(meta.binary_threshold > 0.0 && meta.binary_threshold < 1.0) {
        return Err(r.fail(format!("binary threshold {} outside (0, 1)", meta.binary_threshold)));
    }
    model.binary_threshold = meta.binary_threshold;
    Ok((model, meta))
}

pub fn save_model(path: &Path, model: &PcnetModel, config_hash: &str) -> Result<()> {
    write_bytes(path, &encode_model(model, config_hash)?)
}

pub fn load_model(path: &Path) -> Result<(PcnetModel, ModelMeta)> {
    decode_model(&read_bytes(path)?, path)
}

// ── Ensemble manifests ─────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path relative to the manifest's directory.
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnsembleManifest {
    pub format: String,
    pub version: u32,
    pub members: Vec<ManifestEntry>,
    /// SHA-256 over the concatenated raw member digests, in member order.
    pub combined_sha256: String,
}

impl EnsembleManifest {
    pub fn new(members: Vec<ManifestEntry>) -> Result<Self> {
        let combined_sha256 = combined_digest(&members)?;
        Ok(Self { format: MANIFEST_FORMAT.to_owned(), version: FORMAT_VERSION, members, combined_sha256 })
    }
}

fn combined_digest(members: &[ManifestEntry]) -> Result<String> {
    let mut hasher = Sha256::new();
    for m in members {
        let raw = hex::decode(&m.sha256).map_err(|e| Error::invalid(format!("member digest {}: {e}", m.file)))?;
        hasher.update(&raw);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn write_manifest(path: &Path, manifest: &EnsembleManifest) -> Result<()> {
    let mut json = serde_json::to_vec_pretty(manifest).map_err(|e| Error::invalid(format!("manifest: {e}")))?;
    json.push(b'\n');
    write_bytes(path, &json)
}

pub fn read_manifest(path: &Path) -> Result<EnsembleManifest> {
    let bytes = read_bytes(path)?;
    let manifest: EnsembleManifest =
        serde_json::from_slice(&bytes).map_err(|e| Error::format(path, format!("manifest: {e}")))?;
    if manifest.format != MANIFEST_FORMAT || manifest.version != FORMAT_VERSION {
        return Err(Error::format(path, "not an ensemble manifest of a supported version"));
    }
    if manifest.combined_sha256 != combined_digest(&manifest.members)? {
        return Err(Error::format(path, "combined digest does not match member digests"));
    }
    Ok(manifest)
}

fn manifest_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

/// Writes each member as `member_<i>.pcn` next to the manifest and returns
/// the manifest.
pub fn save_ensemble(manifest_path: &Path, ensemble: &Ensemble, config_hashes: &[String]) -> Result<EnsembleManifest> {
    if config_hashes.len() != ensemble.len() {
        return Err(Error::invalid("one config hash per member is required"));
    }
    let dir = manifest_dir(manifest_path);
    let mut entries = Vec::with_capacity(ensemble.len());
    for (i, (m, h)) in ensemble.members().iter().zip(config_hashes).enumerate() {
        let file = format!("member_{i}.pcn");
        let bytes = encode_model(m, h)?;
        write_bytes(&dir.join(&file), &bytes)?;
        entries.push(ManifestEntry { file, sha256: sha256_hex(&bytes) });
    }
    let manifest = EnsembleManifest::new(entries)?;
    write_manifest(manifest_path, &manifest)?;
    Ok(manifest)
}

/// Loads all members listed in a manifest, verifying every digest.
pub fn load_ensemble(manifest_path: &Path) -> Result<(Ensemble, EnsembleManifest)> {
    let manifest = read_manifest(manifest_path)?;
    let dir = manifest_dir(manifest_path);
    let mut members = Vec::with_capacity(manifest.members.len());
    for entry in &manifest.members {
        let path = dir.join(&entry.file);
        let bytes = read_bytes(&path)?;
        if sha256_hex(&bytes) != entry.sha256 {
            return Err(Error::format(&path, "digest does not match the manifest"));
        }
        members.push(decode_model(&bytes, &path)?.0);
    }
    Ok((Ensemble::new(members)?, manifest))
}
