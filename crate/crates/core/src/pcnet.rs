//! Power-control networks trained without labels.
//!
//! A PCNet maps the link magnitudes `|h_{j,i}|` (row-major, tx-major) to one
//! sigmoid output per user, scaled by `pmax`. The PCNet+ variant appends the
//! noise power as an extra input so a single network covers a range of SNRs.
//!
//! Training minimises the batch mean of `-sum_rate`, optionally plus
//! `lambda * sum_i relu(r_min_i - R_i)` for minimum-rate constraints.

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelSample, ChannelSource};
use crate::metrics::{self, check_profile_feasible, qos_feasibility, PowerProfile, QosSpec};
use crate::nnet::{AdamConfig, AdamState, ForwardCache, LayerSpec, NetworkGrads, NetworkParams};
use crate::rng::{derive_seed, rng_from_seed, SimRng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Pcnet,
    PcnetPlus,
}

impl Variant {
    pub fn input_dim(self, k: usize) -> usize {
        match self {
            Variant::Pcnet => k * k,
            Variant::PcnetPlus => k * k + 1,
        }
    }
}

/// What the network is trained for and how its outputs are deployed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "task", rename_all = "snake_case")]
pub enum Objective {
    /// Plain sum-rate maximisation; deployed outputs are rounded to binary.
    Srm,
    /// Sum rate with per-user minimum rates enforced by a penalty.
    SrmQc { qos: QosSpec, lambda: f64 },
}

impl Objective {
    pub fn srm_qc(qos: QosSpec, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(Error::invalid(format!("penalty weight must be non-negative, got {lambda}")));
        }
        Ok(Objective::SrmQc { qos, lambda })
    }

    pub fn qos(&self) -> Option<&QosSpec> {
        match self {
            Objective::Srm => None,
            Objective::SrmQc { qos, .. } => Some(qos),
        }
    }
}

/// Layer sizes used for the reference configurations; other user counts get
/// `{K^2, 2K^2, K^2, K}` with a floor on the hidden widths.
pub fn default_shape(k: usize, variant: Variant) -> Vec<usize> {
    let hidden = match k {
        5 => vec![50, 25],
        10 => vec![200, 100],
        20 => vec![400, 200],
        _ => vec![(2 * k * k).max(16), (k * k).max(8)],
    };
    let mut shape = vec![variant.input_dim(k)];
    shape.extend(hidden);
    shape.push(k);
    shape
}

pub const DEFAULT_BINARY_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq)]
pub struct PcnetModel {
    pub params: NetworkParams,
    pub variant: Variant,
    pub k: usize,
    pub objective: Objective,
    pub pmax: f64,
    /// Fraction of `pmax` at or above which SRM outputs round up to `pmax`.
    pub binary_threshold: f64,
}

impl PcnetModel {
    /// Fresh network with node counts `shape = {l_0, ..., l_L}`.
    pub fn new(
        k: usize,
        variant: Variant,
        shape: &[usize],
        objective: Objective,
        pmax: f64,
        rng: &mut SimRng,
    ) -> Result<Self> {
        let specs = LayerSpec::chain(shape)?;
        let params = NetworkParams::init(&specs, rng)?;
        Self::from_params(params, variant, k, objective, pmax)
    }

    pub fn from_params(
        params: NetworkParams,
        variant: Variant,
        k: usize,
        objective: Objective,
        pmax: f64,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("user count K must be at least 1"));
        }
        if params.input_dim() != variant.input_dim(k) {
            return Err(Error::invalid(format!(
                "{variant:?} with K={k} needs {} inputs, network has {}",
                variant.input_dim(k),
                params.input_dim()
            )));
        }
        if params.output_dim() != k {
            return Err(Error::invalid(format!("network emits {} powers for K={k}", params.output_dim())));
        }
        if !(pmax.is_finite() && pmax > 0.0) {
            return Err(Error::invalid(format!("pmax must be positive, got {pmax}")));
        }
        if let Objective::SrmQc { qos, lambda } = &objective {
            if qos.len() != k {
                return Err(Error::invalid("QoS spec dimension does not match K"));
            }
            if !(lambda.is_finite() && *lambda >= 0.0) {
                return Err(Error::invalid("penalty weight must be non-negative"));
            }
        }
        Ok(Self { params, variant, k, objective, pmax, binary_threshold: DEFAULT_BINARY_THRESHOLD })
    }

    pub fn shape(&self) -> Vec<usize> {
        let mut shape = vec![self.params.input_dim()];
        shape.extend(self.params.layers.iter().map(|l| l.spec.out_dim));
        shape
    }

    fn check_sample(&self, sample: &ChannelSample) -> Result<()> {
        if sample.k() != self.k {
            return Err(Error::invalid(format!("model is for K={}, sample has K={}", self.k, sample.k())));
        }
        Ok(())
    }

    /// Inference-mode power profiles for a batch, entries in `(0, pmax)`.
    pub fn infer_batch(&self, samples: &[ChannelSample]) -> Result<Vec<PowerProfile>> {
        for s in samples {
            self.check_sample(s)?;
        }
        if samples.is_empty() {
            return Ok(Vec::new());
        }
        let inputs = input_batch(samples, self.variant);
        let out = self.params.infer(inputs.view())?;
        Ok(out
            .rows()
            .into_iter()
            .map(|row| PowerProfile::new(row.iter().map(|&c| self.pmax * c).collect()))
            .collect())
    }

    /// Deployed SRM profile: inference output rounded to `{0, pmax}`.
    pub fn deploy_srm_batch(&self, samples: &[ChannelSample]) -> Result<Vec<PowerProfile>> {
        Ok(self
            .infer_batch(samples)?
            .iter()
            .map(|p| round_binary_at(p, self.pmax, self.binary_threshold))
            .collect())
    }
}

/// Network input for one sample: `input[j*K + i] = |h_{j,i}|`, followed by
/// the noise power for PCNet+.
pub fn build_input(sample: &ChannelSample, variant: Variant) -> Vec<f64> {
    let mut v: Vec<f64> = sample.gains().iter().map(|g| g.sqrt()).collect();
    if variant == Variant::PcnetPlus {
        v.push(sample.noise_power());
    }
    v
}

pub fn input_batch(samples: &[ChannelSample], variant: Variant) -> Array2<f64> {
    let k = samples.first().map(|s| s.k()).unwrap_or(0);
    let dim = variant.input_dim(k);
    let mut data = Vec::with_capacity(samples.len() * dim);
    for s in samples {
        data.extend(build_input(s, variant));
    }
    Array2::from_shape_vec((samples.len(), dim), data).expect("uniform sample dimension")
}

pub fn infer(model: &PcnetModel, sample: &ChannelSample) -> Result<PowerProfile> {
    Ok(model.infer_batch(std::slice::from_ref(sample))?.remove(0))
}

/// Batch loss and its gradient with respect to each transmit power.
#[derive(Debug, Clone)]
pub struct RateLoss {
    pub loss: f64,
    /// `(batch, K)` gradient of the mean loss w.r.t. powers.
    pub power_grads: Array2<f64>,
    /// Per sample and user, whether the rate penalty is active.
    pub penalty_active: Vec<bool>,
}

/// Mean over the batch of `-sum_rate + lambda * sum_i relu(r_min_i - R_i)`
/// evaluated at explicit powers, with its gradient. `penalty = None` is the
/// plain sum-rate loss.
pub fn rate_loss(
    samples: &[ChannelSample],
    powers: ArrayView2<f64>,
    penalty: Option<(&QosSpec, f64)>,
) -> Result<RateLoss> {
    let n = samples.len();
    if n == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let k = samples[0].k();
    if powers.dim() != (n, k) || samples.iter().any(|s| s.k() != k) {
        return Err(Error::invalid("power matrix does not match batch"));
    }
    if let Some((qos, _)) = penalty {
        if qos.len() != k {
            return Err(Error::invalid("QoS spec dimension does not match K"));
        }
    }
    let inv_n = 1.0 / n as f64;
    let inv_ln2 = std::f64::consts::LOG2_E;
    let mut total = 0.0;
    let mut grads = Array2::zeros((n, k));
    let mut active = vec![false; n * k];
    let mut total_pow = vec![0.0; k];
    let mut interf = vec![0.0; k];
    let mut coeff = vec![0.0; k];
    for (s_idx, sample) in samples.iter().enumerate() {
        let p = powers.row(s_idx);
        let noise = sample.noise_power();
        let mut sample_loss = 0.0;
        for i in 0..k {
            let mut interference = noise;
            for j in 0..k {
                if j != i {
                    interference += p[j] * sample.gain(j, i);
                }
            }
            let signal = p[i] * sample.direct(i);
            let rate = (signal / interference).ln_1p() * inv_ln2;
            interf[i] = interference;
            total_pow[i] = interference + signal;
            // d loss / d R_i
            let mut c = -1.0;
            sample_loss -= rate;
            if let Some((qos, lambda)) = penalty {
                let gap = qos.r_min()[i] - rate;
                if gap > 0.0 {
                    sample_loss += lambda * gap;
                    c -= lambda;
                    active[s_idx * k + i] = true;
                }
            }
            coeff[i] = c;
        }
        total += sample_loss;
        // dR_i/dP_m = (g_mi / T_i - [m != i] g_mi / I_i) / ln 2
        let mut row = grads.row_mut(s_idx);
        for m in 0..k {
            let mut d = 0.0;
            for i in 0..k {
                let g = sample.gain(m, i);
                let mut term = g / total_pow[i];
                if m != i {
                    term -= g / interf[i];
                }
                d += coeff[i] * term;
            }
            row[m] = d * inv_ln2 * inv_n;
        }
    }
    let loss = total * inv_n;
    if !loss.is_finite() {
        return Err(Error::Divergence { iteration: 0, reason: format!("non-finite loss {loss}") });
    }
    Ok(RateLoss { loss, power_grads: grads, penalty_active: active })
}

/// Loss value, parameter gradients and the forward cache of one mini-batch.
#[derive(Debug, Clone)]
pub struct LossEval {
    pub loss: f64,
    pub grads: NetworkGrads,
    pub cache: ForwardCache,
    pub penalty_active: Vec<bool>,
}

fn loss_with_penalty(
    model: &PcnetModel,
    batch: &[ChannelSample],
    penalty: Option<(&QosSpec, f64)>,
) -> Result<LossEval> {
    for s in batch {
        model.check_sample(s)?;
    }
    if batch.len() < 2 {
        return Err(Error::invalid("training batch needs at least 2 samples"));
    }
    let inputs = input_batch(batch, model.variant);
    let cache = model.params.forward_train(inputs.view())?;
    let powers = cache.output() * model.pmax;
    let rl = rate_loss(batch, powers.view(), penalty)?;
    let output_grads = rl.power_grads * model.pmax;
    let grads = model.params.backward(&cache, output_grads.view())?;
    Ok(LossEval { loss: rl.loss, grads, cache, penalty_active: rl.penalty_active })
}

/// Negated mean sum rate over a mini-batch (train-mode batch norm).
pub fn loss_srm(model: &PcnetModel, batch: &[ChannelSample]) -> Result<LossEval> {
    loss_with_penalty(model, batch, None)
}

/// Negated mean sum rate plus `lambda`-weighted minimum-rate violations.
pub fn loss_srm_qc(model: &PcnetModel, batch: &[ChannelSample], qos: &QosSpec, lambda: f64) -> Result<LossEval> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::invalid("penalty weight must be non-negative"));
    }
    loss_with_penalty(model, batch, Some((qos, lambda)))
}

/// Loss matching the model's objective.
pub fn objective_loss(model: &PcnetModel, batch: &[ChannelSample]) -> Result<LossEval> {
    match &model.objective {
        Objective::Srm => loss_srm(model, batch),
        Objective::SrmQc { qos, lambda } => loss_srm_qc(model, batch, qos, *lambda),
    }
}

pub fn round_binary(profile: &PowerProfile, pmax: f64) -> PowerProfile {
    round_binary_at(profile, pmax, DEFAULT_BINARY_THRESHOLD)
}

/// Entries at or above `threshold * pmax` become `pmax`, the rest zero.
pub fn round_binary_at(profile: &PowerProfile, pmax: f64, threshold: f64) -> PowerProfile {
    let cut = threshold * pmax;
    PowerProfile::new(profile.powers().iter().map(|&p| if p >= cut { pmax } else { 0.0 }).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// The network output itself met every constraint.
    Hit,
    /// The scaled minimal profile replaced an infeasible output.
    Miss,
}

/// Keeps a feasible network output, otherwise substitutes the scaled
/// closed-form profile. `fallback` is that profile for this sample (or
/// `None` when no user has a positive rate target).
pub(crate) fn complete_with_fallback(
    sample: &ChannelSample,
    raw: PowerProfile,
    qos: &QosSpec,
    pmax: f64,
    fallback: Option<&PowerProfile>,
) -> Result<(PowerProfile, Outcome)> {
    if check_profile_feasible(sample, &raw, qos, pmax)? {
        return Ok((raw, Outcome::Hit));
    }
    match fallback {
        Some(p) => Ok((p.clone(), Outcome::Miss)),
        None => Err(Error::invalid("no feasible fallback available for this sample")),
    }
}

/// Scaled minimal profile for a sample that must be feasible.
pub fn feasible_fallback(sample: &ChannelSample, qos: &QosSpec, pmax: f64) -> Result<Option<PowerProfile>> {
    let res = qos_feasibility(sample, qos, pmax)?;
    if !res.feasible {
        return Err(Error::invalid(format!(
            "instance is infeasible for the rate targets (spectral radius {:.4})",
            res.spectral_radius
        )));
    }
    Ok(res.p_tilde)
}

pub fn srm_qc_output(model: &PcnetModel, sample: &ChannelSample, qos: &QosSpec) -> Result<(PowerProfile, Outcome)> {
    let fallback = feasible_fallback(sample, qos, model.pmax)?;
    let raw = infer(model, sample)?;
    complete_with_fallback(sample, raw, qos, model.pmax, fallback.as_ref())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub total_iterations: usize,
    pub validation_every: usize,
    pub validation_set_size: usize,
    pub esn0_db_set: Vec<f64>,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 1000,
            total_iterations: 20_000,
            validation_every: 50,
            validation_set_size: 1000,
            esn0_db_set: vec![10.0],
            seed: 0,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, variant: Variant) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::invalid("batch size must be at least 2"));
        }
        if self.total_iterations == 0 || self.validation_every == 0 || self.validation_set_size == 0 {
            return Err(Error::invalid("iteration and validation counts must be positive"));
        }
        if self.esn0_db_set.is_empty() {
            return Err(Error::invalid("EsN0 set must not be empty"));
        }
        if variant == Variant::Pcnet && self.esn0_db_set.len() != 1 {
            return Err(Error::invalid("a PCNet is trained for a single EsN0"));
        }
        if !(self.adam.learning_rate.is_finite() && self.adam.learning_rate > 0.0) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// `(iteration, validation objective)` at every checkpoint.
    pub points: Vec<(usize, f64)>,
    pub best_iteration: usize,
    pub best_objective: f64,
}

impl TrainHistory {
    fn record(&mut self, iteration: usize, objective: f64) -> bool {
        self.points.push((iteration, objective));
        if self.points.len() == 1 || objective > self.best_objective {
            self.best_iteration = iteration;
            self.best_objective = objective;
            true
        } else {
            false
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("training aborted after {} checkpoints: {source}", history.points.len())]
pub struct TrainAborted {
    #[source]
    pub source: Error,
    pub history: TrainHistory,
}

/// Held-out samples with their precomputed feasibility fallbacks.
#[derive(Debug, Clone)]
pub struct ValidationSet {
    pub samples: Vec<ChannelSample>,
    fallbacks: Vec<Option<PowerProfile>>,
}

impl ValidationSet {
    pub fn new(samples: Vec<ChannelSample>, objective: &Objective, pmax: f64) -> Result<Self> {
        let fallbacks = match objective.qos() {
            None => vec![None; samples.len()],
            Some(qos) => samples
                .iter()
                .map(|s| feasible_fallback(s, qos, pmax))
                .collect::<Result<Vec<_>>>()?,
        };
        Ok(Self { samples, fallbacks })
    }

    /// Mean deployed sum rate: rounded binary for SRM, fallback-completed
    /// output for SRM-QC.
    pub fn objective(&self, model: &PcnetModel) -> Result<f64> {
        if self.samples.is_empty() {
            return Ok(0.0);
        }
        let raw = model.infer_batch(&self.samples)?;
        let mut total = 0.0;
        for ((sample, p), fb) in self.samples.iter().zip(raw).zip(&self.fallbacks) {
            let deployed = match &model.objective {
                Objective::Srm => round_binary_at(&p, model.pmax, model.binary_threshold),
                Objective::SrmQc { qos, .. } => complete_with_fallback(sample, p, qos, model.pmax, fb.as_ref())?.0,
            };
            total += metrics::sum_rate_unchecked(sample, deployed.powers());
        }
        Ok(total / self.samples.len() as f64)
    }
}

/// Draws `n` samples from the source, keeping only instances that meet the
/// rate targets when there are any.
pub fn draw_samples(
    source: &mut ChannelSource,
    n: usize,
    qos: Option<&QosSpec>,
    rng: &mut SimRng,
) -> Result<Vec<ChannelSample>> {
    let Some(qos) = qos.filter(|q| !q.is_unconstrained()) else {
        return Ok(source.batch(n, rng));
    };
    let pmax = source.pmax();
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while out.len() < n {
        attempts += 1;
        if attempts > 1000 * n.max(1) {
            return Err(Error::invalid("rate targets are almost never feasible for this channel model"));
        }
        let s = source.next_sample(rng);
        if metrics::qos_screen(&s, qos, pmax) && qos_feasibility(&s, qos, pmax)?.feasible {
            out.push(s);
        }
    }
    Ok(out)
}

/// Result of a completed run: the best checkpoint and the full history.
#[derive(Debug, Clone)]
pub struct Trained {
    pub model: PcnetModel,
    pub history: TrainHistory,
}

/// Trains with ADAM on fresh mini-batches from `source`, evaluating the
/// deployed objective on a fixed validation set every `validation_every`
/// iterations (and at the end) and returning the best checkpoint.
///
/// Streams derived from `config.seed`: 1 for training data, 2 for the
/// validation set. Parameter initialization is the caller's concern.
pub fn train(model: PcnetModel, config: &TrainConfig, source: &mut ChannelSource) -> Result<Trained, TrainAborted> {
    let abort = |source: Error, history: &TrainHistory| TrainAborted { source, history: history.clone() };
    let mut history = TrainHistory::default();
    config.validate(model.variant).map_err(|e| abort(e, &history))?;
    if source.k() != model.k {
        return Err(abort(Error::invalid("channel source K does not match model"), &history));
    }
    let qos = model.objective.qos().cloned();
    let mut val_rng = rng_from_seed(derive_seed(config.seed, 2));
    let val_samples =
        draw_samples(source, config.validation_set_size, qos.as_ref(), &mut val_rng).map_err(|e| abort(e, &history))?;
    let validation = ValidationSet::new(val_samples, &model.objective, model.pmax).map_err(|e| abort(e, &history))?;

    let mut data_rng = rng_from_seed(derive_seed(config.seed, 1));
    let mut adam = AdamState::new(&model.params, config.adam);
    let mut current = model;
    let mut best = current.params.clone();

    for iteration in 1..=config.total_iterations {
        let batch = draw_samples(source, config.batch_size, qos.as_ref(), &mut data_rng)
            .map_err(|e| abort(e, &history))?;
        let eval = objective_loss(&current, &batch).map_err(|e| abort(at_iteration(e, iteration), &history))?;
        current.params.update_running_stats(&eval.cache);
        adam.step(&mut current.params, &eval.grads)
            .map_err(|e| abort(at_iteration(e, iteration), &history))?;

        if iteration % config.validation_every == 0 || iteration == config.total_iterations {
            let objective = validation.objective(&current).map_err(|e| abort(e, &history))?;
            if !objective.is_finite() {
                return Err(abort(
                    Error::Divergence { iteration, reason: "non-finite validation objective".into() },
                    &history,
                ));
            }
            if history.record(iteration, objective) {
                best = current.params.clone();
            }
        }
    }
    current.params = best;
    Ok(Trained { model: current, history })
}

fn at_iteration(e: Error, iteration: usize) -> Error {
    match e {
        Error::Divergence { reason, .. } => Error::Divergence { iteration, reason },
        other => other,
    }
}
