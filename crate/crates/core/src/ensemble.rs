//! Ensembles of independently trained PCNets with per-sample best-of-M
//! selection.
//!
//! Every member proposes its deployed profile (rounded to binary for SRM, the
//! raw output for minimum-rate problems) and the candidate with the highest
//! sum rate wins. For minimum-rate problems only feasible candidates compete;
//! when no member is feasible the scaled closed-form profile is deployed.
//!
//! Dataset evaluation goes through [`CandidateTable`], which runs each member
//! once over the whole dataset so that prefix sweeps over `M` need no
//! further inference.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSample;
use crate::metrics::{check_profile_feasible, sum_rate_unchecked, PowerProfile, QosSpec};
use crate::pcnet::{feasible_fallback, infer, round_binary_at, Objective, PcnetModel, Variant};
use crate::rng::SimRng;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    members: Vec<PcnetModel>,
}

impl Ensemble {
    /// Members must agree on K, variant, objective, shape and `pmax`.
    pub fn new(members: Vec<PcnetModel>) -> Result<Self> {
        let Some(first) = members.first() else {
            return Err(Error::invalid("an ensemble needs at least one member"));
        };
        let shape = first.shape();
        for (idx, m) in members.iter().enumerate().skip(1) {
            if m.k != first.k || m.variant != first.variant || m.pmax != first.pmax {
                return Err(Error::invalid(format!("member {idx} differs in K, variant or pmax")));
            }
            if m.objective != first.objective {
                return Err(Error::invalid(format!("member {idx} was trained for a different task")));
            }
            if m.shape() != shape {
                return Err(Error::invalid(format!("member {idx} has shape {:?}, expected {shape:?}", m.shape())));
            }
        }
        Ok(Self { members })
    }

    pub fn members(&self) -> &[PcnetModel] {
        &self.members
    }

    pub fn into_members(self) -> Vec<PcnetModel> {
        self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn k(&self) -> usize {
        self.members[0].k
    }

    pub fn pmax(&self) -> f64 {
        self.members[0].pmax
    }

    pub fn variant(&self) -> Variant {
        self.members[0].variant
    }

    pub fn objective(&self) -> &Objective {
        &self.members[0].objective
    }

    /// The first `m` members as an ensemble of their own.
    pub fn prefix(&self, m: usize) -> Result<Self> {
        if m == 0 || m > self.len() {
            return Err(Error::invalid(format!("prefix size {m} outside 1..={}", self.len())));
        }
        Ok(Self { members: self.members[..m].to_vec() })
    }
}

/// Outcome of one selection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionRecord {
    /// Winning member, or `None` when the fallback profile was deployed.
    pub chosen: Option<usize>,
    /// Sum rate of every member's candidate profile, feasible or not.
    pub member_rates: Vec<f64>,
    /// Whether each member's candidate was allowed to compete.
    pub eligible: Vec<bool>,
    pub fallback_rate: Option<f64>,
    /// More than one candidate attained the maximum exactly.
    pub tie: bool,
    pub selected_rate: f64,
}

/// Argmax over the eligible rates with uniform random tie-breaking; `None`
/// when nothing is eligible.
fn argmax_eligible(rates: &[f64], eligible: &[bool], rng: &mut SimRng) -> Option<(usize, bool)> {
    let best = rates
        .iter()
        .zip(eligible)
        .filter(|(_, &e)| e)
        .map(|(&r, _)| r)
        .fold(f64::NEG_INFINITY, f64::max);
    if best == f64::NEG_INFINITY {
        return None;
    }
    let tied: Vec<usize> = (0..rates.len()).filter(|&i| eligible[i] && rates[i] == best).collect();
    if tied.len() == 1 {
        Some((tied[0], false))
    } else {
        Some((tied[rng.random_range(0..tied.len())], true))
    }
}

/// Runs every member on `sample` and deploys the best candidate.
pub fn select(ensemble: &Ensemble, sample: &ChannelSample, rng: &mut SimRng) -> Result<(PowerProfile, SelectionRecord)> {
    let pmax = ensemble.pmax();
    let candidates = ensemble
        .members
        .iter()
        .map(|m| {
            let raw = infer(m, sample)?;
            Ok(match &m.objective {
                Objective::Srm => round_binary_at(&raw, pmax, m.binary_threshold),
                Objective::SrmQc { .. } => raw,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let member_rates: Vec<f64> = candidates.iter().map(|p| sum_rate_unchecked(sample, p.powers())).collect();
    let (eligible, fallback) = match ensemble.objective().qos() {
        None => (vec![true; candidates.len()], None),
        Some(qos) => {
            let fallback = feasible_fallback(sample, qos, pmax)?;
            let eligible = candidates
                .iter()
                .map(|p| check_profile_feasible(sample, p, qos, pmax))
                .collect::<Result<Vec<_>>>()?;
            (eligible, Some(fallback))
        }
    };
    match argmax_eligible(&member_rates, &eligible, rng) {
        Some((idx, tie)) => {
            let record = SelectionRecord {
                chosen: Some(idx),
                selected_rate: member_rates[idx],
                fallback_rate: fallback.as_ref().map(|f| f.as_ref().map_or(0.0, |p| sum_rate_unchecked(sample, p.powers()))),
                member_rates,
                eligible,
                tie,
            };
            Ok((candidates.into_iter().nth(idx).expect("index in range"), record))
        }
        None => {
            // Only reachable for minimum-rate problems; all-zero targets make
            // every in-box output feasible, so a fallback profile exists here.
            let profile = fallback
                .flatten()
                .ok_or_else(|| Error::invalid("no member is feasible and no fallback profile exists"))?;
            let rate = sum_rate_unchecked(sample, profile.powers());
            let record = SelectionRecord {
                chosen: None,
                member_rates,
                eligible,
                fallback_rate: Some(rate),
                tie: false,
                selected_rate: rate,
            };
            Ok((profile, record))
        }
    }
}

// ── Dataset evaluation ─────────────────────────────────────────────────────

/// Member candidate rates over a dataset, stored sample-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateTable {
    n_samples: usize,
    n_members: usize,
    rates: Vec<f64>,
    eligible: Vec<bool>,
    /// Fallback sum rate per sample (minimum-rate problems only).
    fallback_rates: Option<Vec<f64>>,
}

impl CandidateTable {
    /// Evaluates every member once over `samples`. For minimum-rate
    /// problems every sample must be feasible.
    pub fn build(ensemble: &Ensemble, samples: &[ChannelSample]) -> Result<Self> {
        let columns = ensemble
            .members
            .iter()
            .map(|m| member_column(m, samples))
            .collect::<Result<Vec<_>>>()?;
        let fallback_rates = match ensemble.objective().qos() {
            None => None,
            Some(qos) => Some(fallback_rates(samples, qos, ensemble.pmax())?),
        };
        Ok(Self::from_columns(samples.len(), columns, fallback_rates))
    }

    /// Assembles a table from per-member `(rates, eligible)` columns.
    pub fn from_columns(n_samples: usize, columns: Vec<(Vec<f64>, Vec<bool>)>, fallback_rates: Option<Vec<f64>>) -> Self {
        let n_members = columns.len();
        let mut rates = vec![0.0; n_samples * n_members];
        let mut eligible = vec![false; n_samples * n_members];
        for (m, (r, e)) in columns.into_iter().enumerate() {
            assert_eq!(r.len(), n_samples, "member column length");
            assert_eq!(e.len(), n_samples, "member column length");
            for s in 0..n_samples {
                rates[s * n_members + m] = r[s];
                eligible[s * n_members + m] = e[s];
            }
        }
        if let Some(f) = &fallback_rates {
            assert_eq!(f.len(), n_samples, "fallback column length");
        }
        Self { n_samples, n_members, rates, eligible, fallback_rates }
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn n_members(&self) -> usize {
        self.n_members
    }

    pub fn member_rates(&self, sample: usize) -> &[f64] {
        &self.rates[sample * self.n_members..(sample + 1) * self.n_members]
    }

    pub fn member_eligible(&self, sample: usize) -> &[bool] {
        &self.eligible[sample * self.n_members..(sample + 1) * self.n_members]
    }

    fn check_prefix(&self, m: usize) -> Result<()> {
        if m == 0 || m > self.n_members {
            return Err(Error::invalid(format!("prefix size {m} outside 1..={}", self.n_members)));
        }
        Ok(())
    }

    /// Selected sum rate per sample using the first `m` members.
    pub fn selected_rates(&self, m: usize) -> Result<Vec<f64>> {
        self.check_prefix(m)?;
        Ok((0..self.n_samples)
            .map(|s| {
                let rates = &self.member_rates(s)[..m];
                let eligible = &self.member_eligible(s)[..m];
                let best = rates
                    .iter()
                    .zip(eligible)
                    .filter(|(_, &e)| e)
                    .map(|(&r, _)| r)
                    .fold(f64::NEG_INFINITY, f64::max);
                if best > f64::NEG_INFINITY {
                    best
                } else {
                    self.fallback_rates.as_ref().map_or(0.0, |f| f[s])
                }
            })
            .collect())
    }

    pub fn mean_rate(&self, m: usize) -> Result<f64> {
        let r = self.selected_rates(m)?;
        Ok(if r.is_empty() { 0.0 } else { r.iter().sum::<f64>() / r.len() as f64 })
    }

    /// Fraction of samples where at least one of the first `m` members is
    /// feasible on its own.
    pub fn hit_rate(&self, m: usize) -> Result<f64> {
        self.check_prefix(m)?;
        if self.n_samples == 0 {
            return Ok(0.0);
        }
        let hits = (0..self.n_samples).filter(|&s| self.member_eligible(s)[..m].iter().any(|&e| e)).count();
        Ok(hits as f64 / self.n_samples as f64)
    }

    /// How often each of the first `m` members is selected, ties broken
    /// uniformly at random in sample order.
    pub fn selection_histogram(&self, m: usize, rng: &mut SimRng) -> Result<SelectionCounts> {
        self.check_prefix(m)?;
        let mut counts = SelectionCounts { members: vec![0; m], fallback: 0, ties: 0 };
        for s in 0..self.n_samples {
            match argmax_eligible(&self.member_rates(s)[..m], &self.member_eligible(s)[..m], rng) {
                Some((idx, tie)) => {
                    counts.members[idx] += 1;
                    counts.ties += usize::from(tie);
                }
                None => counts.fallback += 1,
            }
        }
        Ok(counts)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SelectionCounts {
    pub members: Vec<usize>,
    /// Samples where no member was eligible and the fallback was deployed.
    pub fallback: usize,
    /// Samples whose winner was drawn among exact ties.
    pub ties: usize,
}

impl SelectionCounts {
    pub fn total(&self) -> usize {
        self.members.iter().sum::<usize>() + self.fallback
    }
}

/// Candidate rates and eligibility of one member over a dataset.
pub fn member_column(model: &PcnetModel, samples: &[ChannelSample]) -> Result<(Vec<f64>, Vec<bool>)> {
    let raw = model.infer_batch(samples)?;
    let mut rates = Vec::with_capacity(samples.len());
    let mut eligible = Vec::with_capacity(samples.len());
    for (sample, p) in samples.iter().zip(raw) {
        match &model.objective {
            Objective::Srm => {
                let p = round_binary_at(&p, model.pmax, model.binary_threshold);
                rates.push(sum_rate_unchecked(sample, p.powers()));
                eligible.push(true);
            }
            Objective::SrmQc { qos, .. } => {
                rates.push(sum_rate_unchecked(sample, p.powers()));
                eligible.push(check_profile_feasible(sample, &p, qos, model.pmax)?);
            }
        }
    }
    Ok((rates, eligible))
}

/// Sum rate of the scaled closed-form profile per sample; zero when all
/// targets are zero. Errors on any infeasible sample.
pub fn fallback_rates(samples: &[ChannelSample], qos: &QosSpec, pmax: f64) -> Result<Vec<f64>> {
    samples
        .iter()
        .map(|s| Ok(feasible_fallback(s, qos, pmax)?.map_or(0.0, |p| sum_rate_unchecked(s, p.powers()))))
        .collect()
}

/// Fraction of samples for which at least one member's raw output meets the
/// rate targets.
pub fn hit_rate(ensemble: &Ensemble, samples: &[ChannelSample], qos: &QosSpec) -> Result<f64> {
    let pmax = ensemble.pmax();
    for (idx, s) in samples.iter().enumerate() {
        if !crate::metrics::qos_feasibility(s, qos, pmax)?.feasible {
            return Err(Error::invalid(format!("sample {idx} is infeasible for the rate targets")));
        }
    }
    if samples.is_empty() {
        return Ok(0.0);
    }
    let raws = ensemble.members.iter().map(|m| m.infer_batch(samples)).collect::<Result<Vec<_>>>()?;
    let mut hits = 0usize;
    for (s, sample) in samples.iter().enumerate() {
        let mut hit = false;
        for raw in &raws {
            if check_profile_feasible(sample, &raw[s], qos, pmax)? {
                hit = true;
                break;
            }
        }
        hits += usize::from(hit);
    }
    Ok(hits as f64 / samples.len() as f64)
}

/// Per-member selection counts over a dataset.
pub fn selection_histogram(ensemble: &Ensemble, samples: &[ChannelSample], rng: &mut SimRng) -> Result<SelectionCounts> {
    CandidateTable::build(ensemble, samples)?.selection_histogram(ensemble.len(), rng)
}
