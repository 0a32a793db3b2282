//! Classical power-control solvers used as comparison points.
//!
//! All solvers are pure per-sample functions returning profiles inside
//! `[0, pmax]^K`. Iterative solvers stop when the relative sum-rate change
//! between consecutive sweeps drops to `stop_tol`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSample;
use crate::metrics::{sum_rate_unchecked, PowerProfile, QosSpec};
use crate::rng::SimRng;
use crate::{Error, Result};

pub const DEFAULT_STOP_TOL: f64 = 1e-4;
pub const DEFAULT_WMMSE_MAX_ITERATIONS: usize = 500;

/// `|R_t - R_{t-1}| / R_{t-1} <= tol`; two zero rates count as converged.
fn converged(prev: f64, next: f64, tol: f64) -> bool {
    if prev > 0.0 {
        (next - prev).abs() / prev <= tol
    } else {
        next == prev
    }
}

// ── WMMSE ──────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum WmmseInit {
    /// Every amplitude at `sqrt(pmax)`.
    FullPower,
    /// Explicit initial amplitudes, clipped to `[0, sqrt(pmax)]`.
    Amplitudes(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WmmseConfig {
    pub stop_tol: f64,
    pub max_iterations: usize,
    pub init: WmmseInit,
}

impl Default for WmmseConfig {
    fn default() -> Self {
        Self { stop_tol: DEFAULT_STOP_TOL, max_iterations: DEFAULT_WMMSE_MAX_ITERATIONS, init: WmmseInit::FullPower }
    }
}

impl WmmseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.stop_tol > 0.0) {
            return Err(Error::invalid("WMMSE stop tolerance must be positive"));
        }
        if self.max_iterations == 0 {
            return Err(Error::invalid("WMMSE needs at least one iteration"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WmmseOutcome {
    pub profile: PowerProfile,
    pub iterations: usize,
    pub converged: bool,
}

/// i.i.d. `Uniform[0, sqrt(pmax)]` initial amplitudes.
pub fn random_amplitudes(k: usize, pmax: f64, rng: &mut SimRng) -> Vec<f64> {
    let top = pmax.sqrt();
    (0..k).map(|_| rng.random::<f64>() * top).collect()
}

/// Scalar WMMSE on amplitudes `v_i`:
///
/// ```text
/// u_i = sqrt(g_ii) v_i / (noise + sum_j g_ji v_j^2)
/// w_i = 1 / (1 - u_i sqrt(g_ii) v_i)
/// v_i = clip(w_i u_i sqrt(g_ii) / sum_j g_ij u_j^2 w_j, 0, sqrt(pmax))
/// ```
///
/// All users are updated jointly per iteration and the sum rate is checked
/// after every sweep.
pub fn wmmse(sample: &ChannelSample, pmax: f64, config: &WmmseConfig) -> Result<WmmseOutcome> {
    config.validate()?;
    let k = sample.k();
    let top = pmax.sqrt();
    let mut v: Vec<f64> = match &config.init {
        WmmseInit::FullPower => vec![top; k],
        WmmseInit::Amplitudes(a) => {
            if a.len() != k {
                return Err(Error::invalid(format!("WMMSE init has {} entries for K={k}", a.len())));
            }
            a.iter().map(|&x| x.clamp(0.0, top)).collect()
        }
    };
    let noise = sample.noise_power();
    let amp: Vec<f64> = (0..k).map(|i| sample.direct(i).sqrt()).collect();
    let mut u = vec![0.0; k];
    let mut w = vec![0.0; k];
    let mut powers: Vec<f64> = v.iter().map(|x| x * x).collect();
    let mut rate = sum_rate_unchecked(sample, &powers);
    let mut iterations = 0;
    let mut done = false;
    while iterations < config.max_iterations {
        iterations += 1;
        for i in 0..k {
            let mut rx = noise;
            for j in 0..k {
                rx += sample.gain(j, i) * powers[j];
            }
            u[i] = amp[i] * v[i] / rx;
            // 1 - u sqrt(g) v = noise-plus-interference / total > 0
            w[i] = 1.0 / (1.0 - u[i] * amp[i] * v[i]);
        }
        for i in 0..k {
            let mut denom = 0.0;
            for j in 0..k {
                denom += sample.gain(i, j) * u[j] * u[j] * w[j];
            }
            let num = w[i] * u[i] * amp[i];
            v[i] = if denom > 0.0 { (num / denom).clamp(0.0, top) } else { 0.0 };
        }
        for (p, x) in powers.iter_mut().zip(&v) {
            *p = x * x;
        }
        let next = sum_rate_unchecked(sample, &powers);
        let stop = converged(rate, next, config.stop_tol);
        rate = next;
        if stop {
            done = true;
            break;
        }
    }
    let profile = PowerProfile::new(powers.into_iter().map(|p| p.min(pmax)).collect());
    Ok(WmmseOutcome { profile, iterations, converged: done })
}

/// Runs one WMMSE from a fresh random initialization.
pub fn wmmse_random(
    sample: &ChannelSample,
    pmax: f64,
    stop_tol: f64,
    max_iterations: usize,
    rng: &mut SimRng,
) -> Result<WmmseOutcome> {
    let init = WmmseInit::Amplitudes(random_amplitudes(sample.k(), pmax, rng));
    wmmse(sample, pmax, &WmmseConfig { stop_tol, max_iterations, init })
}

/// Best of `n_inits` random-start WMMSE runs, with the per-run rates in
/// draw order.
pub fn wmmse_multi(
    sample: &ChannelSample,
    pmax: f64,
    n_inits: usize,
    rng: &mut SimRng,
) -> Result<(PowerProfile, Vec<f64>)> {
    if n_inits == 0 {
        return Err(Error::invalid("WMMSE needs at least one initialization"));
    }
    let mut best: Option<(PowerProfile, f64)> = None;
    let mut rates = Vec::with_capacity(n_inits);
    for _ in 0..n_inits {
        let out = wmmse_random(sample, pmax, DEFAULT_STOP_TOL, DEFAULT_WMMSE_MAX_ITERATIONS, rng)?;
        let r = sum_rate_unchecked(sample, out.profile.powers());
        rates.push(r);
        if best.as_ref().is_none_or(|(_, b)| r > *b) {
            best = Some((out.profile, r));
        }
    }
    Ok((best.expect("n_inits >= 1").0, rates))
}

// ── Binary power control ───────────────────────────────────────────────────

/// Additive greedy: starting from silence, repeatedly switch on the user whose
/// activation raises the sum rate most; stop when no activation helps.
pub fn gbpc(sample: &ChannelSample, pmax: f64) -> PowerProfile {
    let k = sample.k();
    let mut powers = vec![0.0; k];
    let mut current = 0.0;
    loop {
        let mut best: Option<(usize, f64)> = None;
        for i in 0..k {
            if powers[i] > 0.0 {
                continue;
            }
            powers[i] = pmax;
            let r = sum_rate_unchecked(sample, &powers);
            powers[i] = 0.0;
            if r > current && best.is_none_or(|(_, b)| r > b) {
                best = Some((i, r));
            }
        }
        match best {
            Some((i, r)) => {
                powers[i] = pmax;
                current = r;
            }
            None => break,
        }
    }
    PowerProfile::new(powers)
}

pub const OPTBPC_MAX_USERS: usize = 22;

/// Exhaustive search over `{0, pmax}^K`, visiting profiles in Gray-code order
/// so each step updates the interference sums in `O(K)`. Ties keep the
/// profile visited first.
pub fn optbpc(sample: &ChannelSample, pmax: f64) -> Result<PowerProfile> {
    let k = sample.k();
    if k > OPTBPC_MAX_USERS {
        return Err(Error::Capacity(format!(
            "exhaustive binary search supports K <= {OPTBPC_MAX_USERS}, got {k}"
        )));
    }
    let noise = sample.noise_power();
    let mut on = vec![false; k];
    // received[i] = noise + sum over active j of pmax g_ji
    let mut received = vec![noise; k];
    let mut best_mask = 0u32;
    let mut best_rate = 0.0;
    let mut gray = 0u32;
    for step in 1u32..(1u32 << k) {
        let flip = step.trailing_zeros() as usize;
        gray ^= 1 << flip;
        let delta = if on[flip] { -pmax } else { pmax };
        on[flip] = !on[flip];
        for (i, r) in received.iter_mut().enumerate() {
            *r += delta * sample.gain(flip, i);
        }
        let mut total = 0.0;
        for i in 0..k {
            if on[i] {
                let signal = pmax * sample.direct(i);
                total += (signal / (received[i] - signal)).ln_1p();
            }
        }
        if total > best_rate {
            best_rate = total;
            best_mask = gray;
        }
        if step.is_multiple_of(4096) {
            // Re-anchor the running sums to bound accumulated rounding.
            for (i, r) in received.iter_mut().enumerate() {
                *r = noise + (0..k).filter(|&j| on[j]).map(|j| pmax * sample.gain(j, i)).sum::<f64>();
            }
        }
    }
    let powers = (0..k).map(|i| if best_mask >> i & 1 == 1 { pmax } else { 0.0 }).collect();
    Ok(PowerProfile::new(powers))
}

// ── Round-robin coordinate ascent ──────────────────────────────────────────

pub const RR_GRID_POINTS: usize = 1001;
pub const RR_REFINE_TOL: f64 = 1e-6;
pub const RR_MAX_SWEEPS: usize = 1000;

/// Sum rate as a function of one user's power, all others fixed.
struct Coordinate<'a> {
    sample: &'a ChannelSample,
    user: usize,
    /// Per receiver: noise plus interference from users other than `user`.
    base: Vec<f64>,
    others: &'a [f64],
}

impl<'a> Coordinate<'a> {
    fn new(sample: &'a ChannelSample, powers: &'a [f64], user: usize) -> Self {
        let k = sample.k();
        let base = (0..k)
            .map(|i| {
                sample.noise_power()
                    + (0..k).filter(|&j| j != user && j != i).map(|j| powers[j] * sample.gain(j, i)).sum::<f64>()
            })
            .collect();
        Self { sample, user, base, others: powers }
    }

    fn rate(&self, p: f64) -> f64 {
        let k = self.sample.k();
        let mut total = 0.0;
        for i in 0..k {
            if i == self.user {
                total += (p * self.sample.direct(i) / self.base[i]).ln_1p();
            } else {
                let interference = self.base[i] + p * self.sample.gain(self.user, i);
                total += (self.others[i] * self.sample.direct(i) / interference).ln_1p();
            }
        }
        total * std::f64::consts::LOG2_E
    }
}

fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > tol {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Maximizes the sum rate over one user's power in `[0, pmax]`: a dense grid
/// locates the best cell, golden-section search refines it, and the current
/// power is kept unless a candidate strictly improves on it.
pub fn best_single_user_power(sample: &ChannelSample, powers: &[f64], user: usize, pmax: f64) -> f64 {
    let coord = Coordinate::new(sample, powers, user);
    let current = powers[user];
    let mut best = (current, coord.rate(current));
    let step = pmax / (RR_GRID_POINTS - 1) as f64;
    let mut grid_best = (0usize, f64::NEG_INFINITY);
    for idx in 0..RR_GRID_POINTS {
        let r = coord.rate(idx as f64 * step);
        if r > grid_best.1 {
            grid_best = (idx, r);
        }
    }
    let grid_p = grid_best.0 as f64 * step;
    if grid_best.1 > best.1 {
        best = (grid_p, grid_best.1);
    }
    let lo = (grid_best.0.saturating_sub(1)) as f64 * step;
    let hi = ((grid_best.0 + 1).min(RR_GRID_POINTS - 1)) as f64 * step;
    let (p, r) = golden_section(|x| coord.rate(x), lo, hi, RR_REFINE_TOL);
    if r > best.1 {
        best = (p, r);
    }
    best.0.clamp(0.0, pmax)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RrOutcome {
    pub profile: PowerProfile,
    pub sweeps: usize,
    /// Sum rate after every single-user update, starting with the initial rate.
    pub trace: Vec<f64>,
}

/// Cyclic coordinate ascent from full power.
pub fn rr_coordinate_ascent(sample: &ChannelSample, pmax: f64, stop_tol: f64) -> PowerProfile {
    rr_from(sample, pmax, stop_tol, vec![pmax; sample.k()]).profile
}

pub fn rr_from(sample: &ChannelSample, pmax: f64, stop_tol: f64, start: Vec<f64>) -> RrOutcome {
    let k = sample.k();
    let mut powers: Vec<f64> = start.into_iter().map(|p| p.clamp(0.0, pmax)).collect();
    let mut rate = sum_rate_unchecked(sample, &powers);
    let mut trace = vec![rate];
    let mut sweeps = 0;
    while sweeps < RR_MAX_SWEEPS {
        sweeps += 1;
        for user in 0..k {
            powers[user] = best_single_user_power(sample, &powers, user, pmax);
            trace.push(sum_rate_unchecked(sample, &powers));
        }
        let next = sum_rate_unchecked(sample, &powers);
        let stop = converged(rate, next, stop_tol);
        rate = next;
        if stop {
            break;
        }
    }
    RrOutcome { profile: PowerProfile::new(powers), sweeps, trace }
}

// ── Grid oracle for minimum-rate problems ──────────────────────────────────

pub const GRID_MAX_USERS: usize = 4;
pub const GRID_MAX_POINTS: usize = 101;

#[derive(Debug, Clone, PartialEq)]
pub enum GridVerdict {
    Feasible { profile: PowerProfile, sum_rate: f64 },
    Infeasible {
        /// Smallest worst-user rate shortfall (bits) over the grid.
        min_violation: f64,
    },
}

fn check_grid(sample: &ChannelSample, qos: &QosSpec, points: usize) -> Result<()> {
    let k = sample.k();
    if k > GRID_MAX_USERS {
        return Err(Error::Capacity(format!("grid oracle supports K <= {GRID_MAX_USERS}, got {k}")));
    }
    if !(2..=GRID_MAX_POINTS).contains(&points) {
        return Err(Error::Capacity(format!("grid points per axis must be in 2..={GRID_MAX_POINTS}")));
    }
    if qos.len() != k {
        return Err(Error::invalid("QoS spec dimension does not match K"));
    }
    Ok(())
}

fn grid_value(idx: usize, points: usize, pmax: f64) -> f64 {
    if idx + 1 == points {
        pmax
    } else {
        pmax * idx as f64 / (points - 1) as f64
    }
}

/// Visits every point of the uniform grid (endpoints 0 and `pmax` included)
/// in lexicographic order until `visit` returns `false`.
fn for_each_grid_point(k: usize, points: usize, pmax: f64, mut visit: impl FnMut(&[f64]) -> bool) {
    let mut idx = vec![0usize; k];
    let mut powers = vec![0.0; k];
    loop {
        if !visit(&powers) {
            return;
        }
        let mut d = 0;
        loop {
            if d == k {
                return;
            }
            idx[d] += 1;
            if idx[d] < points {
                powers[d] = grid_value(idx[d], points, pmax);
                break;
            }
            idx[d] = 0;
            powers[d] = 0.0;
            d += 1;
        }
    }
}

fn worst_shortfall(sample: &ChannelSample, powers: &[f64], qos: &QosSpec, rates: &mut [f64]) -> f64 {
    crate::metrics::rates_unchecked(sample, powers, rates);
    rates.iter().zip(qos.r_min()).map(|(r, m)| m - r).fold(f64::NEG_INFINITY, f64::max)
}

/// Best feasible grid point by sum rate, or the infeasible verdict with the
/// grid's smallest constraint shortfall.
pub fn grid_oracle_srm_qc(
    sample: &ChannelSample,
    qos: &QosSpec,
    pmax: f64,
    points_per_axis: usize,
) -> Result<GridVerdict> {
    check_grid(sample, qos, points_per_axis)?;
    let k = sample.k();
    let mut rates = vec![0.0; k];
    let mut best: Option<(Vec<f64>, f64)> = None;
    let mut min_violation = f64::INFINITY;
    for_each_grid_point(k, points_per_axis, pmax, |p| {
        let shortfall = worst_shortfall(sample, p, qos, &mut rates);
        if shortfall <= crate::metrics::RATE_TOLERANCE {
            let r: f64 = rates.iter().sum();
            if best.as_ref().is_none_or(|(_, b)| r > *b) {
                best = Some((p.to_vec(), r));
            }
        } else {
            min_violation = min_violation.min(shortfall);
        }
        true
    });
    Ok(match best {
        Some((p, r)) => GridVerdict::Feasible { profile: PowerProfile::new(p), sum_rate: r },
        None => GridVerdict::Infeasible { min_violation },
    })
}

/// Whether any grid point meets every rate target; stops at the first hit.
pub fn grid_feasible(sample: &ChannelSample, qos: &QosSpec, pmax: f64, points_per_axis: usize) -> Result<bool> {
    check_grid(sample, qos, points_per_axis)?;
    let mut found = false;
    let mut rates = vec![0.0; sample.k()];
    for_each_grid_point(sample.k(), points_per_axis, pmax, |p| {
        found = worst_shortfall(sample, p, qos, &mut rates) <= crate::metrics::RATE_TOLERANCE;
        !found
    });
    Ok(found)
}

// ── WMMSE landscape ────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandscapeStats {
    pub mean: f64,
    /// Unbiased sample variance of the per-run sum rates.
    pub variance: f64,
    /// `sqrt(variance) / mean`, zero when the mean is zero.
    pub cv: f64,
}

impl LandscapeStats {
    pub fn from_rates(rates: &[f64]) -> Result<Self> {
        if rates.len() < 2 {
            return Err(Error::invalid("landscape statistics need at least two runs"));
        }
        let n = rates.len() as f64;
        let mean = rates.iter().sum::<f64>() / n;
        let variance = (rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (n - 1.0)).max(0.0);
        let cv = if mean > 0.0 { variance.sqrt() / mean } else { 0.0 };
        Ok(Self { mean, variance, cv })
    }
}

/// Sum-rate spread of `n_runs` random-start WMMSE runs on one sample.
pub fn landscape_stats(sample: &ChannelSample, pmax: f64, n_runs: usize, rng: &mut SimRng) -> Result<LandscapeStats> {
    if n_runs < 2 {
        return Err(Error::invalid("landscape statistics need at least two runs"));
    }
    let rates = (0..n_runs)
        .map(|_| {
            wmmse_random(sample, pmax, DEFAULT_STOP_TOL, DEFAULT_WMMSE_MAX_ITERATIONS, rng)
                .map(|o| sum_rate_unchecked(sample, o.profile.powers()))
        })
        .collect::<Result<Vec<_>>>()?;
    LandscapeStats::from_rates(&rates)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_rayleigh, SystemConfig};
    use crate::metrics::{check_profile_feasible, sum_rate};
    use crate::rng::rng_from_seed;

    fn two_user(g_ii: f64, g_cross: f64, noise: f64) -> ChannelSample {
        ChannelSample::from_rows(&[vec![g_ii, g_cross], vec![g_cross, g_ii]], noise).unwrap()
    }

    fn brute_force_binary(sample: &ChannelSample, pmax: f64) -> f64 {
        let k = sample.k();
        (0..1u32 << k)
            .map(|mask| {
                let p: Vec<f64> = (0..k).map(|i| if mask >> i & 1 == 1 { pmax } else { 0.0 }).collect();
                sum_rate_unchecked(sample, &p)
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn wmmse_single_user_goes_to_full_power() {
        let s = ChannelSample::from_rows(&[vec![1.0]], 0.1).unwrap();
        for init in [0.05, 0.3, 1.0] {
            let cfg = WmmseConfig { init: WmmseInit::Amplitudes(vec![init]), ..Default::default() };
            let out = wmmse(&s, 1.0, &cfg).unwrap();
            assert!((out.profile[0] - 1.0).abs() < 1e-12, "{:?}", out);
            assert!(out.converged);
        }
    }

    #[test]
    fn wmmse_strong_interference_beats_all_on() {
        let s = two_user(1.0, 100.0, 0.1);
        let all_on = sum_rate(&s, &PowerProfile::full(2, 1.0)).unwrap();
        let mut rng = rng_from_seed(1);
        for _ in 0..20 {
            let out = wmmse_random(&s, 1.0, DEFAULT_STOP_TOL, 500, &mut rng).unwrap();
            assert!(sum_rate(&s, &out.profile).unwrap() >= all_on);
            assert!(out.profile.in_box(1.0));
        }
    }

    #[test]
    fn wmmse_rejects_bad_config() {
        let s = two_user(1.0, 0.5, 0.1);
        let cfg = WmmseConfig { stop_tol: 0.0, ..Default::default() };
        assert!(wmmse(&s, 1.0, &cfg).is_err());
        let cfg = WmmseConfig { init: WmmseInit::Amplitudes(vec![1.0]), ..Default::default() };
        assert!(wmmse(&s, 1.0, &cfg).is_err());
    }

    #[test]
    fn wmmse_multi_single_init_matches_wmmse() {
        let cfg = SystemConfig::from_esn0(4, 1.0, 10.0).unwrap();
        let s = sample_rayleigh(&cfg, &mut rng_from_seed(2));
        let (best, rates) = wmmse_multi(&s, 1.0, 1, &mut rng_from_seed(3)).unwrap();
        let single = wmmse_random(&s, 1.0, DEFAULT_STOP_TOL, 500, &mut rng_from_seed(3)).unwrap();
        assert_eq!(best, single.profile);
        assert_eq!(rates.len(), 1);
        assert!(wmmse_multi(&s, 1.0, 0, &mut rng_from_seed(3)).is_err());
    }

    #[test]
    fn gbpc_and_optbpc_examples() {
        let s = two_user(1.0, 10.0, 0.1);
        let g = gbpc(&s, 1.0);
        assert_eq!(g.powers().iter().filter(|&&p| p > 0.0).count(), 1);
        assert!((sum_rate(&s, &g).unwrap() - 11f64.log2()).abs() < 1e-12);
        let both = sum_rate(&s, &PowerProfile::full(2, 1.0)).unwrap();
        assert!((both - 2.0 * (1.0f64 + 1.0 / 10.1).log2()).abs() < 1e-12);
        // 0.27246 is quoted from rounded intermediates; exact value is 0.272432
        assert!((both - 0.27246).abs() < 1e-4);

        let o = optbpc(&s, 1.0).unwrap();
        assert!(o == PowerProfile::new(vec![1.0, 0.0]) || o == PowerProfile::new(vec![0.0, 1.0]));
        assert!((sum_rate(&s, &o).unwrap() - 3.45943).abs() < 1e-5);

        let single = ChannelSample::from_rows(&[vec![0.7]], 0.1).unwrap();
        assert_eq!(gbpc(&single, 1.0).powers(), &[1.0]);
        assert_eq!(optbpc(&single, 1.0).unwrap().powers(), &[1.0]);

        let rows = vec![vec![1.0, 0.0, 0.0], vec![0.0, 2.0, 0.0], vec![0.0, 0.0, 0.5]];
        let free = ChannelSample::from_rows(&rows, 0.1).unwrap();
        assert_eq!(optbpc(&free, 1.0).unwrap().powers(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn optbpc_matches_brute_force() {
        let mut rng = rng_from_seed(4);
        for k in 1..=8 {
            let cfg = SystemConfig::from_esn0(k, 1.0, 10.0).unwrap();
            for _ in 0..20 {
                let s = sample_rayleigh(&cfg, &mut rng);
                let r = sum_rate(&s, &optbpc(&s, 1.0).unwrap()).unwrap();
                assert!((r - brute_force_binary(&s, 1.0)).abs() < 1e-12);
                assert!(r + 1e-12 >= sum_rate(&s, &gbpc(&s, 1.0)).unwrap());
            }
        }
    }

    #[test]
    fn optbpc_capacity_guard() {
        let cfg = SystemConfig::from_esn0(23, 1.0, 10.0).unwrap();
        let s = sample_rayleigh(&cfg, &mut rng_from_seed(5));
        assert!(matches!(optbpc(&s, 1.0), Err(Error::Capacity(_))));
    }

    #[test]
    fn rr_single_user_full_power_in_one_step() {
        let s = ChannelSample::from_rows(&[vec![1.0]], 0.1).unwrap();
        let out = rr_from(&s, 1.0, DEFAULT_STOP_TOL, vec![0.2]);
        assert_eq!(out.profile.powers(), &[1.0]);
        assert!((out.trace[1] - 11f64.log2()).abs() < 1e-12);
    }

    #[test]
    fn rr_is_monotone_and_a_fixed_point() {
        let cfg = SystemConfig::from_esn0(3, 1.0, 10.0).unwrap();
        let mut rng = rng_from_seed(6);
        for _ in 0..30 {
            let s = sample_rayleigh(&cfg, &mut rng);
            let start = random_amplitudes(3, 1.0, &mut rng);
            let out = rr_from(&s, 1.0, DEFAULT_STOP_TOL, start);
            assert!(out.trace.windows(2).all(|w| w[1] >= w[0]));
            assert!(out.profile.in_box(1.0));
            let again = rr_from(&s, 1.0, DEFAULT_STOP_TOL, out.profile.powers().to_vec());
            let r0 = sum_rate(&s, &out.profile).unwrap();
            let r1 = sum_rate(&s, &again.profile).unwrap();
            assert!((r1 - r0).abs() < 1e-3);
        }
    }

    #[test]
    fn golden_section_finds_peak() {
        let (x, _) = golden_section(|x| -(x - 0.3721).powi(2), 0.0, 1.0, 1e-9);
        assert!((x - 0.3721).abs() < 1e-8);
    }

    #[test]
    fn grid_includes_corners() {
        let mut seen = Vec::new();
        for_each_grid_point(2, 3, 2.0, |p| {
            seen.push(p.to_vec());
            true
        });
        assert_eq!(seen.len(), 9);
        assert!(seen.contains(&vec![0.0, 0.0]));
        assert!(seen.contains(&vec![2.0, 2.0]));
        assert!(seen.contains(&vec![1.0, 2.0]));
    }

    #[test]
    fn grid_oracle_examples() {
        let cfg = SystemConfig::from_esn0(2, 1.0, 10.0).unwrap();
        let mut rng = rng_from_seed(7);
        for _ in 0..20 {
            let s = sample_rayleigh(&cfg, &mut rng);
            let GridVerdict::Feasible { sum_rate: r, .. } =
                grid_oracle_srm_qc(&s, &QosSpec::unconstrained(2), 1.0, 11).unwrap()
            else {
                panic!("unconstrained problem must be feasible");
            };
            assert!(r + 1e-12 >= sum_rate_unchecked(&s, optbpc(&s, 1.0).unwrap().powers()));
        }

        let s = two_user(1.0, 0.25, 0.1);
        let qos = QosSpec::new(vec![1.0, 1.0]).unwrap();
        match grid_oracle_srm_qc(&s, &qos, 1.0, 51).unwrap() {
            GridVerdict::Feasible { profile, .. } => {
                assert!(check_profile_feasible(&s, &profile, &qos, 1.0).unwrap());
            }
            GridVerdict::Infeasible { .. } => panic!("example is feasible"),
        }
        assert!(grid_feasible(&s, &qos, 1.0, 51).unwrap());

        let s = two_user(1.0, 1.0, 0.1);
        let hard = QosSpec::new(vec![11f64.log2(); 2]).unwrap();
        assert!(matches!(
            grid_oracle_srm_qc(&s, &hard, 1.0, 51).unwrap(),
            GridVerdict::Infeasible { min_violation } if min_violation > 0.5
        ));
        assert!(!grid_feasible(&s, &hard, 1.0, 51).unwrap());

        let cfg5 = SystemConfig::from_esn0(5, 1.0, 10.0).unwrap();
        let big = sample_rayleigh(&cfg5, &mut rng);
        assert!(matches!(
            grid_oracle_srm_qc(&big, &QosSpec::unconstrained(5), 1.0, 11),
            Err(Error::Capacity(_))
        ));
        assert!(grid_oracle_srm_qc(&s, &QosSpec::unconstrained(2), 1.0, 102).is_err());
    }

    #[test]
    fn landscape_examples() {
        let st = LandscapeStats::from_rates(&[2.0, 2.0, 2.0]).unwrap();
        assert_eq!((st.mean, st.variance, st.cv), (2.0, 0.0, 0.0));
        assert!(LandscapeStats::from_rates(&[1.0]).is_err());
        let st = LandscapeStats::from_rates(&[1.0, 2.0, 4.0]).unwrap();
        assert!((st.cv * st.mean - st.variance.sqrt()).abs() < 1e-12);

        let s = ChannelSample::from_rows(&[vec![0.9]], 0.1).unwrap();
        let st = landscape_stats(&s, 1.0, 10, &mut rng_from_seed(8)).unwrap();
        assert_eq!(st.variance, 0.0);
        assert_eq!(st.cv, 0.0);
    }
}
