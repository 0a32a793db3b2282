//! Per-user rates under treating interference as noise, and the algebra for
//! minimum-rate feasibility.
//!
//! Rates are in bits per channel use:
//! `R_i = log2(1 + P_i g_ii / (noise + sum_{j != i} P_j g_ji))`.
//!
//! A minimum rate `r_i` is the SINR target `gamma_i = 2^r_i - 1`. With
//! `B_ij = gamma_i g_ji / g_ii` (zero diagonal) and `u_i = gamma_i noise / g_ii`
//! the targets are jointly reachable iff `rho(B) < 1` and the componentwise
//! minimal solution `(I - B)^{-1} u` fits in the power box.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::channel::ChannelSample;
use crate::{Error, Result};

/// Absolute slack on rate constraints.
pub const RATE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerProfile(Vec<f64>);

impl PowerProfile {
    /// Wraps powers without checking the box; see [`PowerProfile::try_new`].
    pub fn new(powers: Vec<f64>) -> Self {
        Self(powers)
    }

    pub fn try_new(powers: Vec<f64>, pmax: f64) -> Result<Self> {
        let p = Self(powers);
        if !p.in_box(pmax) {
            return Err(Error::invalid(format!("powers must lie in [0, {pmax}]")));
        }
        Ok(p)
    }

    pub fn zeros(k: usize) -> Self {
        Self(vec![0.0; k])
    }

    pub fn full(k: usize, pmax: f64) -> Self {
        Self(vec![pmax; k])
    }

    pub fn powers(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn in_box(&self, pmax: f64) -> bool {
        self.0.iter().all(|&p| (0.0..=pmax).contains(&p))
    }

    pub fn max(&self) -> f64 {
        self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl std::ops::Index<usize> for PowerProfile {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

fn check_dim(sample: &ChannelSample, len: usize, what: &str) -> Result<()> {
    if sample.k() != len {
        return Err(Error::invalid(format!(
            "{what} has dimension {len}, channel has K={}",
            sample.k()
        )));
    }
    Ok(())
}

/// Rates computed from a raw power slice; callers guarantee the dimension.
pub(crate) fn rates_unchecked(sample: &ChannelSample, powers: &[f64], out: &mut [f64]) {
    let k = sample.k();
    let noise = sample.noise_power();
    for (i, r) in out.iter_mut().enumerate().take(k) {
        let mut interference = noise;
        for (j, &p) in powers.iter().enumerate() {
            if j != i {
                interference += p * sample.gain(j, i);
            }
        }
        *r = (powers[i] * sample.direct(i) / interference).ln_1p() * std::f64::consts::LOG2_E;
    }
}

pub(crate) fn sum_rate_unchecked(sample: &ChannelSample, powers: &[f64]) -> f64 {
    let k = sample.k();
    let noise = sample.noise_power();
    let mut total = 0.0;
    for i in 0..k {
        let mut interference = noise;
        for (j, &p) in powers.iter().enumerate() {
            if j != i {
                interference += p * sample.gain(j, i);
            }
        }
        total += (powers[i] * sample.direct(i) / interference).ln_1p();
    }
    total * std::f64::consts::LOG2_E
}

pub fn per_user_rates(sample: &ChannelSample, profile: &PowerProfile) -> Result<Vec<f64>> {
    check_dim(sample, profile.len(), "power profile")?;
    let mut out = vec![0.0; sample.k()];
    rates_unchecked(sample, profile.powers(), &mut out);
    Ok(out)
}

pub fn sum_rate(sample: &ChannelSample, profile: &PowerProfile) -> Result<f64> {
    check_dim(sample, profile.len(), "power profile")?;
    Ok(sum_rate_unchecked(sample, profile.powers()))
}

/// Per-user minimum rates and the SINR targets they imply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QosSpec {
    r_min: Vec<f64>,
    gamma_min: Vec<f64>,
}

impl QosSpec {
    pub fn new(r_min: Vec<f64>) -> Result<Self> {
        if r_min.iter().any(|r| !r.is_finite() || *r < 0.0) {
            return Err(Error::invalid("minimum rates must be finite and non-negative"));
        }
        let gamma_min = r_min.iter().map(|&r| r.exp2() - 1.0).collect();
        Ok(Self { r_min, gamma_min })
    }

    pub fn unconstrained(k: usize) -> Self {
        Self { r_min: vec![0.0; k], gamma_min: vec![0.0; k] }
    }

    pub fn r_min(&self) -> &[f64] {
        &self.r_min
    }

    pub fn gamma_min(&self) -> &[f64] {
        &self.gamma_min
    }

    pub fn len(&self) -> usize {
        self.r_min.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_min.is_empty()
    }

    pub fn is_unconstrained(&self) -> bool {
        self.r_min.iter().all(|&r| r == 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityResult {
    pub feasible: bool,
    pub b_matrix: DMatrix<f64>,
    pub spectral_radius: f64,
    /// Minimal power profile meeting every target with equality.
    pub p_hat: Option<PowerProfile>,
    /// `p_hat` scaled so its largest entry is `pmax`. `None` when `p_hat` is
    /// identically zero (no user has a positive target).
    pub p_tilde: Option<PowerProfile>,
}

const POWER_ITERATION_TOL: f64 = 1e-10;
const POWER_ITERATION_CAP: usize = 10_000;

/// Perron root of a non-negative square matrix.
///
/// Power iteration runs on `I + B`, which shares its Perron vector with `B`
/// but has a strictly dominant root, so periodic (zero-diagonal) matrices do
/// not oscillate. Collatz–Wielandt bounds `min_i (Ax)_i/x_i <= rho <= max_i`
/// bracket the root; iteration stops once they agree to the tolerance.
/// Falls back to a dense eigen-decomposition if the bracket does not close.
///
/// Indices whose row or column is zero are peeled off first: such an index
/// only contributes the eigenvalue 0, and leaving it in gives the Perron
/// vector a zero entry that stalls the bracket.
pub fn spectral_radius(b: &DMatrix<f64>) -> f64 {
    let mut keep: Vec<usize> = (0..b.nrows()).collect();
    loop {
        let live = |i: usize| {
            keep.iter().any(|&j| b[(i, j)] != 0.0) && keep.iter().any(|&j| b[(j, i)] != 0.0)
        };
        let next: Vec<usize> = keep.iter().copied().filter(|&i| live(i)).collect();
        if next.len() == keep.len() {
            break;
        }
        keep = next;
    }
    if keep.is_empty() {
        return 0.0;
    }
    let b = b.select_rows(&keep).select_columns(&keep);
    let n = b.nrows();
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    for _ in 0..POWER_ITERATION_CAP {
        let y = &b * &x + &x;
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for i in 0..n {
            if x[i] > 0.0 {
                let ratio = y[i] / x[i];
                lo = lo.min(ratio);
                hi = hi.max(ratio);
            }
        }
        let norm = y.sum();
        if !(norm.is_finite() && norm > 0.0) {
            break;
        }
        x = y / norm;
        if x.iter().all(|&v| v > 0.0) && hi - lo <= POWER_ITERATION_TOL * hi {
            return (0.5 * (lo + hi) - 1.0).max(0.0);
        }
    }
    b.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

pub fn feasibility_matrix(sample: &ChannelSample, qos: &QosSpec) -> Result<DMatrix<f64>> {
    check_dim(sample, qos.len(), "QoS spec")?;
    let k = sample.k();
    let gamma = qos.gamma_min();
    Ok(DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            0.0
        } else {
            gamma[i] * sample.gain(j, i) / sample.direct(i)
        }
    }))
}

pub fn qos_feasibility(sample: &ChannelSample, qos: &QosSpec, pmax: f64) -> Result<FeasibilityResult> {
    let b = feasibility_matrix(sample, qos)?;
    let k = sample.k();
    let rho = spectral_radius(&b);
    let infeasible = |b_matrix| FeasibilityResult {
        feasible: false,
        b_matrix,
        spectral_radius: rho,
        p_hat: None,
        p_tilde: None,
    };
    if rho >= 1.0 {
        return Ok(infeasible(b));
    }
    let noise = sample.noise_power();
    let u = DVector::from_fn(k, |i, _| qos.gamma_min()[i] * noise / sample.direct(i));
    let system = DMatrix::identity(k, k) - &b;
    let solution = system
        .lu()
        .solve(&u)
        .ok_or_else(|| Error::NumericalSingularity(format!("I - B singular with rho(B) = {rho}")))?;
    if solution.iter().any(|v| !v.is_finite()) {
        return Err(Error::NumericalSingularity("non-finite minimal power profile".into()));
    }
    let p_hat: Vec<f64> = solution.iter().map(|&v| v.max(0.0)).collect();
    if p_hat.iter().any(|&p| p > pmax) {
        return Ok(infeasible(b));
    }
    let p_hat = PowerProfile::new(p_hat);
    let p_tilde = scale_feasible(&p_hat, pmax).ok();
    Ok(FeasibilityResult { feasible: true, b_matrix: b, spectral_radius: rho, p_hat: Some(p_hat), p_tilde })
}

/// Allocation-light necessary condition for [`qos_feasibility`], for
/// rejection sampling: `false` means the targets are certainly infeasible.
///
/// Zero-target users get zero minimal power, so only the constrained users'
/// system is solved. For that system with a positive right-hand side, a
/// strictly positive solution exists exactly when the spectral radius is
/// below one.
pub fn qos_screen(sample: &ChannelSample, qos: &QosSpec, pmax: f64) -> bool {
    let gamma = qos.gamma_min();
    let active: Vec<usize> = (0..sample.k()).filter(|&i| gamma[i] > 0.0).collect();
    let n = active.len();
    if n == 0 {
        return true;
    }
    // Augmented [I - B | u] over the constrained users.
    let w = n + 1;
    let mut a = vec![0.0; n * w];
    for (r, &i) in active.iter().enumerate() {
        let scale = gamma[i] / sample.direct(i);
        for (c, &j) in active.iter().enumerate() {
            a[r * w + c] = if r == c { 1.0 } else { -scale * sample.gain(j, i) };
        }
        a[r * w + n] = scale * sample.noise_power();
    }
    for col in 0..n {
        let pivot = (col..n).max_by(|&x, &y| a[x * w + col].abs().total_cmp(&a[y * w + col].abs())).unwrap();
        if a[pivot * w + col] == 0.0 {
            return false;
        }
        if pivot != col {
            for c in 0..w {
                a.swap(pivot * w + c, col * w + c);
            }
        }
        for r in col + 1..n {
            let f = a[r * w + col] / a[col * w + col];
            if f != 0.0 {
                for c in col..w {
                    a[r * w + c] -= f * a[col * w + c];
                }
            }
        }
    }
    let mut p = vec![0.0; n];
    for r in (0..n).rev() {
        let tail: f64 = (r + 1..n).map(|c| a[r * w + c] * p[c]).sum();
        p[r] = (a[r * w + n] - tail) / a[r * w + r];
    }
    p.iter().all(|&v| v > 0.0 && v <= pmax * (1.0 + 1e-9))
}

/// Scales a profile up so its largest entry equals `pmax` exactly.
pub fn scale_feasible(p_hat: &PowerProfile, pmax: f64) -> Result<PowerProfile> {
    let peak = p_hat.max();
    if !(peak > 0.0) {
        return Err(Error::invalid("cannot scale an all-zero power profile"));
    }
    if p_hat.powers().iter().any(|&p| p < 0.0 || !p.is_finite()) {
        return Err(Error::invalid("powers must be finite and non-negative"));
    }
    if peak == pmax {
        return Ok(p_hat.clone());
    }
    let factor = pmax / peak;
    let scaled = p_hat
        .powers()
        .iter()
        .map(|&p| if p == peak { pmax } else { (p * factor).min(pmax) })
        .collect();
    Ok(PowerProfile::new(scaled))
}

/// True iff the profile is in the box and every rate meets its minimum
/// within [`RATE_TOLERANCE`].
pub fn check_profile_feasible(
    sample: &ChannelSample,
    profile: &PowerProfile,
    qos: &QosSpec,
    pmax: f64,
) -> Result<bool> {
    check_dim(sample, qos.len(), "QoS spec")?;
    if !profile.in_box(pmax) {
        return Ok(false);
    }
    let rates = per_user_rates(sample, profile)?;
    Ok(rates
        .iter()
        .zip(qos.r_min())
        .all(|(&r, &r_min)| r >= r_min - RATE_TOLERANCE))
}
