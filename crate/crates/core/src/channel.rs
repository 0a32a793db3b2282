//! Channel realizations for the K-user interference channel.
//!
//! Only squared link magnitudes are stored. The gain matrix is row-major with
//! `gains[j * k + i] = |h_{j,i}|^2`, the link from transmitter `j` to
//! receiver `i`; the diagonal holds the direct links.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::rng::SimRng;
use crate::{Error, Result};

/// Noise power that yields `esn0_db = 10 log10(pmax / noise)`.
pub fn esn0_to_noise(esn0_db: f64, pmax: f64) -> Result<f64> {
    if !esn0_db.is_finite() || !pmax.is_finite() {
        return Err(Error::invalid("EsN0 and pmax must be finite"));
    }
    if pmax <= 0.0 {
        return Err(Error::invalid(format!("pmax must be positive, got {pmax}")));
    }
    Ok(pmax / 10f64.powf(esn0_db / 10.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    pub k: usize,
    pub pmax: f64,
    pub noise_power: f64,
    pub esn0_db: Option<f64>,
}

impl SystemConfig {
    pub fn new(k: usize, pmax: f64, noise_power: f64) -> Result<Self> {
        let cfg = Self { k, pmax, noise_power, esn0_db: None };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_esn0(k: usize, pmax: f64, esn0_db: f64) -> Result<Self> {
        let noise_power = esn0_to_noise(esn0_db, pmax)?;
        let cfg = Self { k, pmax, noise_power, esn0_db: Some(esn0_db) };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("user count K must be at least 1"));
        }
        if !(self.pmax.is_finite() && self.pmax > 0.0) {
            return Err(Error::invalid(format!("pmax must be positive, got {}", self.pmax)));
        }
        if !(self.noise_power.is_finite() && self.noise_power > 0.0) {
            return Err(Error::invalid(format!(
                "noise power must be positive, got {}",
                self.noise_power
            )));
        }
        if let Some(db) = self.esn0_db {
            let expected = esn0_to_noise(db, self.pmax)?;
            if ((self.noise_power - expected) / expected).abs() > 1e-12 {
                return Err(Error::invalid(format!(
                    "noise power {} inconsistent with EsN0 {db} dB",
                    self.noise_power
                )));
            }
        }
        Ok(())
    }
}

/// One block-fading realization: squared gains plus receiver noise power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSample {
    k: usize,
    gains: Vec<f64>,
    noise_power: f64,
}

impl ChannelSample {
    pub fn new(k: usize, gains: Vec<f64>, noise_power: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("user count K must be at least 1"));
        }
        if gains.len() != k * k {
            return Err(Error::invalid(format!(
                "expected {} gains for K={k}, got {}",
                k * k,
                gains.len()
            )));
        }
        if gains.iter().any(|g| !g.is_finite() || *g < 0.0) {
            return Err(Error::invalid("gains must be finite and non-negative"));
        }
        if (0..k).any(|i| gains[i * k + i] <= 0.0) {
            return Err(Error::invalid("direct-link gains must be positive"));
        }
        if !(noise_power.is_finite() && noise_power > 0.0) {
            return Err(Error::invalid(format!("noise power must be positive, got {noise_power}")));
        }
        Ok(Self { k, gains, noise_power })
    }

    /// Builds a sample from nested rows, `rows[j][i] = |h_{j,i}|^2`.
    pub fn from_rows(rows: &[Vec<f64>], noise_power: f64) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::invalid("gain matrix must be square"));
        }
        Self::new(k, rows.concat(), noise_power)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_power
    }

    /// Squared gain of the link from transmitter `tx` to receiver `rx`.
    #[inline]
    pub fn gain(&self, tx: usize, rx: usize) -> f64 {
        self.gains[tx * self.k + rx]
    }

    #[inline]
    pub fn direct(&self, i: usize) -> f64 {
        self.gains[i * self.k + i]
    }

    /// Row-major gains, `gains()[tx * k + rx]`.
    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn with_noise_power(&self, noise_power: f64) -> Result<Self> {
        Self::new(self.k, self.gains.clone(), noise_power)
    }
}

/// Squared magnitude of a unit-variance circularly-symmetric complex Gaussian.
fn cn_power(rng: &mut SimRng) -> f64 {
    let (re, im) = cn_draw(rng);
    re * re + im * im
}

fn cn_draw(rng: &mut SimRng) -> (f64, f64) {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    (re * std::f64::consts::FRAC_1_SQRT_2, im * std::f64::consts::FRAC_1_SQRT_2)
}

/// Guard against the (probability-zero) exact-zero direct link.
fn positive(g: f64) -> f64 {
    if g > 0.0 {
        g
    } else {
        f64::MIN_POSITIVE
    }
}

pub fn sample_rayleigh(config: &SystemConfig, rng: &mut SimRng) -> ChannelSample {
    let k = config.k;
    let gains = (0..k * k).map(|_| positive(cn_power(rng))).collect();
    ChannelSample { k, gains, noise_power: config.noise_power }
}

/// Rician fading with a unit-modulus line-of-sight term whose phase is drawn
/// per entry. Total mean power is one for every K-factor.
pub fn sample_rician(config: &SystemConfig, k_factor_db: f64, rng: &mut SimRng) -> ChannelSample {
    let kappa = 10f64.powf(k_factor_db / 10.0);
    let los = (kappa / (1.0 + kappa)).sqrt();
    let nlos = (1.0 / (1.0 + kappa)).sqrt();
    let k = config.k;
    let gains = (0..k * k)
        .map(|_| {
            let phase = rng.random::<f64>() * std::f64::consts::TAU;
            let (w_re, w_im) = cn_draw(rng);
            let re = los * phase.cos() + nlos * w_re;
            let im = los * phase.sin() + nlos * w_im;
            positive(re * re + im * im)
        })
        .collect();
    ChannelSample { k, gains, noise_power: config.noise_power }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathLoss {
    /// `G = 1 / (1 + d^2)`, bounded at short range.
    BoundedInverseSquare,
}

impl PathLoss {
    pub fn gain(self, distance: f64) -> f64 {
        match self {
            PathLoss::BoundedInverseSquare => 1.0 / (1.0 + distance * distance),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub area_side: f64,
    pub pathloss: PathLoss,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        Self { area_side: 10.0, pathloss: PathLoss::BoundedInverseSquare }
    }
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.area_side.is_finite() && self.area_side > 0.0) {
            return Err(Error::invalid(format!("area side must be positive, got {}", self.area_side)));
        }
        Ok(())
    }
}

/// Transmitter and receiver coordinates of one geometry draw.
#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub tx: Vec<[f64; 2]>,
    pub rx: Vec<[f64; 2]>,
}

impl Placement {
    pub fn uniform(k: usize, side: f64, rng: &mut SimRng) -> Self {
        let mut point = || [rng.random::<f64>() * side, rng.random::<f64>() * side];
        let tx = (0..k).map(|_| point()).collect();
        let rx = (0..k).map(|_| point()).collect();
        Self { tx, rx }
    }

    pub fn distance(&self, tx: usize, rx: usize) -> f64 {
        let [x0, y0] = self.tx[tx];
        let [x1, y1] = self.rx[rx];
        (x0 - x1).hypot(y0 - y1)
    }
}

/// Large-scale pathloss times small-scale Rayleigh fading for fixed positions.
/// Returns the sample together with the small-scale powers `|f|^2`.
pub fn sample_geometry_at(
    config: &SystemConfig,
    geo: &GeometryConfig,
    placement: &Placement,
    rng: &mut SimRng,
) -> (ChannelSample, Vec<f64>) {
    let k = config.k;
    let mut gains = Vec::with_capacity(k * k);
    let mut fading = Vec::with_capacity(k * k);
    for j in 0..k {
        for i in 0..k {
            let f = cn_power(rng);
            fading.push(f);
            gains.push(positive(geo.pathloss.gain(placement.distance(j, i)) * f));
        }
    }
    (ChannelSample { k, gains, noise_power: config.noise_power }, fading)
}

pub fn sample_geometry(config: &SystemConfig, geo: &GeometryConfig, rng: &mut SimRng) -> ChannelSample {
    let placement = Placement::uniform(config.k, geo.area_side, rng);
    sample_geometry_at(config, geo, &placement, rng).0
}

/// Fading model selector shared by dataset generation and training streams.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChannelModel {
    Rayleigh,
    Rician { k_factor_db: f64 },
    Geometry { area_side: f64 },
}

impl ChannelModel {
    pub fn tag(&self) -> u8 {
        match self {
            ChannelModel::Rayleigh => 0,
            ChannelModel::Rician { .. } => 1,
            ChannelModel::Geometry { .. } => 2,
        }
    }

    /// The single model parameter (K-factor in dB or area side); zero for Rayleigh.
    pub fn parameter(&self) -> f64 {
        match *self {
            ChannelModel::Rayleigh => 0.0,
            ChannelModel::Rician { k_factor_db } => k_factor_db,
            ChannelModel::Geometry { area_side } => area_side,
        }
    }

    pub fn from_tag(tag: u8, parameter: f64) -> Option<Self> {
        match tag {
            0 => Some(ChannelModel::Rayleigh),
            1 => Some(ChannelModel::Rician { k_factor_db: parameter }),
            2 => Some(ChannelModel::Geometry { area_side: parameter }),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ChannelModel::Rayleigh => Ok(()),
            ChannelModel::Rician { k_factor_db } if k_factor_db.is_finite() => Ok(()),
            ChannelModel::Rician { .. } => Err(Error::invalid("K-factor must be finite")),
            ChannelModel::Geometry { area_side } => {
                GeometryConfig { area_side, ..Default::default() }.validate()
            }
        }
    }

    pub fn sample(&self, config: &SystemConfig, rng: &mut SimRng) -> ChannelSample {
        match *self {
            ChannelModel::Rayleigh => sample_rayleigh(config, rng),
            ChannelModel::Rician { k_factor_db } => sample_rician(config, k_factor_db, rng),
            ChannelModel::Geometry { area_side } => {
                sample_geometry(config, &GeometryConfig { area_side, ..Default::default() }, rng)
            }
        }
    }
}

/// An endless stream of channel samples cycling through a set of EsN0 levels
/// so that each level contributes the same number of samples.
#[derive(Debug, Clone)]
pub struct ChannelSource {
    pub model: ChannelModel,
    configs: Vec<SystemConfig>,
    cursor: usize,
}

impl ChannelSource {
    pub fn new(model: ChannelModel, k: usize, pmax: f64, esn0_db_set: &[f64]) -> Result<Self> {
        model.validate()?;
        if esn0_db_set.is_empty() {
            return Err(Error::invalid("EsN0 set must not be empty"));
        }
        let configs = esn0_db_set
            .iter()
            .map(|&db| SystemConfig::from_esn0(k, pmax, db))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { model, configs, cursor: 0 })
    }

    pub fn k(&self) -> usize {
        self.configs[0].k
    }

    pub fn pmax(&self) -> f64 {
        self.configs[0].pmax
    }

    pub fn levels(&self) -> usize {
        self.configs.len()
    }

    pub fn next_sample(&mut self, rng: &mut SimRng) -> ChannelSample {
        let cfg = &self.configs[self.cursor];
        self.cursor = (self.cursor + 1) % self.configs.len();
        self.model.sample(cfg, rng)
    }

    pub fn batch(&mut self, n: usize, rng: &mut SimRng) -> Vec<ChannelSample> {
        (0..n).map(|_| self.next_sample(rng)).collect()
    }
}
