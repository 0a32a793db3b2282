//! Classical controllers evaluated per sample over a dataset.

use epcnet_core::baselines::{
    gbpc, grid_oracle_srm_qc, optbpc, rr_coordinate_ascent, wmmse, wmmse_multi, wmmse_random, GridVerdict,
    WmmseConfig, WmmseInit,
};
use epcnet_core::channel::ChannelSample;
use epcnet_core::metrics::{check_profile_feasible, qos_feasibility, sum_rate, PowerProfile, QosSpec};
use epcnet_core::rng::{derive_seed, rng_from_seed};
use rayon::prelude::*;

use crate::config::BaselineSection;
use crate::error::{HarnessError, HarnessResult};

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerRun {
    pub name: String,
    pub rates: Vec<f64>,
    /// Samples where an iterative solver hit its iteration cap.
    pub non_converged: usize,
    /// Samples whose profile meets the rate targets (minimum-rate tasks).
    pub feasible: Option<usize>,
}

struct Output {
    profile: PowerProfile,
    converged: bool,
}

/// The scaled closed-form profile, or full power when every target is zero.
fn fallback_profile(sample: &ChannelSample, qos: &QosSpec, pmax: f64) -> HarnessResult<PowerProfile> {
    let res = qos_feasibility(sample, qos, pmax)?;
    if !res.feasible {
        return Err(HarnessError::Core(epcnet_core::Error::InvalidArgument(
            "dataset contains an instance that is infeasible for the rate targets".into(),
        )));
    }
    Ok(res.p_tilde.unwrap_or_else(|| PowerProfile::full(sample.k(), pmax)))
}

fn profile_for(
    name: &str,
    sample: &ChannelSample,
    pmax: f64,
    qos: Option<&QosSpec>,
    settings: &BaselineSection,
    seed: u64,
) -> HarnessResult<Output> {
    let done = |profile| Ok(Output { profile, converged: true });
    let mut rng = rng_from_seed(seed);
    match name {
        "wmmse" => {
            let out = wmmse_random(sample, pmax, settings.stop_tol, settings.max_iterations, &mut rng)?;
            Ok(Output { profile: out.profile, converged: out.converged })
        }
        "wmmse_full" => {
            let cfg = WmmseConfig {
                stop_tol: settings.stop_tol,
                max_iterations: settings.max_iterations,
                init: WmmseInit::FullPower,
            };
            let out = wmmse(sample, pmax, &cfg)?;
            Ok(Output { profile: out.profile, converged: out.converged })
        }
        "wmmse_multi" => done(wmmse_multi(sample, pmax, settings.wmmse_inits, &mut rng)?.0),
        "gbpc" => done(gbpc(sample, pmax)),
        "optbpc" => done(optbpc(sample, pmax)?),
        "rr" => done(rr_coordinate_ascent(sample, pmax, settings.stop_tol)),
        "full_power" => done(PowerProfile::full(sample.k(), pmax)),
        "fallback" => {
            let qos = qos.ok_or_else(|| HarnessError::Config("the fallback controller needs r_min".into()))?;
            done(fallback_profile(sample, qos, pmax)?)
        }
        "grid_oracle" => {
            let unconstrained = QosSpec::unconstrained(sample.k());
            let q = qos.unwrap_or(&unconstrained);
            match grid_oracle_srm_qc(sample, q, pmax, settings.grid_points)? {
                GridVerdict::Feasible { profile, .. } => done(profile),
                // Feasible only between grid points: deploy the closed form.
                GridVerdict::Infeasible { .. } => done(fallback_profile(sample, q, pmax)?),
            }
        }
        other => Err(HarnessError::Config(format!("unknown controller {other:?}"))),
    }
}

/// Runs one controller over every sample. Random controllers draw their
/// initializations from `derive_seed(seed, sample index)`, so results do not
/// depend on thread scheduling.
pub fn run_controller(
    name: &str,
    samples: &[ChannelSample],
    pmax: f64,
    qos: Option<&QosSpec>,
    settings: &BaselineSection,
    seed: u64,
) -> HarnessResult<ControllerRun> {
    let outputs = samples
        .par_iter()
        .enumerate()
        .map(|(idx, s)| profile_for(name, s, pmax, qos, settings, derive_seed(seed, idx as u64)))
        .collect::<HarnessResult<Vec<_>>>()?;
    let mut rates = Vec::with_capacity(samples.len());
    let mut feasible = 0;
    for (s, out) in samples.iter().zip(&outputs) {
        rates.push(sum_rate(s, &out.profile)?);
        if let Some(q) = qos {
            feasible += usize::from(check_profile_feasible(s, &out.profile, q, pmax)?);
        }
    }
    Ok(ControllerRun {
        name: name.to_owned(),
        rates,
        non_converged: outputs.iter().filter(|o| !o.converged).count(),
        feasible: qos.map(|_| feasible),
    })
}

/// Times `run` single-threaded over the samples, returning seconds.
pub fn time_controller(
    name: &str,
    samples: &[ChannelSample],
    pmax: f64,
    qos: Option<&QosSpec>,
    settings: &BaselineSection,
    seed: u64,
) -> HarnessResult<f64> {
    let start = std::time::Instant::now();
    for (idx, s) in samples.iter().enumerate() {
        let out = profile_for(name, s, pmax, qos, settings, derive_seed(seed, idx as u64))?;
        std::hint::black_box(out.profile);
    }
    Ok(start.elapsed().as_secs_f64())
}

#[cfg(test)]
mod tests {
    use super::*;
    use epcnet_core::channel::{sample_rayleigh, SystemConfig};

    fn data(k: usize, n: usize) -> Vec<ChannelSample> {
        let cfg = SystemConfig::from_esn0(k, 1.0, 10.0).unwrap();
        let mut rng = rng_from_seed(1);
        (0..n).map(|_| sample_rayleigh(&cfg, &mut rng)).collect()
    }

    #[test]
    fn binary_dominance_and_determinism() {
        let d = data(4, 200);
        let s = BaselineSection::default();
        let opt = run_controller("optbpc", &d, 1.0, None, &s, 0).unwrap();
        let greedy = run_controller("gbpc", &d, 1.0, None, &s, 0).unwrap();
        assert!(opt.rates.iter().zip(&greedy.rates).all(|(a, b)| a >= b));
        let w1 = run_controller("wmmse", &d, 1.0, None, &s, 5).unwrap();
        let w2 = run_controller("wmmse", &d, 1.0, None, &s, 5).unwrap();
        assert_eq!(w1, w2);
        assert!(run_controller("magic", &d, 1.0, None, &s, 0).is_err());
        assert!(run_controller("fallback", &d, 1.0, None, &s, 0).is_err());
    }

    #[test]
    fn fallback_is_always_feasible() {
        let qos = QosSpec::new(vec![0.3; 3]).unwrap();
        let d: Vec<_> = data(3, 200).into_iter().filter(|s| qos_feasibility(s, &qos, 1.0).unwrap().feasible).collect();
        let s = BaselineSection { grid_points: 21, ..Default::default() };
        let fb = run_controller("fallback", &d, 1.0, Some(&qos), &s, 0).unwrap();
        assert_eq!(fb.feasible, Some(d.len()));
        let grid = run_controller("grid_oracle", &d, 1.0, Some(&qos), &s, 0).unwrap();
        assert_eq!(grid.feasible, Some(d.len()));
    }
}
