//! Acceptance suite: every criterion at its pinned tolerance, one
//! PASS/FAIL line each. Exits non-zero when any criterion fails.
//!
//! `EPCNET_ACCEPTANCE=3,6` restricts the run to the listed criteria.
//! Criteria 4/5 and 6/7 share their trained ensembles.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use epcnet_core::baselines::{gbpc, grid_oracle_srm_qc, optbpc, wmmse_multi, GridVerdict};
use epcnet_core::channel::{ChannelModel, ChannelSample, ChannelSource};
use epcnet_core::ensemble::{select, CandidateTable, Ensemble};
use epcnet_core::metrics::{check_profile_feasible, per_user_rates, qos_feasibility, sum_rate, QosSpec};
use epcnet_core::pcnet::{objective_loss, Objective, PcnetModel, Variant};
use epcnet_core::rng::{derive_seed, rng_from_seed};
use epcnet_harness::config::{ExperimentConfig, Task};
use epcnet_harness::controllers::run_controller;
use epcnet_harness::generate::draw_dataset;
use epcnet_harness::landscape::level_stats;
use epcnet_harness::streams;
use epcnet_harness::train::train_members;

const SEED: u64 = 20_240_917;
const TRAIN_ITERATIONS: usize = 20_000;
const TEST_SAMPLES: usize = 10_000;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

// ── Shared fixtures ────────────────────────────────────────────────────────

fn config(task: Task, k: usize, esn0: &[f64], r_min: Option<&[f64]>) -> ExperimentConfig {
    config_with(task, k, esn0, r_min, "")
}

fn config_with(task: Task, k: usize, esn0: &[f64], r_min: Option<&[f64]>, extra: &str) -> ExperimentConfig {
    let mut text = format!(
        "task = \"{}\"\nk = {k}\nesn0_db = {esn0:?}\n",
        match task {
            Task::Srm => "srm",
            Task::SrmQc => "srm_qc",
        }
    );
    if let Some(r) = r_min {
        text.push_str(&format!("r_min = {r:?}\n"));
    }
    text.push_str(extra);
    let mut cfg = ExperimentConfig::from_toml(&text).expect("valid acceptance config");
    cfg.training.iterations = TRAIN_ITERATIONS;
    cfg.data.test_size = TEST_SAMPLES;
    cfg
}

fn train_ensemble(cfg: &ExperimentConfig, objective: &Objective, m: usize, seed: u64) -> Ensemble {
    let members = train_members(cfg, objective, m, seed).expect("training runs");
    let models: Vec<PcnetModel> = members
        .into_iter()
        .map(|t| t.model.unwrap_or_else(|| panic!("member {} diverged: {:?}", t.report.index, t.report.diverged)))
        .collect();
    Ensemble::new(models).expect("consistent members")
}

fn test_set(cfg: &ExperimentConfig, n: usize, seed: u64) -> Vec<ChannelSample> {
    draw_dataset(cfg, n, derive_seed(seed, streams::TEST_DATA)).expect("test set").samples
}

struct K10 {
    cfg: ExperimentConfig,
    ensemble: Ensemble,
    test: Vec<ChannelSample>,
}

struct Qc5 {
    cfg: ExperimentConfig,
    ensemble: Ensemble,
    test: Vec<ChannelSample>,
}

#[derive(Default)]
struct Fixtures {
    k10: Option<K10>,
    qc5: Option<Qc5>,
}

impl Fixtures {
    fn k10(&mut self) -> &K10 {
        self.k10.get_or_insert_with(|| {
            let mut cfg = config(Task::Srm, 10, &[10.0], None);
            cfg.baselines.controllers = vec!["wmmse".into(), "gbpc".into(), "optbpc".into()];
            let ensemble = train_ensemble(&cfg, &cfg.objective(), 5, SEED);
            let test = test_set(&cfg, TEST_SAMPLES, SEED);
            K10 { cfg, ensemble, test }
        })
    }

    fn qc5(&mut self) -> &Qc5 {
        self.qc5.get_or_insert_with(|| {
            let cfg = config(Task::SrmQc, 5, &[10.0], Some(&[0.5, 0.5, 0.5, 0.0, 0.0]));
            let ensemble = train_ensemble(&cfg, &cfg.objective_with_lambda(10.0), 5, SEED);
            let test = test_set(&cfg, TEST_SAMPLES, SEED);
            Qc5 { cfg, ensemble, test }
        })
    }
}

// ── 1. Gradient oracle ─────────────────────────────────────────────────────

const FD_STEP: f64 = 1e-5;
const FD_REL_TOL: f64 = 1e-4;
/// Below this magnitude both values are rounding noise of the stencil.
const FD_ABS_FLOOR: f64 = 1e-8;

fn loss_signature(model: &PcnetModel, batch: &[ChannelSample]) -> (f64, Vec<bool>, Vec<bool>) {
    let eval = objective_loss(model, batch).unwrap();
    (eval.loss, eval.cache.relu_pattern(), eval.penalty_active)
}

/// (checked, skipped at kinks, failures, worst relative error)
fn fd_check(model: &PcnetModel, batch: &[ChannelSample]) -> (usize, usize, usize, f64) {
    let analytic: Vec<f64> = objective_loss(model, batch).unwrap().grads.slices().concat();
    let (_, relu, active) = loss_signature(model, batch);
    let mut probe = model.clone();
    let (mut checked, mut skipped, mut failures, mut worst) = (0, 0, 0, 0.0f64);
    let mut flat = 0;
    for s in 0..probe.params.trainable_mut().len() {
        for e in 0..probe.params.trainable_mut()[s].len() {
            let original = probe.params.trainable_mut()[s][e];
            probe.params.trainable_mut()[s][e] = original + FD_STEP;
            let (plus, relu_p, active_p) = loss_signature(&probe, batch);
            probe.params.trainable_mut()[s][e] = original - FD_STEP;
            let (minus, relu_m, active_m) = loss_signature(&probe, batch);
            probe.params.trainable_mut()[s][e] = original;
            let a = analytic[flat];
            flat += 1;
            if relu_p != relu || relu_m != relu || active_p != active || active_m != active {
                skipped += 1;
                continue;
            }
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let scale = a.abs().max(numeric.abs());
            let err = (a - numeric).abs();
            checked += 1;
            if scale > FD_ABS_FLOOR {
                worst = worst.max(err / scale);
            }
            if err > FD_REL_TOL * scale + FD_ABS_FLOOR {
                failures += 1;
            }
        }
    }
    (checked, skipped, failures, worst)
}

fn criterion_1(_: &mut Fixtures) -> Verdict {
    let k = 3;
    let qos = QosSpec::new(vec![0.5, 0.5, 0.5]).unwrap();
    let objectives = [Objective::Srm, Objective::srm_qc(qos, 10.0).unwrap()];
    let mut source = ChannelSource::new(ChannelModel::Rayleigh, k, 1.0, &[10.0]).unwrap();
    let (mut checked, mut skipped, mut failures, mut worst) = (0, 0, 0, 0.0f64);
    for net in 0..100u64 {
        let batch = source.batch(16, &mut rng_from_seed(derive_seed(SEED, 10_000 + net)));
        for objective in &objectives {
            let model = PcnetModel::new(
                k,
                Variant::Pcnet,
                &[9, 16, 8, 3],
                objective.clone(),
                1.0,
                &mut rng_from_seed(derive_seed(SEED, net)),
            )
            .unwrap();
            let (c, s, f, w) = fd_check(&model, &batch);
            checked += c;
            skipped += s;
            failures += f;
            worst = worst.max(w);
        }
    }
    let skip_share = skipped as f64 / (checked + skipped) as f64;
    verdict(
        failures == 0 && skip_share < 0.05,
        format!(
            "{checked} partials on 100 nets x 2 losses, {failures} outside 1e-4 relative, worst {worst:.2e}, \
             {skip_share:.4} of stencils straddle a kink"
        ),
    )
}

// ── 2. Feasibility algebra ─────────────────────────────────────────────────

/// Worst-user shortfall below which an analytically feasible instance the
/// grid misses counts as a grid-resolution boundary case.
const GRID_BOUNDARY_BITS: f64 = 0.02;

fn criterion_2(_: &mut Fixtures) -> Verdict {
    let qos = QosSpec::new(vec![0.5, 0.5, 0.5]).unwrap();
    let mut source = ChannelSource::new(ChannelModel::Rayleigh, 3, 1.0, &[10.0]).unwrap();
    let samples = source.batch(10_000, &mut rng_from_seed(derive_seed(SEED, 20)));
    let (mut feasible, mut exact_worst, mut dominance_violations) = (0, 0.0f64, 0);
    let (mut boundary, mut hard_disagreements) = (0, 0);
    for s in &samples {
        let res = qos_feasibility(s, &qos, 1.0).unwrap();
        if res.feasible {
            feasible += 1;
            let p_hat = res.p_hat.as_ref().unwrap();
            let p_tilde = res.p_tilde.as_ref().unwrap();
            for (r, m) in per_user_rates(s, p_hat).unwrap().iter().zip(qos.r_min()) {
                exact_worst = exact_worst.max((r - m).abs());
            }
            if sum_rate(s, p_tilde).unwrap() < sum_rate(s, p_hat).unwrap() {
                dominance_violations += 1;
            }
        }
        let on_grid = epcnet_core::baselines::grid_feasible(s, &qos, 1.0, 51).unwrap();
        match (res.feasible, on_grid) {
            (true, false) => match grid_oracle_srm_qc(s, &qos, 1.0, 51).unwrap() {
                GridVerdict::Infeasible { min_violation } if min_violation < GRID_BOUNDARY_BITS => boundary += 1,
                _ => hard_disagreements += 1,
            },
            (false, true) => hard_disagreements += 1,
            _ => {}
        }
    }
    let share = boundary as f64 / samples.len() as f64;
    let pass = exact_worst <= 1e-9 && dominance_violations == 0 && hard_disagreements == 0 && share < 0.01;
    verdict(
        pass,
        format!(
            "{feasible}/10000 feasible; worst |R(P_hat) - r_min| {exact_worst:.1e}; {dominance_violations} dominance \
             violations; grid disagreements: {boundary} boundary ({share:.4}), {hard_disagreements} other"
        ),
    )
}

// ── 3. K = 2 near-optimality ───────────────────────────────────────────────

fn criterion_3(_: &mut Fixtures) -> Verdict {
    let mut cfg = config(Task::Srm, 2, &[10.0], None);
    cfg.baselines.controllers = vec!["optbpc".into()];
    let ensemble = train_ensemble(&cfg, &cfg.objective(), 1, SEED);
    let test = test_set(&cfg, TEST_SAMPLES, SEED);
    let pcnet = CandidateTable::build(&ensemble, &test).unwrap().mean_rate(1).unwrap();
    let opt = mean(&run_controller("optbpc", &test, 1.0, None, &cfg.baselines, SEED).unwrap().rates);
    let ratio = pcnet / opt;
    verdict(ratio >= 0.95, format!("PCNet {pcnet:.4} / optbpc {opt:.4} = {ratio:.4} (need >= 0.95)"))
}

// ── 4. K = 10 ensemble trends ──────────────────────────────────────────────

fn criterion_4(fx: &mut Fixtures) -> Verdict {
    let f = fx.k10();
    let table = CandidateTable::build(&f.ensemble, &f.test).unwrap();
    let by_m: Vec<f64> = (1..=5).map(|m| table.mean_rate(m).unwrap()).collect();
    let monotone = by_m.windows(2).all(|w| w[1] >= w[0]);
    let seed = derive_seed(SEED, streams::EVAL_CONTROLLERS);
    let wmmse = mean(&run_controller("wmmse", &f.test, 1.0, None, &f.cfg.baselines, seed).unwrap().rates);
    let opt = mean(&run_controller("optbpc", &f.test, 1.0, None, &f.cfg.baselines, seed).unwrap().rates);
    let e5 = by_m[4];
    let gain = e5 / wmmse - 1.0;
    let ratio = e5 / opt;
    verdict(
        monotone && e5 >= wmmse && ratio >= 0.93,
        format!(
            "mean by M {:?} (monotone: {monotone}); ePCNet(5) {e5:.4} vs WMMSE {wmmse:.4} ({:+.2}%); \
             / optbpc {opt:.4} = {ratio:.4} (need >= 0.93)",
            by_m.iter().map(|r| format!("{r:.4}")).collect::<Vec<_>>(),
            100.0 * gain
        ),
    )
}

// ── 5. Dominance suite ─────────────────────────────────────────────────────

fn criterion_5(fx: &mut Fixtures) -> Verdict {
    let f = fx.k10();
    let (opt_fail, selection_fail, nested_fail) = (
        f.test
            .iter()
            .filter(|s| sum_rate(s, &optbpc(s, 1.0).unwrap()).unwrap() < sum_rate(s, &gbpc(s, 1.0)).unwrap())
            .count(),
        {
            let mut rng = rng_from_seed(derive_seed(SEED, streams::EVAL_TIES));
            let table = CandidateTable::build(&f.ensemble, &f.test).unwrap();
            let selected = table.selected_rates(5).unwrap();
            f.test
                .iter()
                .enumerate()
                .filter(|(i, s)| {
                    let best = table.member_rates(*i).iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let (profile, record) = select(&f.ensemble, s, &mut rng).unwrap();
                    selected[*i] != best || record.selected_rate != best || sum_rate(s, &profile).unwrap() != best
                })
                .count()
        },
        f.test
            .iter()
            .enumerate()
            .filter(|(i, s)| {
                let seed = derive_seed(SEED, 50_000 + *i as u64);
                let best: Vec<f64> = (1..=4)
                    .map(|n| {
                        let (p, _) = wmmse_multi(s, 1.0, n, &mut rng_from_seed(seed)).unwrap();
                        sum_rate(s, &p).unwrap()
                    })
                    .collect();
                best.windows(2).any(|w| w[1] < w[0])
            })
            .count(),
    );
    verdict(
        opt_fail + selection_fail + nested_fail == 0,
        format!(
            "over {} K=10 samples: optbpc < gbpc {opt_fail}, selected != max member {selection_fail}, \
             wmmse_multi not monotone in inits (1..4) {nested_fail}",
            f.test.len()
        ),
    )
}

// ── 6. Minimum-rate hit rate ───────────────────────────────────────────────

fn criterion_6(fx: &mut Fixtures) -> Verdict {
    let f = fx.qc5();
    let qos = f.cfg.qos().unwrap();
    let table = CandidateTable::build(&f.ensemble, &f.test).unwrap();
    let hits: Vec<f64> = (1..=5).map(|m| table.hit_rate(m).unwrap()).collect();
    let increasing = hits.windows(2).all(|w| w[1] > w[0]);
    let mut rng = rng_from_seed(derive_seed(SEED, streams::EVAL_TIES));
    let infeasible = f
        .test
        .iter()
        .filter(|s| {
            let (profile, _) = select(&f.ensemble, s, &mut rng).unwrap();
            !check_profile_feasible(s, &profile, &qos, 1.0).unwrap()
        })
        .count();

    // Grid-oracle comparison at K = 3.
    let cfg3 = config(Task::SrmQc, 3, &[10.0], Some(&[0.5, 0.5, 0.5]));
    let qos3 = cfg3.qos().unwrap();
    let ens3 = train_ensemble(&cfg3, &cfg3.objective_with_lambda(10.0), 5, derive_seed(SEED, 6));
    let test3 = test_set(&cfg3, 1000, derive_seed(SEED, 6));
    let epcnet3 = CandidateTable::build(&ens3, &test3).unwrap().mean_rate(5).unwrap();
    let grid3 = mean(
        &run_controller("grid_oracle", &test3, 1.0, Some(&qos3), &cfg3.baselines, 0).unwrap().rates,
    );
    let ratio3 = epcnet3 / grid3;
    verdict(
        hits[0] >= 0.75 && increasing && hits[4] >= 0.85 && infeasible == 0 && ratio3 >= 0.9,
        format!(
            "K=5 hit rate by M {:?} (need >= 0.75, strictly increasing, >= 0.85); {infeasible} infeasible \
             deployments; K=3 ePCNet(5) {epcnet3:.4} / grid oracle {grid3:.4} = {ratio3:.4} (need >= 0.9)",
            hits.iter().map(|h| format!("{h:.4}")).collect::<Vec<_>>()
        ),
    )
}

// ── 7. Penalty-weight sensitivity ──────────────────────────────────────────

fn criterion_7(fx: &mut Fixtures) -> Verdict {
    let f = fx.qc5();
    let weighted = CandidateTable::build(&f.ensemble.prefix(1).unwrap(), &f.test).unwrap().hit_rate(1).unwrap();
    // Same member seeds as the first weighted member.
    let unweighted = train_ensemble(&f.cfg, &f.cfg.objective_with_lambda(0.0), 1, SEED);
    let plain = CandidateTable::build(&unweighted, &f.test).unwrap().hit_rate(1).unwrap();
    verdict(
        plain <= weighted - 0.1,
        format!("hit rate lambda=0 {plain:.4} vs lambda=10 {weighted:.4} (need a gap >= 0.1)"),
    )
}

// ── 8. Landscape statistics ────────────────────────────────────────────────

fn criterion_8(_: &mut Fixtures) -> Verdict {
    let median_cv = |db: f64, level: u64| {
        let stats = level_stats(
            ChannelModel::Rayleigh,
            10,
            1.0,
            db,
            1000,
            30,
            derive_seed(SEED, streams::LANDSCAPE_SAMPLES + level),
            derive_seed(SEED, streams::LANDSCAPE_RESTARTS + level),
        )
        .unwrap();
        epcnet_harness::report::median(&stats.iter().map(|s| s.cv).collect::<Vec<_>>())
    };
    let low = median_cv(0.0, 0);
    let high = median_cv(10.0, 1);
    verdict(high > low, format!("median CV at 10 dB {high:.5} vs 0 dB {low:.5}"))
}

// ── 9. Noise-aware generalization ──────────────────────────────────────────

fn criterion_9(_: &mut Fixtures) -> Verdict {
    let levels: Vec<f64> = (0..=10).map(f64::from).collect();
    let plus_cfg = config_with(Task::Srm, 5, &levels, None, "variant = \"pcnet_plus\"\n");
    let plus = train_ensemble(&plus_cfg, &plus_cfg.objective(), 1, SEED);
    let mut ratios = Vec::new();
    let mut pass = true;
    for (idx, db) in [0.0, 5.0, 10.0].into_iter().enumerate() {
        let cfg = config(Task::Srm, 5, &[db], None);
        let matched = train_ensemble(&cfg, &cfg.objective(), 1, SEED);
        let test = test_set(&cfg, TEST_SAMPLES, derive_seed(SEED, 90 + idx as u64));
        let a = CandidateTable::build(&plus, &test).unwrap().mean_rate(1).unwrap();
        let b = CandidateTable::build(&matched, &test).unwrap().mean_rate(1).unwrap();
        pass &= a >= 0.97 * b;
        ratios.push(format!("{db} dB: {a:.4}/{b:.4} = {:.4}", a / b));
    }
    verdict(pass, format!("PCNet+ / matched PCNet: {} (need >= 0.97 each)", ratios.join(", ")))
}

// ── 10. Determinism ────────────────────────────────────────────────────────

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn run_pipeline(config: &Path, out: &Path) -> BTreeMap<String, Vec<u8>> {
    let bin = env!("CARGO_BIN_EXE_epcnet");
    let run = |args: &[&str]| {
        let status = Command::new(bin)
            .args(args)
            .args(["--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--seed", "7"])
            .output()
            .unwrap();
        assert!(status.status.success(), "{args:?}: {}", String::from_utf8_lossy(&status.stderr));
    };
    run(&["generate"]);
    run(&["train"]);
    let models = out.join("models/manifest.json");
    let data = out.join("test.epcd");
    run(&["eval", "--models", models.to_str().unwrap(), "--data", data.to_str().unwrap()]);
    snapshot(out)
}

fn criterion_10(_: &mut Fixtures) -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("experiment.toml");
    std::fs::write(
        &config,
        "task = \"srm_qc\"\nk = 3\nr_min = [0.5, 0.5, 0.0]\nensemble_size = 3\n\n\
         [training]\niterations = 300\nbatch_size = 64\nvalidation_every = 50\nvalidation_size = 200\n\n\
         [data]\ntest_size = 500\n\n\
         [baselines]\ncontrollers = [\"wmmse\", \"gbpc\", \"fallback\", \"rr\"]\n",
    )
    .unwrap();
    let a = run_pipeline(&config, &dir.path().join("a"));
    let b = run_pipeline(&config, &dir.path().join("b"));
    let differing: Vec<&String> = a.keys().filter(|k| b.get(*k) != a.get(*k)).collect();
    verdict(
        a.len() == b.len() && differing.is_empty() && a.contains_key("models/manifest.json"),
        format!("{} artifacts from generate/train/eval, {} differ {:?}", a.len(), differing.len(), differing),
    )
}

// ── Runner ─────────────────────────────────────────────────────────────────

type Criterion = fn(&mut Fixtures) -> Verdict;

fn main() {
    let criteria: [(u32, &str, Criterion); 10] = [
        (1, "gradient oracle", criterion_1),
        (2, "feasibility algebra", criterion_2),
        (3, "K=2 near-optimality", criterion_3),
        (4, "K=10 ensemble trends", criterion_4),
        (5, "dominance suite", criterion_5),
        (6, "minimum-rate hit rate", criterion_6),
        (7, "penalty-weight sensitivity", criterion_7),
        (8, "landscape statistics", criterion_8),
        (9, "noise-aware generalization", criterion_9),
        (10, "determinism", criterion_10),
    ];
    let only: Option<Vec<u32>> = std::env::var("EPCNET_ACCEPTANCE")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    // libtest-style listing so `cargo test -- --list` keeps working.
    if std::env::args().any(|a| a == "--list") {
        for (n, name, _) in &criteria {
            println!("criterion_{n} ({name}): test");
        }
        return;
    }
    let mut fixtures = Fixtures::default();
    let mut failed = 0;
    for (n, name, run) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| run(&mut fixtures)))
            .unwrap_or_else(|e| {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                verdict(false, format!("panicked: {msg}"))
            });
        let tag = if outcome.pass { "PASS" } else { "FAIL" };
        failed += usize::from(!outcome.pass);
        println!("{tag} criterion {n:>2} {name}: {} [{:.1} s]", outcome.detail, start.elapsed().as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
