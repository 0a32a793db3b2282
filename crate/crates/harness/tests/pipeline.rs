//! End-to-end library pipeline on small configurations.

use epcnet_core::io::{load_ensemble, read_dataset, read_manifest};
use epcnet_harness::bench::cmd_bench;
use epcnet_harness::eval::{ensemble_name, evaluate, write_eval};
use epcnet_harness::generate::cmd_generate;
use epcnet_harness::landscape::cmd_landscape;
use epcnet_harness::report::{ecdf_mean, CDF_POINTS};
use epcnet_harness::sweep::cmd_lambda_sweep;
use epcnet_harness::train::cmd_train;
use epcnet_harness::ExperimentConfig;

fn small(text: &str, out: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::from_toml(text).unwrap();
    cfg.output_dir = out.to_path_buf();
    cfg.training.iterations = 150;
    cfg.training.batch_size = 64;
    cfg.training.validation_every = 50;
    cfg.training.validation_size = 200;
    cfg.data.test_size = 400;
    cfg
}

fn csv_rows(path: &std::path::Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn three_members_give_three_files_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("task = \"srm\"\nk = 3\nensemble_size = 3\n", dir.path());
    let (report, ensemble) = cmd_train(&cfg, 11).unwrap();
    assert_eq!(report.members.len(), 3);
    assert_eq!(ensemble.len(), 3);
    let manifest = read_manifest(&dir.path().join("models/manifest.json")).unwrap();
    assert_eq!(manifest.members.len(), 3);
    for i in 0..3 {
        assert!(dir.path().join(format!("models/member_{i}.pcn")).is_file());
    }
    let (loaded, _) = load_ensemble(&dir.path().join("models/manifest.json")).unwrap();
    assert_eq!(loaded.members(), ensemble.members());
    // Distinct initializations and data streams.
    assert_ne!(ensemble.members()[0].params, ensemble.members()[1].params);
    let seeds: std::collections::HashSet<_> = report.members.iter().map(|m| (m.init_seed, m.data_seed)).collect();
    assert_eq!(seeds.len(), 3);
}

#[test]
fn evaluation_invariants_for_sum_rate() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("task = \"srm\"\nk = 4\nensemble_size = 3\n", dir.path());
    cfg.baselines.controllers = vec!["wmmse".into(), "gbpc".into(), "optbpc".into(), "full_power".into()];
    let (ds, gen) = cmd_generate(&cfg, 5).unwrap();
    assert_eq!(gen.samples, 400);
    assert_eq!(gen.rejected, 0);
    let (_, ensemble) = cmd_train(&cfg, 5).unwrap();
    let report = evaluate(&cfg, &ensemble, &ds.samples, 5).unwrap();

    let means: Vec<f64> = report.mean_vs_m.iter().map(|r| r.stat.mean).collect();
    assert!(means.windows(2).all(|w| w[1] >= w[0]), "{means:?}");
    let e3 = report.rates_of(&ensemble_name(3)).unwrap();
    let e1 = report.rates_of(&ensemble_name(1)).unwrap();
    assert!(e3.iter().zip(e1).all(|(a, b)| a >= b));
    let opt = report.rates_of("optbpc").unwrap();
    let greedy = report.rates_of("gbpc").unwrap();
    assert!(opt.iter().zip(greedy).all(|(a, b)| a >= b));
    for c in &report.controllers {
        let rates = report.rates_of(&c.name).unwrap();
        assert!((ecdf_mean(rates) - c.stat.mean).abs() < 1e-6);
    }
    let h = &report.selection_histogram;
    assert_eq!(h.total(), 400);
    assert_eq!(h.fallback, 0);

    write_eval(dir.path(), &report).unwrap();
    let cdf = csv_rows(&dir.path().join("rate_cdf.csv"));
    assert_eq!(cdf.len(), CDF_POINTS);
    let diff = csv_rows(&dir.path().join("diff_cdf.csv"));
    let header = csv::Reader::from_path(dir.path().join("diff_cdf.csv")).unwrap().headers().unwrap().clone();
    let col = header.iter().position(|h| h == ensemble_name(3)).unwrap();
    assert!(diff.iter().all(|row| row[col].parse::<f64>().unwrap() == 0.0));
    assert_eq!(csv_rows(&dir.path().join("mean_vs_m.csv")).len(), 3);
}

#[test]
fn minimum_rate_pipeline_deploys_feasible_profiles() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("task = \"srm_qc\"\nk = 3\nr_min = [0.5, 0.5, 0.0]\nensemble_size = 2\n", dir.path());
    cfg.baselines.controllers = vec!["fallback".into(), "grid_oracle".into(), "wmmse".into()];
    cfg.baselines.grid_points = 21;
    let (ds, gen) = cmd_generate(&cfg, 9).unwrap();
    assert!(gen.rejected > 0);
    assert_eq!(read_dataset(&dir.path().join("test.epcd")).unwrap(), ds);
    let (_, ensemble) = cmd_train(&cfg, 9).unwrap();
    let report = evaluate(&cfg, &ensemble, &ds.samples, 9).unwrap();
    assert_eq!(report.controller("fallback").unwrap().feasible_share, Some(1.0));
    assert_eq!(report.controller("grid_oracle").unwrap().feasible_share, Some(1.0));
    let hits: Vec<f64> = report.mean_vs_m.iter().map(|r| r.hit_rate.unwrap()).collect();
    assert!(hits[1] >= hits[0]);
    let h = &report.selection_histogram;
    assert_eq!(h.total(), 400);
}

#[test]
fn evaluation_rejects_mismatched_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("task = \"srm\"\nk = 3\n", dir.path());
    let (_, ensemble) = cmd_train(&cfg, 1).unwrap();
    let other = small("task = \"srm\"\nk = 4\n", dir.path());
    let (ds, _) = cmd_generate(&other, 1).unwrap();
    assert!(evaluate(&cfg, &ensemble, &ds.samples, 1).is_err());
    let qc = small("task = \"srm_qc\"\nk = 3\nr_min = [0.1, 0.1, 0.1]\n", dir.path());
    let (ds, _) = cmd_generate(&qc, 1).unwrap();
    assert!(evaluate(&qc, &ensemble, &ds.samples, 1).is_err());
}

#[test]
fn sweep_reports_every_weight_and_prefix() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small("task = \"srm_qc\"\nk = 3\nr_min = [0.5, 0.0, 0.5]\nensemble_size = 2\n", dir.path());
    let (ds, _) = cmd_generate(&cfg, 3).unwrap();
    let report = cmd_lambda_sweep(&cfg, &[0.0, 10.0], &ds.samples, 3).unwrap();
    assert_eq!(report.rows.len(), 4);
    assert!(report.row(10.0, 2).is_some());
    assert!(dir.path().join("lambda_1/models/manifest.json").is_file());
    assert_eq!(csv_rows(&dir.path().join("lambda_sweep.csv")).len(), 4);
    assert!(cmd_lambda_sweep(&cfg, &[-1.0], &ds.samples, 3).is_err());
}

#[test]
fn landscape_and_bench_write_their_reports() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small("task = \"srm\"\nk = 4\n", dir.path());
    cfg.landscape.samples = 20;
    cfg.landscape.runs = 5;
    let report = cmd_landscape(&cfg, 2).unwrap();
    assert_eq!(report.levels.len(), 3);
    assert!(report.levels.iter().all(|l| l.samples == 20 && l.median_cv >= 0.0));
    assert_eq!(csv_rows(&dir.path().join("landscape_cdf.csv")).len(), CDF_POINTS);
    assert_eq!(cmd_landscape(&cfg, 2).unwrap(), report);

    cfg.bench.samples = 50;
    cfg.bench.repeats = 2;
    let bench = cmd_bench(&cfg, None, 2).unwrap();
    assert_eq!(bench.rows.len(), 2 * cfg.bench.controllers.len());
    assert!(bench.per_10k("pcnet").unwrap() > 0.0);
    assert!(dir.path().join("bench.json").is_file());
}
