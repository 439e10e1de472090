use std::path::Path;
use std::process::Command;
use std::time::Instant;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use sbi_forge::diagnostics::DiagnosticReport;
use sbi_forge::flow::{FlowConfig, FlowModel, SummaryNetConfig};
use sbi_forge::harness::{
    aggregate, budget_sweep, embedding_paths, emit_results, filter_top_k, fit_seed, load_references, pivot, read_results, run_experiment,
    time_phases, Estimator, ExperimentConfig, Method, ObservationMetrics, ResultRow, TimingRecord, RESULT_COLUMNS,
};
use sbi_forge::summary::Standardizer;
use sbi_forge::{Error, Matrix, TaskSpec};

/// A configuration small enough to run end to end in a few seconds.
fn tiny(task: &str, method: Method) -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        task: task.into(),
        method,
        n_train: 300,
        n_val: 100,
        seeds: vec![0],
        samples_per_obs: 200,
        reference_samples: 400,
        num_observations: 2,
        summary_net: SummaryNetConfig { hidden_widths: vec![16], output_dim: 8 },
        flow_transforms: Some(2),
        flow_hidden_widths: Some(vec![16, 16]),
        ..Default::default()
    };
    cfg.train.batch_size = 64;
    cfg.train.max_epochs = 3;
    cfg.c2st.max_epochs = 20;
    cfg
}

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let data = (0..rows * cols)
        .map(|i| {
            let z: f64 = StandardNormal.sample(&mut rng);
            z * (1.0 + (i % cols) as f64)
        })
        .collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

fn brute_force_top_k(x: &Matrix, x_o: &[f64], k: usize) -> Vec<usize> {
    let (n, d) = (x.rows(), x.cols());
    let mut mean = vec![0.0; d];
    let mut sd = vec![0.0; d];
    for j in 0..d {
        mean[j] = (0..n).map(|i| x.row(i)[j]).sum::<f64>() / n as f64;
        sd[j] = ((0..n).map(|i| (x.row(i)[j] - mean[j]).powi(2)).sum::<f64>() / n as f64).sqrt().max(1e-8);
    }
    let mut all: Vec<(f64, usize)> =
        (0..n).map(|i| ((0..d).map(|j| ((x.row(i)[j] - x_o[j]) / sd[j]).powi(2)).sum::<f64>(), i)).collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    all.into_iter().take(k).map(|(_, i)| i).collect()
}

fn observation(seed: u64, k: usize, joint: f64, marginal: f64) -> ObservationMetrics {
    ObservationMetrics {
        seed,
        observation: k,
        report: DiagnosticReport::new("t", seed, 100, joint, marginal, joint),
        mean_error: 0.1 * (k + 1) as f64,
        dispersion_log_ratio: 0.0,
    }
}

#[test]
fn smoke_run_at_one_hundred_simulations() {
    let mut cfg = tiny("gaussian_linear", Method::LearnedSummary);
    cfg.n_train = 100;
    cfg.n_val = 50;
    cfg.train = Default::default();
    cfg.train.max_epochs = 3;
    let record = run_experiment(&cfg).unwrap();
    assert_eq!(record.per_observation.len(), 2);
    for o in &record.per_observation {
        assert_eq!(o.report.gap, o.report.joint - o.report.marginal);
        assert!(o.report.joint.is_finite() && o.mean_error.is_finite());
    }
    for metric in ["c2st_joint", "c2st_marginal", "c2st_rank", "c2st_gap", "mean_error", "dispersion_log_ratio", "train_s", "sample_s", "total_s"] {
        assert!(record.aggregate.contains_key(metric), "missing {metric}");
    }

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("results.csv");
    emit_results(&record.rows(), &path).unwrap();
    let header = std::fs::read_to_string(&path).unwrap().lines().next().unwrap().to_string();
    assert_eq!(header, RESULT_COLUMNS.join(","));
    assert_eq!(read_results(&path).unwrap(), record.rows());
}

#[test]
fn aggregation_averages_observations_then_seeds() {
    let per_obs = vec![observation(0, 0, 0.6, 0.5), observation(0, 1, 0.7, 0.5), observation(1, 0, 0.8, 0.6), observation(1, 1, 0.9, 0.6)];
    let timing = vec![
        TimingRecord { seed: 0, train_s: 1.0, sample_s: 0.5, total_s: 1.5 },
        TimingRecord { seed: 1, train_s: 3.0, sample_s: 0.5, total_s: 3.5 },
    ];
    let (per_seed, agg) = aggregate(&per_obs, &timing);
    assert!((per_seed[&0]["c2st_joint"] - 0.65).abs() < 1e-12);
    assert!((per_seed[&1]["c2st_joint"] - 0.85).abs() < 1e-12);
    let (m, s) = agg["c2st_joint"];
    assert!((m - 0.75).abs() < 1e-12);
    // Two values 0.2 apart: sample std is 0.2 / sqrt(2).
    assert!((s - 0.2 / 2f64.sqrt()).abs() < 1e-12);
    let (gm, _) = agg["c2st_gap"];
    assert!((gm - (0.75 - 0.55)).abs() < 1e-12);
    assert!((agg["mean_error"].0 - 0.15).abs() < 1e-12);
    assert_eq!(agg["train_s"], (2.0, 2f64.sqrt()));
    assert_eq!(agg["dispersion_log_ratio"], (0.0, 0.0));
}

#[test]
fn empty_results_write_only_the_header() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    emit_results(&[], &path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap().trim_end(), RESULT_COLUMNS.join(","));
    assert!(read_results(&path).unwrap().is_empty());
    // A second append must not repeat the header.
    let row = ResultRow { task: "t".into(), method: "m".into(), seed: None, n_train: 10, metric: "c2st_joint".into(), value: 0.5, std: Some(0.1) };
    emit_results(std::slice::from_ref(&row), &path).unwrap();
    assert_eq!(read_results(&path).unwrap(), vec![row]);
}

#[test]
fn filter_matches_a_full_sort() {
    let x = random_matrix(1000, 20, 3);
    let x_o: Vec<f64> = random_matrix(1, 20, 4).row(0).to_vec();
    for k in [1, 10, 500, 1000] {
        assert_eq!(filter_top_k(&x, &x_o, k).unwrap(), brute_force_top_k(&x, &x_o, k), "k = {k}");
    }
    let mut all = filter_top_k(&x, &x_o, 1000).unwrap();
    all.sort_unstable();
    assert_eq!(all, (0..1000).collect::<Vec<_>>());
    // A training row equal to the observation is the nearest one.
    assert_eq!(filter_top_k(&x, x.row(417), 5).unwrap()[0], 417);
    assert!(matches!(filter_top_k(&x, &x_o, 1001), Err(Error::InsufficientSamples { .. })));
    assert!(matches!(filter_top_k(&x, &x_o[..3], 5), Err(Error::DimensionMismatch { .. })));
}

#[test]
fn single_budget_sweep_equals_a_run() {
    let cfg = tiny("ar1_ts_t50", Method::Surrogate);
    let sweep = budget_sweep(&cfg, &[cfg.n_train]).unwrap();
    let run = run_experiment(&cfg).unwrap();
    assert_eq!(sweep.len(), 1);
    assert_eq!(sweep[0].per_observation, run.per_observation);
    assert_eq!(sweep[0].config_hash, run.config_hash);
}

#[test]
fn sweep_keeps_budgets_apart() {
    let cfg = tiny("ar1_ts_t50", Method::Surrogate);
    let sweep = budget_sweep(&cfg, &[150, 300]).unwrap();
    let budgets: Vec<usize> = sweep.iter().map(|r| r.n_train).collect();
    assert_eq!(budgets, vec![150, 300]);
    assert_ne!(sweep[0].config_hash, sweep[1].config_hash);
    let rows: Vec<ResultRow> = sweep.iter().flat_map(|r| r.rows()).collect();
    // The largest budget fills the pivot cell.
    let table = pivot(&rows, "c2st_joint");
    assert!(table.contains(&format!("{:.3}", sweep[1].joint().0)), "{table}");
}

#[test]
fn timing_records_one_entry_per_seed() {
    let mut cfg = tiny("ar1_ts_t50", Method::Surrogate);
    cfg.seeds = vec![0, 1];
    let records = time_phases(&cfg).unwrap();
    assert_eq!(records.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![0, 1]);
    for r in &records {
        assert!(r.train_s > 0.0 && r.sample_s >= 0.0);
        assert_eq!(r.total_s, r.train_s + r.sample_s);
    }
}

#[test]
fn identity_flow_samples_quickly() {
    let flow = FlowModel::new(FlowConfig::for_dims(2, 4), Standardizer::identity(2), Standardizer::identity(4), 0).unwrap();
    let t0 = Instant::now();
    for k in 0..10u64 {
        let s = flow.sample(&[0.0; 4], 1000, k).unwrap();
        assert_eq!((s.rows(), s.cols()), (1000, 2));
    }
    assert!(t0.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn missing_embeddings_name_the_exporter_command() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig { summary_source: Some(dir.path().to_path_buf()), ..tiny("ar1_ts_t50", Method::PfnNpe) };
    let err = run_experiment(&cfg).expect_err("no embeddings were exported");
    let Error::MissingEmbeddings { ref path, ref task, ref command } = err else { panic!("unexpected error {err}") };
    assert_eq!(task, "ar1_ts_t50");
    assert!(path.ends_with("train_embeddings.sbe"), "{path}");
    assert!(command.contains("--task ar1_ts_t50") && command.contains(&dir.path().display().to_string()), "{command}");
    assert!(err.to_string().contains(command.as_str()));

    let unset = ExperimentConfig { summary_source: None, ..cfg };
    assert!(matches!(run_experiment(&unset), Err(Error::MissingEmbeddings { .. })));
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_sbi-forge")).args(args).output().unwrap()
}

fn write_config(path: &Path, cfg: &ExperimentConfig) {
    std::fs::write(path, serde_json::to_vec_pretty(cfg).unwrap()).unwrap();
}

#[test]
fn exported_embeddings_drive_the_pfn_path() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let config = dir.path().join("config.json");
    write_config(&config, &tiny("ar1_ts_t50", Method::PfnNpe));
    let c = config.to_str().unwrap();

    let out = cli(&["simulate", "--config", c, "--seed", "0", "--out-dir", d]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = cli(&["summarize", "--task", "ar1_ts_t50", "--seed", "0", "--dir", d]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for p in embedding_paths(dir.path(), "ar1_ts_t50", 0) {
        assert!(p.exists(), "{}", p.display());
    }

    let results = dir.path().join("results.csv");
    let out = cli(&["benchmark", "--config", c, "--summary-source", d, "--results", results.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = read_results(&results).unwrap();
    assert!(rows.iter().any(|r| r.method == "pfn_npe" && r.metric == "c2st_joint" && r.seed.is_none()));

    // Embeddings built for another training batch are rejected.
    let out = cli(&["benchmark", "--config", c, "--summary-source", d, "--n-train", "250", "--results", results.to_str().unwrap()]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.starts_with("error:") && stderr.contains("fingerprint"), "{stderr}");
}

#[test]
fn cli_reports_missing_embeddings() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let config = dir.path().join("config.json");
    write_config(&config, &tiny("ar1_ts_t50", Method::PfnNpe));
    let out = cli(&["benchmark", "--config", config.to_str().unwrap(), "--summary-source", d, "--results", &format!("{d}/r.csv")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("python exporter/export_embeddings.py --task ar1_ts_t50"));
}

fn reloaded_samples_match(cfg: &ExperimentConfig) {
    let task = TaskSpec::by_name(&cfg.task).unwrap();
    let refs = load_references(&task, cfg.num_observations, 100, None).unwrap();
    let (est, histories) = fit_seed(cfg, &task, &refs, 5).unwrap();
    let dir = tempfile::tempdir().unwrap();
    est.save(dir.path(), &cfg.task, 5).unwrap();
    let back = Estimator::load(dir.path()).unwrap();
    assert_eq!(matches!(back, Estimator::Joint(_)), matches!(est, Estimator::Joint(_)));
    for k in 0..cfg.num_observations {
        assert_eq!(est.sample(&refs, k, 50, 9).unwrap(), back.sample(&refs, k, 50, 9).unwrap());
    }
    assert!(histories.iter().all(|h| h.epochs() >= 1));
}

#[test]
fn joint_estimator_survives_a_checkpoint() {
    reloaded_samples_match(&tiny("gaussian_linear", Method::LearnedSummary));
}

#[test]
fn filtered_estimator_survives_a_checkpoint() {
    let cfg = ExperimentConfig { filter_top_k: Some(100), ..tiny("ar1_ts_t50", Method::Surrogate) };
    reloaded_samples_match(&cfg);
}

#[test]
fn pivot_renders_a_task_by_method_table() {
    let row = |task: &str, method: &str, value: f64, std: f64| ResultRow {
        task: task.into(),
        method: method.into(),
        seed: None,
        n_train: 10_000,
        metric: "c2st_joint".into(),
        value,
        std: Some(std),
    };
    let rows = vec![
        row("gaussian_linear", "pfn_npe", 0.545, 0.01),
        row("gaussian_linear", "learned_summary", 0.61, 0.009),
        row("ar1_ts_t50", "pfn_npe", 0.66, 0.02),
    ];
    let table = pivot(&rows, "c2st_joint");
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "task\tpfn_npe\tlearned_summary");
    assert_eq!(lines[1], "ar1_ts_t50\t0.660 ± 0.02\t-");
    assert_eq!(lines[2], "gaussian_linear\t0.545 ± 0.01\t0.610 ± 0.01");
}

#[test]
fn invalid_configs_are_rejected() {
    let base = tiny("ar1_ts_t50", Method::Surrogate);
    assert!(ExperimentConfig { seeds: vec![], ..base.clone() }.validate().is_err());
    assert!(ExperimentConfig { filter_top_k: Some(301), ..base.clone() }.validate().is_err());
    assert!(ExperimentConfig { num_observations: 11, ..base.clone() }.validate().is_err());
    assert!(run_experiment(&ExperimentConfig { task: "nope".into(), ..base.clone() }).is_err());
    let learned_filter = ExperimentConfig { method: Method::LearnedSummary, filter_top_k: Some(100), ..base };
    assert!(run_experiment(&learned_filter).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn filter_output_is_sorted_by_distance(seed in 0u64..1000, n in 5usize..60, d in 1usize..6, k_frac in 0.0f64..1.0) {
        let x = random_matrix(n, d, seed);
        let x_o = random_matrix(1, d, seed + 1).row(0).to_vec();
        let k = ((n as f64 * k_frac) as usize).max(1);
        let idx = filter_top_k(&x, &x_o, k).unwrap();
        prop_assert_eq!(idx, brute_force_top_k(&x, &x_o, k));
    }

    #[test]
    fn aggregate_mean_is_the_mean_of_seed_means(vals in prop::collection::vec(0.4f64..1.0, 2..12)) {
        let per_obs: Vec<ObservationMetrics> =
            vals.iter().enumerate().map(|(i, v)| observation((i % 3) as u64, i, *v, 0.5)).collect();
        let (per_seed, agg) = aggregate(&per_obs, &[]);
        let seed_means: Vec<f64> = per_seed.values().map(|m| m["c2st_joint"]).collect();
        let mean = seed_means.iter().sum::<f64>() / seed_means.len() as f64;
        prop_assert!((agg["c2st_joint"].0 - mean).abs() < 1e-12);
        prop_assert!((agg["c2st_gap"].0 - (mean - 0.5)).abs() < 1e-12);
    }
}
