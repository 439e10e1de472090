use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use sbi_forge::diagnostics::{cross_theta_probe, quantile_probe, C2stConfig, DiagnosticReport, ProbeReport, QuantileProbeConfig};
use sbi_forge::harness::{
    budget_sweep, embedding_paths, emit_results, fit_seed, load_references, pivot, read_results, run_experiment, seed_batches, time_phases,
    timing_summary, Estimator, ExperimentConfig, Method, ResultRow,
};
use sbi_forge::summary::container::{Container, ContainerMeta, Tensor};
use sbi_forge::summary::{batch_to_container, build_context_indices, concat_chunks, read_batch_container, read_embedding_container, SurrogateKind, SurrogateSummarizer};
use sbi_forge::tasks::{make_reference_observations, TaskSpec};
use sbi_forge::{Matrix, Result};

#[derive(Parser)]
#[command(name = "sbi-forge", version, about = "Simulation-based inference benchmarks with conditional spline flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw the train, validation and reference batches for one seed.
    Simulate {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Reference posterior samples for the fixed observations.
    Reference {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Surrogate embeddings for batches written by `simulate`.
    Summarize {
        #[arg(long)]
        task: String,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value = "random_projection")]
        kind: String,
    },
    /// Train the estimator for one seed and write its checkpoints.
    Train {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Posterior draws for one reference observation from a trained model.
    Sample {
        #[arg(long)]
        model_dir: PathBuf,
        #[arg(long)]
        task: String,
        #[arg(long, default_value_t = 0)]
        obs: usize,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Joint, marginal and rank C2ST between two sample containers.
    Diagnose {
        #[arg(long)]
        approx: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Cross-parameter and quantile probes on embeddings from `summarize` or the exporter.
    Probe {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        dir: PathBuf,
    },
    /// Full protocol over all seeds; appends rows to the results CSV.
    Benchmark {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, default_value = "results.csv")]
        results: PathBuf,
    },
    /// Benchmark at several training budgets.
    Sweep {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, value_delimiter = ',', required = true)]
        budgets: Vec<usize>,
        #[arg(long, default_value = "results.csv")]
        results: PathBuf,
    },
    /// Task-by-method table from a results CSV.
    Pivot {
        #[arg(long, default_value = "results.csv")]
        results: PathBuf,
        #[arg(long, default_value = "c2st_joint")]
        metric: String,
    },
    /// Wall-clock train and sample phases per seed.
    Time {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long)]
        results: Option<PathBuf>,
    },
}

/// A JSON config file with flag overrides on top.
#[derive(Args, Clone)]
struct ExperimentArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    task: Option<String>,
    #[arg(long)]
    method: Option<Method>,
    #[arg(long)]
    n_train: Option<usize>,
    #[arg(long)]
    n_val: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    #[arg(long)]
    observations: Option<usize>,
    #[arg(long)]
    summary_source: Option<PathBuf>,
    #[arg(long)]
    no_pca: bool,
    #[arg(long)]
    filter_top_k: Option<usize>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    reference_samples: Option<usize>,
    #[arg(long, env = "SBI_FORGE_DATA_DIR")]
    data_dir: Option<PathBuf>,
}

impl ExperimentArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg: ExperimentConfig = match &self.config {
            Some(p) => serde_json::from_slice(&std::fs::read(p)?)?,
            None => ExperimentConfig::default(),
        };
        if let Some(t) = &self.task {
            cfg.task = t.clone();
        }
        if let Some(m) = self.method {
            cfg.method = m;
        }
        if let Some(n) = self.n_train {
            cfg.n_train = n;
        }
        if let Some(n) = self.n_val {
            cfg.n_val = n;
        }
        if let Some(s) = &self.seeds {
            cfg.seeds = s.clone();
        }
        if let Some(o) = self.observations {
            cfg.num_observations = o;
        }
        if let Some(p) = &self.summary_source {
            cfg.summary_source = Some(p.clone());
        }
        cfg.no_pca |= self.no_pca;
        if self.filter_top_k.is_some() {
            cfg.filter_top_k = self.filter_top_k;
        }
        if let Some(e) = self.max_epochs {
            cfg.train.max_epochs = e;
        }
        if let Some(n) = self.reference_samples {
            cfg.reference_samples = n;
        }
        if let Some(d) = &self.data_dir {
            cfg.data_dir = Some(d.clone());
        }
        Ok(cfg)
    }
}

fn read_samples(path: &Path) -> Result<Matrix> {
    let c = Container::read(path)?;
    c.matrix("samples")
}

fn write_samples(path: &Path, task: &str, seed: u64, kind: &str, m: &Matrix) -> Result<()> {
    let mut c = Container::new(ContainerMeta::new(task, seed).with("kind", kind));
    c.push(Tensor::matrix_f64("samples", m));
    c.write(path)
}

fn print_rows(rows: &[ResultRow]) {
    for r in rows.iter().filter(|r| r.seed.is_none()) {
        println!("{}\t{}\tn={}\t{}\t{:.4} ± {:.4}", r.task, r.method, r.n_train, r.metric, r.value, r.std.unwrap_or(0.0));
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { exp, seed, out_dir } => {
            let cfg = exp.resolve()?;
            let task = TaskSpec::by_name(&cfg.task)?;
            let (train, val) = seed_batches(&cfg, &task, seed)?;
            let ctx = build_context_indices(train.len(), seed);
            let reference = make_reference_observations(&task)?;
            let dir = embedding_paths(&out_dir, &cfg.task, seed)[0].parent().expect("seed directory").to_path_buf();
            std::fs::create_dir_all(&dir)?;
            for (name, batch) in [("train", &train), ("val", &val), ("reference", &reference)] {
                batch_to_container(&cfg.task, batch, Some(&ctx)).write(&dir.join(format!("{name}_batch.sbe")))?;
            }
            println!("wrote {} (context fingerprint {})", dir.display(), ctx.fingerprint);
        }
        Command::Reference { exp, out_dir } => {
            let cfg = exp.resolve()?;
            let task = TaskSpec::by_name(&cfg.task)?;
            let refs = load_references(&task, cfg.num_observations, cfg.reference_samples, cfg.data_dir().as_deref())?;
            std::fs::create_dir_all(&out_dir)?;
            for (k, s) in refs.samples.iter().enumerate() {
                let path = out_dir.join(format!("{}_obs{k}.sbe", cfg.task));
                write_samples(&path, &cfg.task, k as u64, "reference_samples", s)?;
                let means: Vec<String> = s.column_means().iter().map(|m| format!("{m:.4}")).collect();
                println!("obs {k}: true theta {:?}, posterior mean [{}]", refs.observations.theta.row(k), means.join(", "));
            }
        }
        Command::Summarize { task, seed, dir, kind } => {
            let kind: SurrogateKind = serde_json::from_value(serde_json::Value::String(kind))?;
            let seed_dir = embedding_paths(&dir, &task, seed)[0].parent().expect("seed directory").to_path_buf();
            let train = read_batch_container(&seed_dir.join("train_batch.sbe"))?;
            let fingerprint = build_context_indices(train.len(), seed).fingerprint;
            let s = SurrogateSummarizer::fit(&train.x, kind, train.theta.cols(), seed);
            for (name, out) in ["train", "val", "reference"].iter().zip(embedding_paths(&dir, &task, seed)) {
                let batch = read_batch_container(&seed_dir.join(format!("{name}_batch.sbe")))?;
                let mut e = s.embed(&batch.x)?;
                e.context_fingerprint = fingerprint.clone();
                e.to_container(&task, seed).write(&out)?;
                println!("wrote {} ({} rows, {} chunks of width {})", out.display(), e.len(), e.num_chunks(), e.width());
            }
        }
        Command::Train { exp, seed, out_dir } => {
            let cfg = exp.resolve()?;
            let task = TaskSpec::by_name(&cfg.task)?;
            let all = make_reference_observations(&task)?;
            let refs = sbi_forge::harness::References { observations: all.select(&(0..cfg.num_observations).collect::<Vec<_>>()), samples: vec![] };
            let (est, histories) = fit_seed(&cfg, &task, &refs, seed)?;
            est.save(&out_dir, &cfg.task, seed)?;
            for (i, h) in histories.iter().enumerate() {
                h.save_csv(&out_dir.join(format!("history_{i}.csv")))?;
                println!("flow {i}: {} epochs, best epoch {}, best val NLL {:.4}", h.epochs(), h.best_epoch, h.best_val.unwrap_or(f64::NAN));
            }
            println!("wrote checkpoints to {}", out_dir.display());
        }
        Command::Sample { model_dir, task, obs, n, seed, out } => {
            let spec = TaskSpec::by_name(&task)?;
            let all = make_reference_observations(&spec)?;
            let refs = sbi_forge::harness::References { observations: all, samples: vec![] };
            let est = Estimator::load(&model_dir)?;
            let s = est.sample(&refs, obs, n, seed)?;
            write_samples(&out, &task, seed, "posterior_samples", &s)?;
            println!("wrote {n} draws for observation {obs} to {}", out.display());
        }
        Command::Diagnose { approx, reference, seed } => {
            let a = read_samples(&approx)?;
            let r = read_samples(&reference)?;
            let task = Container::read(&reference)?.meta.task;
            let report = DiagnosticReport::evaluate(&task, &a, &r, &C2stConfig::default().with_seed(seed))?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Probe { exp, seed, dir } => {
            let cfg = exp.resolve()?;
            let task = TaskSpec::by_name(&cfg.task)?;
            let [train_p, _, ref_p] = embedding_paths(&dir, &cfg.task, seed);
            let seed_dir = train_p.parent().expect("seed directory");
            let train = read_batch_container(&seed_dir.join("train_batch.sbe"))?;
            let emb = read_embedding_container(&train_p)?;
            let ref_emb = read_embedding_container(&ref_p)?;
            let n = train.len();
            let split = n * 4 / 5;
            let mut report = ProbeReport::default();
            if task.theta_dim >= 2 && emb.num_chunks() == task.theta_dim {
                let ct = cross_theta_probe(&emb, &train.theta, &(0..split).collect::<Vec<_>>(), &(split..n).collect::<Vec<_>>())?;
                report = report.with_cross_theta(ct);
            }
            let refs = load_references(&task, cfg.num_observations, cfg.reference_samples, cfg.data_dir().as_deref())?;
            let ref_s = concat_chunks(&ref_emb).select_rows(&(0..cfg.num_observations).collect::<Vec<_>>());
            let q = quantile_probe(&concat_chunks(&emb), &train.theta, &ref_s, &refs.samples, &QuantileProbeConfig { seed, ..Default::default() })?;
            report = report.with_quantiles(&q);
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Benchmark { exp, results } => {
            let record = run_experiment(&exp.resolve()?)?;
            let rows = record.rows();
            emit_results(&rows, &results)?;
            print_rows(&rows);
        }
        Command::Sweep { exp, budgets, results } => {
            for record in budget_sweep(&exp.resolve()?, &budgets)? {
                let rows = record.rows();
                emit_results(&rows, &results)?;
                print_rows(&rows);
            }
        }
        Command::Pivot { results, metric } => print!("{}", pivot(&read_results(&results)?, &metric)),
        Command::Time { exp, results } => {
            let cfg = exp.resolve()?;
            let records = time_phases(&cfg)?;
            for t in &records {
                println!("seed {}: train {:.3}s, sample {:.3}s, total {:.3}s", t.seed, t.train_s, t.sample_s, t.total_s);
            }
            let summary = timing_summary(&records);
            for (phase, (m, s)) in &summary {
                println!("{phase}: {m:.3} ± {s:.3}");
            }
            if let Some(path) = results {
                let rows: Vec<ResultRow> = summary
                    .iter()
                    .map(|(phase, (m, s))| ResultRow {
                        task: cfg.task.clone(),
                        method: cfg.method.as_str().into(),
                        seed: None,
                        n_train: cfg.n_train,
                        metric: (*phase).into(),
                        value: *m,
                        std: Some(*s),
                    })
                    .collect();
                emit_results(&rows, &path)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
