//! Experiment orchestration: seeds, methods, budgets, timing and results.

mod filter;
mod results;

pub use filter::filter_top_k;
pub use results::{emit_results, pivot, read_results, ResultRow, RESULT_COLUMNS};

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::diagnostics::{moment_diagnostics, C2stConfig, DiagnosticReport};
use crate::error::{Error, Result};
use crate::flow::{train, train_joint, FlowConfig, FlowModel, JointModel, SummaryNetConfig, TrainConfig, TrainHistory};
use crate::matrix::{mean_std, Matrix};
use crate::reference::reference_samples;
use crate::rng::{derive_seed, streams};
use crate::summary::container::{Container, ContainerMeta, Tensor};
use crate::summary::{build_context_indices, concat_chunks, fit_pca, read_embedding_container, EmbeddingSet, SurrogateKind, SurrogateSummarizer, SummaryMap, SUMMARY_DIM};
use crate::tasks::{make_reference_observations, simulate_batch, SimulationBatch, TaskSpec, REFERENCE_SEED};

pub const DATA_DIR_ENV: &str = "SBI_FORGE_DATA_DIR";

/// Seed sub-streams of the per-seed pipeline.
pub mod seed_streams {
    pub const TRAIN: u64 = 100;
    pub const VAL: u64 = 101;
    pub const SAMPLE: u64 = 1000;
    pub const C2ST: u64 = 2000;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Pretrained-model embeddings read from exported containers.
    PfnNpe,
    /// MLP summary trained jointly with the flow.
    LearnedSummary,
    /// Surrogate embeddings computed in-process.
    Surrogate,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::PfnNpe => "pfn_npe",
            Method::LearnedSummary => "learned_summary",
            Method::Surrogate => "surrogate",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pfn_npe" => Ok(Method::PfnNpe),
            "learned_summary" => Ok(Method::LearnedSummary),
            "surrogate" => Ok(Method::Surrogate),
            other => Err(Error::InvalidInput(format!("unknown method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub task: String,
    pub method: Method,
    pub n_train: usize,
    pub n_val: usize,
    pub seeds: Vec<u64>,
    pub samples_per_obs: usize,
    pub reference_samples: usize,
    pub num_observations: usize,
    /// Directory holding exported embedding containers for `pfn_npe`.
    pub summary_source: Option<PathBuf>,
    pub no_pca: bool,
    /// Train one flow per observation on its `k` nearest simulations.
    pub filter_top_k: Option<usize>,
    pub surrogate_kind: SurrogateKind,
    pub train: TrainConfig,
    pub c2st: C2stConfig,
    pub summary_net: SummaryNetConfig,
    /// Overrides of the dimension-based flow architecture.
    pub flow_transforms: Option<usize>,
    pub flow_hidden_widths: Option<Vec<usize>>,
    /// Reference-sample cache; falls back to `SBI_FORGE_DATA_DIR`.
    pub data_dir: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            task: "ar1_ts_t50".into(),
            method: Method::LearnedSummary,
            n_train: 10_000,
            n_val: 2_000,
            seeds: vec![0, 1, 2],
            samples_per_obs: 1000,
            reference_samples: crate::reference::REFERENCE_SAMPLES,
            num_observations: crate::tasks::NUM_REFERENCE_OBSERVATIONS,
            summary_source: None,
            no_pca: false,
            filter_top_k: None,
            surrogate_kind: SurrogateKind::RandomProjection,
            train: TrainConfig::default(),
            c2st: C2stConfig::default(),
            summary_net: SummaryNetConfig::default(),
            flow_transforms: None,
            flow_hidden_widths: None,
            data_dir: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::InvalidInput("at least one seed is required".into()));
        }
        let n_fit = self.filter_top_k.unwrap_or(self.n_train);
        if n_fit < 2 || self.n_val == 0 {
            return Err(Error::InsufficientSamples { needed: 2, got: n_fit.min(self.n_val) });
        }
        if self.filter_top_k.is_some_and(|k| k > self.n_train) {
            return Err(Error::InvalidInput("filter_top_k exceeds n_train".into()));
        }
        if self.num_observations == 0 || self.num_observations > crate::tasks::NUM_REFERENCE_OBSERVATIONS {
            return Err(Error::InvalidInput("num_observations must lie in 1..=10".into()));
        }
        self.train.validate()
    }

    /// First 16 hex digits of SHA-256 over the JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        Sha256::digest(&json).iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn flow_config(&self, theta_dim: usize, context_dim: usize) -> FlowConfig {
        let mut f = FlowConfig::for_dims(theta_dim, context_dim);
        if let Some(t) = self.flow_transforms {
            f.num_transforms = t;
        }
        if let Some(w) = &self.flow_hidden_widths {
            f.hidden_widths = w.clone();
        }
        f
    }

    pub fn data_dir(&self) -> Option<PathBuf> {
        self.data_dir.clone().or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservationMetrics {
    pub seed: u64,
    pub observation: usize,
    pub report: DiagnosticReport,
    pub mean_error: f64,
    pub dispersion_log_ratio: f64,
}

impl ObservationMetrics {
    pub fn metrics(&self) -> Vec<(&'static str, f64)> {
        let mut m = self.report.metrics();
        m.push(("mean_error", self.mean_error));
        m.push(("dispersion_log_ratio", self.dispersion_log_ratio));
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub seed: u64,
    pub train_s: f64,
    pub sample_s: f64,
    pub total_s: f64,
}

/// Metric values per seed.
pub type PerSeed = BTreeMap<u64, BTreeMap<String, f64>>;
/// Across-seed `(mean, std)` per metric.
pub type Aggregate = BTreeMap<String, (f64, f64)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config_hash: String,
    pub task: String,
    pub method: Method,
    pub n_train: usize,
    pub per_observation: Vec<ObservationMetrics>,
    /// Per seed, each metric averaged over observations.
    pub per_seed: PerSeed,
    /// Across-seed (mean, std) of the per-seed values.
    pub aggregate: Aggregate,
    pub timing: Vec<TimingRecord>,
}

impl RunRecord {
    pub fn rows(&self) -> Vec<ResultRow> {
        let base = |seed, metric: &str, value, std| ResultRow {
            task: self.task.clone(),
            method: self.method.as_str().into(),
            seed,
            n_train: self.n_train,
            metric: metric.into(),
            value,
            std,
        };
        let mut rows = Vec::new();
        for (seed, metrics) in &self.per_seed {
            for (m, v) in metrics {
                rows.push(base(Some(*seed), m, *v, None));
            }
        }
        for (m, (v, s)) in &self.aggregate {
            rows.push(base(None, m, *v, Some(*s)));
        }
        rows
    }

    pub fn joint(&self) -> (f64, f64) {
        self.aggregate.get("c2st_joint").copied().unwrap_or((f64::NAN, f64::NAN))
    }
}

/// Mean over observations within each seed, then mean and sample std
/// (ddof 1, zero for one seed) across seeds.
pub fn aggregate(per_observation: &[ObservationMetrics], timing: &[TimingRecord]) -> (PerSeed, Aggregate) {
    let mut sums: BTreeMap<u64, BTreeMap<String, (f64, usize)>> = BTreeMap::new();
    for o in per_observation {
        let entry = sums.entry(o.seed).or_default();
        for (m, v) in o.metrics() {
            let e = entry.entry(m.to_string()).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    let mut per_seed: PerSeed =
        sums.into_iter().map(|(s, m)| (s, m.into_iter().map(|(k, (t, c))| (k, t / c as f64)).collect())).collect();
    for t in timing {
        let e = per_seed.entry(t.seed).or_default();
        e.insert("train_s".into(), t.train_s);
        e.insert("sample_s".into(), t.sample_s);
        e.insert("total_s".into(), t.total_s);
    }
    let mut by_metric: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for metrics in per_seed.values() {
        for (m, v) in metrics {
            by_metric.entry(m.clone()).or_default().push(*v);
        }
    }
    let agg = by_metric
        .into_iter()
        .map(|(m, vals)| {
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let std = if vals.len() > 1 { (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
            (m, (mean, std))
        })
        .collect();
    (per_seed, agg)
}

/// Fixed reference observations with their reference samples. Samples are
/// cached under `<data dir>/reference` when a data directory is configured.
pub struct References {
    pub observations: SimulationBatch,
    pub samples: Vec<Matrix>,
}

pub fn load_references(task: &TaskSpec, num_observations: usize, n: usize, cache: Option<&Path>) -> Result<References> {
    let all = make_reference_observations(task)?;
    let idx: Vec<usize> = (0..num_observations).collect();
    let observations = all.select(&idx);
    let mut samples = Vec::with_capacity(num_observations);
    for k in 0..num_observations {
        let path = cache.map(|d| d.join("reference").join(format!("{}_obs{k}_n{n}.sbe", task.name)));
        if let Some(p) = path.as_ref().filter(|p| p.exists()) {
            samples.push(Container::read(p)?.matrix("samples")?);
            continue;
        }
        let s = reference_samples(task, observations.x.row(k), n, derive_seed(REFERENCE_SEED + k as u64, streams::REFERENCE))?.samples;
        if let Some(p) = path {
            std::fs::create_dir_all(p.parent().expect("cache path has a parent"))?;
            let meta = ContainerMeta::new(&task.name, REFERENCE_SEED + k as u64).with("kind", "reference_samples").with("observation", k);
            let mut c = Container::new(meta);
            c.push(Tensor::matrix_f64("samples", &s));
            c.write(&p)?;
        }
        samples.push(s);
    }
    Ok(References { observations, samples })
}

/// A trained posterior estimator for one seed.
#[allow(clippy::large_enum_variant)]
pub enum Estimator {
    Joint(JointModel),
    /// Flows over fixed summaries; one per observation when filtering.
    Fixed { flows: Vec<FlowModel>, contexts: Matrix },
}

impl Estimator {
    /// `n` posterior draws for reference observation `k`.
    pub fn sample(&self, refs: &References, k: usize, n: usize, seed: u64) -> Result<Matrix> {
        match self {
            Estimator::Joint(m) => m.sample(refs.observations.x.row(k), n, seed),
            Estimator::Fixed { flows, contexts } => {
                let flow = if flows.len() == 1 { &flows[0] } else { &flows[k] };
                flow.sample(contexts.row(k), n, seed)
            }
        }
    }
}

impl Estimator {
    /// Writes checkpoints into `dir`: `summary_net.sbe` and `flow.sbe` for a
    /// joint model, `flow_<i>.sbe` plus `contexts.sbe` otherwise.
    pub fn save(&self, dir: &Path, task: &str, seed: u64) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        match self {
            Estimator::Joint(m) => {
                m.summary.to_container(task, seed)?.write(&dir.join("summary_net.sbe"))?;
                m.flow.to_container(task, seed)?.write(&dir.join("flow.sbe"))
            }
            Estimator::Fixed { flows, contexts } => {
                for (i, f) in flows.iter().enumerate() {
                    f.to_container(task, seed)?.write(&dir.join(format!("flow_{i}.sbe")))?;
                }
                let mut c = Container::new(ContainerMeta::new(task, seed).with("kind", "reference_contexts").with("num_flows", flows.len()));
                c.push(Tensor::matrix_f64("contexts", contexts));
                c.write(&dir.join("contexts.sbe"))
            }
        }
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let summary = dir.join("summary_net.sbe");
        if summary.exists() {
            let s = crate::flow::LearnedSummary::from_container(&Container::read(&summary)?)?;
            let f = FlowModel::from_container(&Container::read(&dir.join("flow.sbe"))?)?;
            return Ok(Estimator::Joint(JointModel::new(s, f)?));
        }
        let c = Container::read(&dir.join("contexts.sbe"))?;
        let n = c.meta.extra.get("num_flows").and_then(|v| v.as_u64()).unwrap_or(1) as usize;
        let flows = (0..n).map(|i| FlowModel::from_container(&Container::read(&dir.join(format!("flow_{i}.sbe")))?)).collect::<Result<_>>()?;
        Ok(Estimator::Fixed { flows, contexts: c.matrix("contexts")? })
    }
}

pub fn exporter_command(task: &str, dir: &Path) -> String {
    format!("python exporter/export_embeddings.py --task {task} --in {} --out {}", dir.display(), dir.display())
}

/// `train`, `val` and `reference` embedding containers for one seed.
pub fn embedding_paths(dir: &Path, task: &str, seed: u64) -> [PathBuf; 3] {
    let base = dir.join(task).join(format!("seed{seed}"));
    [base.join("train_embeddings.sbe"), base.join("val_embeddings.sbe"), base.join("reference_embeddings.sbe")]
}

fn read_exported(cfg: &ExperimentConfig, seed: u64, n_train: usize) -> Result<[EmbeddingSet; 3]> {
    let dir = cfg.summary_source.clone().ok_or_else(|| Error::MissingEmbeddings {
        path: "<summary_source unset>".into(),
        task: cfg.task.clone(),
        command: exporter_command(&cfg.task, Path::new("<dir>")),
    })?;
    let paths = embedding_paths(&dir, &cfg.task, seed);
    let mut out = Vec::with_capacity(3);
    for p in &paths {
        if !p.exists() {
            return Err(Error::MissingEmbeddings { path: p.display().to_string(), task: cfg.task.clone(), command: exporter_command(&cfg.task, &dir) });
        }
        out.push(read_embedding_container(p)?);
    }
    let want = build_context_indices(n_train, seed).fingerprint;
    for e in &out {
        if e.context_fingerprint != want {
            return Err(Error::Manifest(format!("embedding context fingerprint {} does not match the training batch ({want})", e.context_fingerprint)));
        }
    }
    let [a, b, c]: [EmbeddingSet; 3] = out.try_into().map_err(|_| Error::Manifest("expected three containers".into()))?;
    Ok([a, b, c])
}

fn fit_fixed_flows(
    cfg: &ExperimentConfig,
    seed: u64,
    train_batch: &SimulationBatch,
    val_batch: &SimulationBatch,
    refs: &References,
    emb: [EmbeddingSet; 3],
) -> Result<(Estimator, Vec<TrainHistory>)> {
    let [tr, va, re] = emb.map(|e| concat_chunks(&e));
    if tr.rows() != train_batch.len() || va.rows() != val_batch.len() || re.rows() < refs.observations.len() {
        return Err(Error::DimensionMismatch { expected: train_batch.len(), got: tr.rows() });
    }
    let map = if cfg.no_pca { SummaryMap::identity(tr.cols()) } else { fit_pca(&tr, SUMMARY_DIM.min(tr.cols()))? };
    let (s_tr, s_va, s_re) = (map.apply(&tr)?, map.apply(&va)?, map.apply(&re)?);
    let fit = |theta: &Matrix, s: &Matrix| -> Result<(FlowModel, TrainHistory)> {
        let tc = train_config(cfg, seed, theta.rows());
        let mut flow = FlowModel::for_data(cfg.flow_config(theta.cols(), s.cols()), theta, s, seed)?;
        let h = train(&mut flow, theta, s, Some((&val_batch.theta, &s_va)), &tc)?;
        Ok((flow, h))
    };
    let fitted: Vec<(FlowModel, TrainHistory)> = match cfg.filter_top_k {
        None => vec![fit(&train_batch.theta, &s_tr)?],
        Some(k) => (0..refs.observations.len())
            .map(|o| {
                let idx = filter_top_k(&train_batch.x, refs.observations.x.row(o), k)?;
                fit(&train_batch.theta.select_rows(&idx), &s_tr.select_rows(&idx))
            })
            .collect::<Result<_>>()?,
    };
    let (flows, histories) = fitted.into_iter().unzip();
    Ok((Estimator::Fixed { flows, contexts: s_re.select_rows(&(0..refs.observations.len()).collect::<Vec<_>>()) }, histories))
}

/// The configured recipe for one seed; budgets smaller than the batch size
/// train full-batch.
fn train_config(cfg: &ExperimentConfig, seed: u64, n: usize) -> TrainConfig {
    TrainConfig { seed, batch_size: cfg.train.batch_size.min(n), ..cfg.train.clone() }
}

/// Simulate, summarize and train for one seed. Returns one training history
/// per fitted flow.
pub fn fit_seed(cfg: &ExperimentConfig, task: &TaskSpec, refs: &References, seed: u64) -> Result<(Estimator, Vec<TrainHistory>)> {
    let train_batch = simulate_batch(task, cfg.n_train, derive_seed(seed, seed_streams::TRAIN))?;
    let val_batch = simulate_batch(task, cfg.n_val, derive_seed(seed, seed_streams::VAL))?;
    let tc = train_config(cfg, seed, train_batch.len());
    match cfg.method {
        Method::LearnedSummary => {
            if cfg.filter_top_k.is_some() {
                return Err(Error::InvalidInput("filter_top_k applies to fixed-summary methods".into()));
            }
            let mut model = JointModel::for_data(&train_batch, cfg.summary_net.clone(), seed)?;
            if cfg.flow_transforms.is_some() || cfg.flow_hidden_widths.is_some() {
                let f = &model.flow;
                let flow_cfg = cfg.flow_config(f.theta_dim(), f.context_dim());
                model.flow = FlowModel::new(flow_cfg, f.theta_standardizer.clone(), f.context_standardizer.clone(), seed)?;
            }
            let h = train_joint(&mut model, &train_batch, Some(&val_batch), &tc, false)?;
            Ok((Estimator::Joint(model), vec![h]))
        }
        Method::Surrogate => {
            let s = SurrogateSummarizer::fit(&train_batch.x, cfg.surrogate_kind, task.theta_dim, derive_seed(seed, streams::SURROGATE));
            let emb = [s.embed(&train_batch.x)?, s.embed(&val_batch.x)?, s.embed(&refs.observations.x)?];
            fit_fixed_flows(cfg, seed, &train_batch, &val_batch, refs, emb)
        }
        Method::PfnNpe => {
            let emb = read_exported(cfg, seed, cfg.n_train)?;
            fit_fixed_flows(cfg, seed, &train_batch, &val_batch, refs, emb)
        }
    }
}

/// The simulation batches an exporter needs for one seed, identical to those
/// `fit_seed` draws.
pub fn seed_batches(cfg: &ExperimentConfig, task: &TaskSpec, seed: u64) -> Result<(SimulationBatch, SimulationBatch)> {
    Ok((
        simulate_batch(task, cfg.n_train, derive_seed(seed, seed_streams::TRAIN))?,
        simulate_batch(task, cfg.n_val, derive_seed(seed, seed_streams::VAL))?,
    ))
}

fn run_seed(cfg: &ExperimentConfig, task: &TaskSpec, refs: &References, seed: u64, evaluate: bool) -> Result<(Vec<ObservationMetrics>, TimingRecord)> {
    let t0 = Instant::now();
    let (est, _) = fit_seed(cfg, task, refs, seed)?;
    let train_s = t0.elapsed().as_secs_f64();
    let mut draws = Vec::with_capacity(refs.observations.len());
    let t1 = Instant::now();
    for k in 0..refs.observations.len() {
        draws.push(est.sample(refs, k, cfg.samples_per_obs, derive_seed(seed, seed_streams::SAMPLE + k as u64))?);
    }
    let sample_s = t1.elapsed().as_secs_f64();
    let timing = TimingRecord { seed, train_s, sample_s, total_s: train_s + sample_s };
    let mut metrics = Vec::new();
    if evaluate {
        for (k, approx) in draws.iter().enumerate() {
            let c2 = C2stConfig { seed: derive_seed(seed, seed_streams::C2ST + k as u64), ..cfg.c2st.clone() };
            let report = DiagnosticReport::evaluate(&task.name, approx, &refs.samples[k], &c2)?;
            let md = moment_diagnostics(approx, &refs.samples[k])?;
            let finite_mean = |v: &[f64]| {
                let f: Vec<f64> = v.iter().copied().filter(|x| x.is_finite()).collect();
                f.iter().sum::<f64>() / f.len().max(1) as f64
            };
            metrics.push(ObservationMetrics {
                seed,
                observation: k,
                report: DiagnosticReport { seed, ..report },
                mean_error: finite_mean(&md.mean_error),
                dispersion_log_ratio: finite_mean(&md.dispersion_log_ratio),
            });
        }
    }
    Ok((metrics, timing))
}

/// Simulate, summarize, train, sample and diagnose for every seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunRecord> {
    cfg.validate()?;
    let task = TaskSpec::by_name(&cfg.task)?;
    let refs = load_references(&task, cfg.num_observations, cfg.reference_samples, cfg.data_dir().as_deref())?;
    run_with_references(cfg, &task, &refs)
}

pub fn run_with_references(cfg: &ExperimentConfig, task: &TaskSpec, refs: &References) -> Result<RunRecord> {
    cfg.validate()?;
    let mut per_observation = Vec::new();
    let mut timing = Vec::new();
    for &seed in &cfg.seeds {
        let (m, t) = run_seed(cfg, task, refs, seed, true)?;
        per_observation.extend(m);
        timing.push(t);
    }
    let (per_seed, aggregate) = aggregate(&per_observation, &timing);
    Ok(RunRecord {
        config_hash: cfg.hash(),
        task: task.name.clone(),
        method: cfg.method,
        n_train: cfg.n_train,
        per_observation,
        per_seed,
        aggregate,
        timing,
    })
}

/// Re-runs the experiment at each training budget with the same observations.
pub fn budget_sweep(cfg: &ExperimentConfig, budgets: &[usize]) -> Result<Vec<RunRecord>> {
    let task = TaskSpec::by_name(&cfg.task)?;
    let refs = load_references(&task, cfg.num_observations, cfg.reference_samples, cfg.data_dir().as_deref())?;
    budgets
        .iter()
        .map(|&n| {
            let c = ExperimentConfig { n_train: n, ..cfg.clone() };
            run_with_references(&c, &task, &refs)
        })
        .collect()
}

/// Wall-clock train and sample phases for each seed, without diagnostics.
pub fn time_phases(cfg: &ExperimentConfig) -> Result<Vec<TimingRecord>> {
    cfg.validate()?;
    let task = TaskSpec::by_name(&cfg.task)?;
    let all = make_reference_observations(&task)?;
    let refs = References { observations: all.select(&(0..cfg.num_observations).collect::<Vec<_>>()), samples: vec![] };
    cfg.seeds.iter().map(|&s| run_seed(cfg, &task, &refs, s, false).map(|(_, t)| t)).collect()
}

/// Across-seed mean and std of each timing phase.
pub fn timing_summary(records: &[TimingRecord]) -> BTreeMap<&'static str, (f64, f64)> {
    let stat = |f: fn(&TimingRecord) -> f64| {
        let v: Vec<f64> = records.iter().map(f).collect();
        if v.len() > 1 {
            let (m, s) = mean_std(&v);
            (m, s * (v.len() as f64 / (v.len() - 1) as f64).sqrt())
        } else {
            (v.first().copied().unwrap_or(f64::NAN), 0.0)
        }
    };
    BTreeMap::from([("train_s", stat(|t| t.train_s)), ("sample_s", stat(|t| t.sample_s)), ("total_s", stat(|t| t.total_s))])
}
