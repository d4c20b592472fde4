//! Experiment grid orchestration: enumerate every (architecture, transform,
//! embedding variant) combination, execute them on a worker pool with
//! per-run seeding, persist each result as its own JSON file so an
//! interrupted grid resumes from completed run ids, and reduce results into
//! leaderboards, per-dimension minima and headline-uplift summaries.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::corpus::AlignedFrame;
use crate::embed::EmbeddingVector;
use crate::error::{Error, Result};
use crate::features::{
    build_variant, DatasetVariant, EmbeddingVariant, Projection, SplitConfig, TransformKind,
    VariantConfig,
};
use crate::hash::derive_seed;
use crate::metrics::MetricsReport;
use crate::models::{
    hyperparameter_search, predict_rows, train, Arch, ModelSpec, SearchSpace,
};
use crate::pca::{fit_pca, PcaModel};

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// One tested PCA dimensionality: a reduced dim or the model's native width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "DimRepr", into = "DimRepr")]
pub enum PcaDimSpec {
    Dim(usize),
    Native,
}

impl PcaDimSpec {
    pub fn label(&self) -> String {
        match self {
            PcaDimSpec::Dim(d) => d.to_string(),
            PcaDimSpec::Native => "native".to_string(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum DimRepr {
    Num(usize),
    Name(String),
}

impl TryFrom<DimRepr> for PcaDimSpec {
    type Error = String;

    fn try_from(r: DimRepr) -> std::result::Result<Self, String> {
        match r {
            DimRepr::Num(n) if n >= 1 => Ok(PcaDimSpec::Dim(n)),
            DimRepr::Num(n) => Err(format!("pca dim must be >= 1, got {n}")),
            DimRepr::Name(s) if s.eq_ignore_ascii_case("native") => Ok(PcaDimSpec::Native),
            DimRepr::Name(s) => Err(format!("unknown pca dim {s:?}")),
        }
    }
}

impl From<PcaDimSpec> for DimRepr {
    fn from(d: PcaDimSpec) -> DimRepr {
        match d {
            PcaDimSpec::Dim(n) => DimRepr::Num(n),
            PcaDimSpec::Native => DimRepr::Name("native".into()),
        }
    }
}

/// One embedding model's axis: the PCA dims to sweep. A no-headline entry
/// is always enumerated alongside, so the axis contributes |dims| + 1 runs
/// per (architecture, transform) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingAxis {
    pub model_id: String,
    pub dims: Vec<PcaDimSpec>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridConfig {
    pub architectures: Vec<Arch>,
    pub transforms: Vec<TransformKind>,
    pub embedding_axes: Vec<EmbeddingAxis>,
    pub window: usize,
    pub horizon: usize,
    pub epochs: usize,
    pub seed: u64,
    pub parallelism: usize,
    pub search_budget: usize,
    pub kfolds: usize,
    pub splits: SplitConfig,
}

impl Default for GridConfig {
    /// The full sweep: 5 architectures x 3 transforms x (12 + 14)
    /// embedding variants = 390 runs.
    fn default() -> Self {
        let powers = |top: u32| -> Vec<PcaDimSpec> {
            (1..=top).map(|e| PcaDimSpec::Dim(1 << e)).collect()
        };
        let mut small = powers(10); // 2 .. 1024
        small.push(PcaDimSpec::Native); // 1536
        let mut large = powers(10);
        large.push(PcaDimSpec::Dim(1536));
        large.push(PcaDimSpec::Dim(2048));
        large.push(PcaDimSpec::Native); // 3072
        GridConfig {
            architectures: Arch::ALL.to_vec(),
            transforms: TransformKind::ALL.to_vec(),
            embedding_axes: vec![
                EmbeddingAxis {
                    model_id: "small".into(),
                    dims: small,
                },
                EmbeddingAxis {
                    model_id: "large".into(),
                    dims: large,
                },
            ],
            window: 5,
            horizon: 1,
            epochs: 500,
            seed: 0,
            parallelism: 1,
            search_budget: 10,
            kfolds: 5,
            splits: SplitConfig::default(),
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.architectures.is_empty()
            || self.transforms.is_empty()
            || self.embedding_axes.is_empty()
        {
            return Err(Error::Config("grid axes must be non-empty".into()));
        }
        if self.parallelism == 0 {
            return Err(Error::Config("parallelism must be >= 1".into()));
        }
        self.splits.validate()
    }
}

// ---------------------------------------------------------------------------
// Enumeration
// ---------------------------------------------------------------------------

/// One cell of the grid. The axis model is recorded even for no-headline
/// entries (each model's axis carries its own none bucket), keeping run ids
/// unique; results report the embedding as absent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunDescriptor {
    pub id: String,
    pub arch: Arch,
    pub transform: TransformKind,
    pub axis_model: String,
    /// `None` is the no-headline bucket entry.
    pub dim: Option<PcaDimSpec>,
}

fn run_id(arch: Arch, transform: TransformKind, model: &str, dim: Option<PcaDimSpec>) -> String {
    let dim_part = match dim {
        None => "none".to_string(),
        Some(d) => d.label(),
    };
    format!(
        "{}-{}-{}-{}",
        arch.as_str().to_lowercase(),
        transform.as_str().to_lowercase(),
        model,
        dim_part
    )
}

/// Cartesian product of the grid axes, in a deterministic order with ids
/// stable across invocations.
pub fn enumerate_grid(config: &GridConfig) -> Result<Vec<RunDescriptor>> {
    config.validate()?;
    let mut runs = Vec::new();
    for &arch in &config.architectures {
        for &transform in &config.transforms {
            for axis in &config.embedding_axes {
                let mut dims: Vec<Option<PcaDimSpec>> = vec![None];
                dims.extend(axis.dims.iter().copied().map(Some));
                for dim in dims {
                    runs.push(RunDescriptor {
                        id: run_id(arch, transform, &axis.model_id, dim),
                        arch,
                        transform,
                        axis_model: axis.model_id.clone(),
                        dim,
                    });
                }
            }
        }
    }
    Ok(runs)
}

/// Axis selectors parsed from `--filter` arguments.
#[derive(Debug, Clone, Default)]
pub struct RunFilter {
    pub archs: Option<Vec<Arch>>,
    pub transforms: Option<Vec<TransformKind>>,
    pub models: Option<Vec<String>>,
    /// Dim labels: "none", "native" or a number.
    pub dims: Option<Vec<String>>,
}

impl RunFilter {
    pub fn matches(&self, d: &RunDescriptor) -> bool {
        if let Some(archs) = &self.archs {
            if !archs.contains(&d.arch) {
                return false;
            }
        }
        if let Some(transforms) = &self.transforms {
            if !transforms.contains(&d.transform) {
                return false;
            }
        }
        if let Some(models) = &self.models {
            if !models.contains(&d.axis_model) {
                return false;
            }
        }
        if let Some(dims) = &self.dims {
            let label = d.dim.map(|x| x.label()).unwrap_or_else(|| "none".into());
            if !dims.contains(&label) {
                return false;
            }
        }
        true
    }

    /// Parse selectors like `arch=FFNN`, `transform=LOG_RETURN,LINEAR_DIFF`,
    /// `model=small`, `dim=4` (repeatable; values comma-separated).
    pub fn parse(args: &[String]) -> Result<RunFilter> {
        let mut filter = RunFilter::default();
        for arg in args {
            let (key, value) = arg
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("bad filter {arg:?}, expected key=value")))?;
            let values: Vec<&str> = value.split(',').collect();
            match key {
                "arch" => {
                    let parsed: Result<Vec<Arch>> = values.iter().map(|v| v.parse()).collect();
                    filter.archs = Some(parsed?);
                }
                "transform" => {
                    let parsed: Result<Vec<TransformKind>> =
                        values.iter().map(|v| v.parse()).collect();
                    filter.transforms = Some(parsed?);
                }
                "model" => filter.models = Some(values.iter().map(|v| v.to_string()).collect()),
                "dim" => {
                    filter.dims = Some(values.iter().map(|v| v.to_lowercase()).collect())
                }
                other => return Err(Error::Config(format!("unknown filter key {other:?}"))),
            }
        }
        Ok(filter)
    }
}

// ---------------------------------------------------------------------------
// Execution
// ---------------------------------------------------------------------------

/// Everything a grid needs: the processed frame and, per embedding model,
/// the selected headline embedding for each trading day.
pub struct DataContext {
    pub frame: AlignedFrame,
    pub daily: BTreeMap<String, BTreeMap<NaiveDate, EmbeddingVector>>,
    /// When set, fitted PCA bases are stored here as JSON and reused by
    /// later grid invocations instead of refitting.
    pub pca_dir: Option<PathBuf>,
}

impl DataContext {
    pub fn new(
        frame: AlignedFrame,
        daily: BTreeMap<String, BTreeMap<NaiveDate, EmbeddingVector>>,
    ) -> DataContext {
        DataContext {
            frame,
            daily,
            pca_dir: None,
        }
    }
}

/// The grid's atomic output row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run_id: String,
    pub arch: Arch,
    pub transform: TransformKind,
    /// Absent for no-headline runs.
    pub embedding_model: Option<String>,
    /// Dim label ("2", "native"); absent for no-headline runs.
    pub pca_dim: Option<String>,
    pub spec: ModelSpec,
    pub metrics: MetricsReport,
    pub wall_secs: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub run_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum RunRecord {
    Ok(RunResult),
    Failed(RunFailure),
}

#[derive(Debug)]
pub struct GridOutcome {
    /// Successful results for the whole grid, previously completed runs
    /// included, sorted by run id.
    pub results: Vec<RunResult>,
    pub failures: Vec<RunFailure>,
    /// Runs executed by this invocation.
    pub executed: usize,
    /// Runs skipped because a result file already existed.
    pub reused: usize,
}

fn record_path(results_dir: &Path, run_id: &str) -> PathBuf {
    results_dir.join(format!("{run_id}.json"))
}

fn write_record(results_dir: &Path, record: &RunRecord) -> Result<()> {
    let id = match record {
        RunRecord::Ok(r) => &r.run_id,
        RunRecord::Failed(f) => &f.run_id,
    };
    let body = serde_json::to_string_pretty(record)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    std::fs::write(record_path(results_dir, id), body)?;
    Ok(())
}

fn read_record(path: &Path) -> Result<RunRecord> {
    let body = std::fs::read_to_string(path)?;
    serde_json::from_str(&body).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })
}

#[derive(Serialize, Deserialize)]
struct PcaBundle {
    model: PcaModel,
    fit_range: (NaiveDate, NaiveDate),
}

/// Shared, lazily built per-model PCA bases and per-variant datasets.
struct GridCaches<'c> {
    ctx: &'c DataContext,
    config: &'c GridConfig,
    pca: Mutex<BTreeMap<String, std::sync::Arc<PcaBundle>>>,
    variants: Mutex<BTreeMap<String, std::sync::Arc<DatasetVariant>>>,
}

impl<'c> GridCaches<'c> {
    fn new(ctx: &'c DataContext, config: &'c GridConfig) -> Self {
        GridCaches {
            ctx,
            config,
            pca: Mutex::new(BTreeMap::new()),
            variants: Mutex::new(BTreeMap::new()),
        }
    }

    /// Fit (once per model) a PCA basis on the training-range embeddings,
    /// wide enough for the largest requested reduced dim. When the context
    /// carries a pca directory, a basis fitted by an earlier invocation is
    /// loaded from there instead of refitting.
    fn pca_for(&self, model_id: &str) -> Result<std::sync::Arc<PcaBundle>> {
        if let Some(found) = self.pca.lock().expect("pca lock").get(model_id) {
            return Ok(std::sync::Arc::clone(found));
        }
        let daily = self.ctx.daily.get(model_id).ok_or_else(|| {
            Error::NoData(format!("no embeddings loaded for model {model_id}"))
        })?;
        let cutoff = self.config.splits.train_end;
        let mut rows = Vec::new();
        let mut first = None;
        let mut last = None;
        for date in &self.ctx.frame.dates {
            if *date > cutoff {
                break;
            }
            if let Some(v) = daily.get(date) {
                rows.push(v.values.clone());
                first.get_or_insert(*date);
                last = Some(*date);
            }
        }
        if rows.len() < 2 {
            return Err(Error::NoData(format!(
                "fewer than 2 train-range embeddings for model {model_id}"
            )));
        }
        let max_dim = self
            .config
            .embedding_axes
            .iter()
            .filter(|a| a.model_id == model_id)
            .flat_map(|a| &a.dims)
            .filter_map(|d| match d {
                PcaDimSpec::Dim(k) => Some(*k),
                PcaDimSpec::Native => None,
            })
            .max()
            .unwrap_or(1);
        let d = rows[0].len();
        let k = max_dim.min(rows.len() - 1).min(d);
        let fit_range = (first.expect("rows nonempty"), last.expect("rows nonempty"));

        let dump = self
            .ctx
            .pca_dir
            .as_ref()
            .map(|dir| dir.join(format!("pca-{model_id}.json")));
        let cached = dump.as_ref().and_then(|path| {
            let body = std::fs::read_to_string(path).ok()?;
            let bundle: PcaBundle = serde_json::from_str(&body).ok()?;
            let fits = bundle.model.k() >= k
                && bundle.model.dim() == d
                && bundle.fit_range == fit_range
                && bundle.model.fitted_on == rows.len();
            fits.then_some(bundle)
        });
        let bundle = match cached {
            Some(bundle) => std::sync::Arc::new(bundle),
            None => {
                let x = crate::linalg::Mat::from_rows(rows)?;
                let bundle = std::sync::Arc::new(PcaBundle {
                    model: fit_pca(&x, k)?,
                    fit_range,
                });
                if let Some(path) = &dump {
                    if let Some(parent) = path.parent() {
                        std::fs::create_dir_all(parent)?;
                    }
                    let body = serde_json::to_string(&*bundle)
                        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
                    std::fs::write(path, body)?;
                }
                bundle
            }
        };
        self.pca
            .lock()
            .expect("pca lock")
            .insert(model_id.to_string(), std::sync::Arc::clone(&bundle));
        Ok(bundle)
    }

    fn variant_for(&self, descriptor: &RunDescriptor) -> Result<std::sync::Arc<DatasetVariant>> {
        let key = match descriptor.dim {
            None => format!("{}-none", descriptor.transform.as_str()),
            Some(dim) => format!(
                "{}-{}-{}",
                descriptor.transform.as_str(),
                descriptor.axis_model,
                dim.label()
            ),
        };
        if let Some(found) = self.variants.lock().expect("variant lock").get(&key) {
            return Ok(std::sync::Arc::clone(found));
        }

        let empty = BTreeMap::new();
        let (embedding, daily) = match descriptor.dim {
            None => (None, &empty),
            Some(dim) => {
                let daily = self.ctx.daily.get(&descriptor.axis_model).ok_or_else(|| {
                    Error::NoData(format!(
                        "no embeddings loaded for model {}",
                        descriptor.axis_model
                    ))
                })?;
                let native_dim = daily
                    .values()
                    .next()
                    .map(|v| v.dim)
                    .ok_or_else(|| Error::NoData("empty embedding map".into()))?;
                let variant = match dim {
                    PcaDimSpec::Native => EmbeddingVariant {
                        model_id: descriptor.axis_model.clone(),
                        projection: Projection::Native { dim: native_dim },
                        fit_range: None,
                    },
                    PcaDimSpec::Dim(k) => {
                        let bundle = self.pca_for(&descriptor.axis_model)?;
                        if k > bundle.model.k() {
                            return Err(Error::Param(format!(
                                "pca dim {k} infeasible: basis has rank budget {} \
                                 (train rows and native dim bound it)",
                                bundle.model.k()
                            )));
                        }
                        EmbeddingVariant {
                            model_id: descriptor.axis_model.clone(),
                            projection: Projection::Pca(bundle.model.truncate(k)?),
                            fit_range: Some(bundle.fit_range),
                        }
                    }
                };
                (Some(variant), daily)
            }
        };

        let cfg = VariantConfig {
            transform: descriptor.transform,
            window: self.config.window,
            horizon: self.config.horizon,
            seed: derive_seed(self.config.seed, &format!("variant-{key}")),
            splits: self.config.splits,
        };
        let built = std::sync::Arc::new(build_variant(
            &self.ctx.frame,
            embedding.as_ref(),
            daily,
            &cfg,
        )?);
        self.variants
            .lock()
            .expect("variant lock")
            .insert(key, std::sync::Arc::clone(&built));
        Ok(built)
    }
}

fn execute_one(
    descriptor: &RunDescriptor,
    caches: &GridCaches,
    config: &GridConfig,
    results_dir: &Path,
) -> Result<RunResult> {
    let started = Instant::now();
    let variant = caches.variant_for(descriptor)?;
    let run_seed = derive_seed(config.seed, &descriptor.id);

    let mut base = ModelSpec::new(descriptor.arch, variant.n_features(), config.window);
    base.epochs = config.epochs;
    base.seed = run_seed;

    let search = hyperparameter_search(
        &SearchSpace::default(),
        config.search_budget,
        &variant,
        &base,
        config.kfolds,
        derive_seed(run_seed, "search"),
    )?;
    let mut spec = search.best;
    spec.seed = derive_seed(run_seed, "final");
    spec.batch_size = spec.batch_size.min(variant.splits.train.len());

    let model = train(&spec, &variant, None)?;
    let (train_pred, train_y) = predict_rows(&model, &variant, &variant.splits.train)?;
    let (test_pred, test_y) = predict_rows(&model, &variant, &variant.splits.test)?;
    let metrics = MetricsReport::from_predictions(&train_y, &train_pred, &test_y, &test_pred)?;
    if !metrics.all_finite() {
        return Err(Error::Numeric("non-finite metrics".into()));
    }

    let model_dir = results_dir.join("models");
    std::fs::create_dir_all(&model_dir)?;
    model.save(&model_dir.join(format!("{}.hftm", descriptor.id)))?;

    Ok(RunResult {
        run_id: descriptor.id.clone(),
        arch: descriptor.arch,
        transform: descriptor.transform,
        embedding_model: descriptor.dim.map(|_| descriptor.axis_model.clone()),
        pca_dim: descriptor.dim.map(|d| d.label()),
        spec,
        metrics,
        wall_secs: started.elapsed().as_secs_f64(),
        seed: run_seed,
    })
}

/// Execute every descriptor not already persisted in `results_dir`.
///
/// Runs are isolated and seeded from (grid seed, run id), so execution
/// order and the worker-pool size never affect any result. A run that
/// fails records a failure entry and the grid continues; only I/O errors
/// abort the grid.
pub fn execute_grid(
    config: &GridConfig,
    ctx: &DataContext,
    results_dir: &Path,
    filter: &RunFilter,
) -> Result<GridOutcome> {
    config.validate()?;
    std::fs::create_dir_all(results_dir)?;
    let descriptors: Vec<RunDescriptor> = enumerate_grid(config)?
        .into_iter()
        .filter(|d| filter.matches(d))
        .collect();

    let mut pending = Vec::new();
    let mut reused = 0usize;
    for d in &descriptors {
        if record_path(results_dir, &d.id).exists() {
            reused += 1;
        } else {
            pending.push(d.clone());
        }
    }

    let caches = GridCaches::new(ctx, config);
    let next = AtomicUsize::new(0);
    let io_error: Mutex<Option<Error>> = Mutex::new(None);
    let executed = pending.len();

    std::thread::scope(|s| {
        for _ in 0..config.parallelism.min(pending.len().max(1)) {
            s.spawn(|| loop {
                let idx = next.fetch_add(1, Ordering::SeqCst);
                let Some(descriptor) = pending.get(idx) else { break };
                let record = match execute_one(descriptor, &caches, config, results_dir) {
                    Ok(result) => RunRecord::Ok(result),
                    Err(e) => RunRecord::Failed(RunFailure {
                        run_id: descriptor.id.clone(),
                        error: e.to_string(),
                    }),
                };
                if let Err(e) = write_record(results_dir, &record) {
                    *io_error.lock().expect("io error lock") = Some(e);
                    break;
                }
            });
        }
    });
    if let Some(e) = io_error.lock().expect("io error lock").take() {
        return Err(e);
    }

    // Load the full grid state back, previously completed runs included.
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for d in &descriptors {
        match read_record(&record_path(results_dir, &d.id))? {
            RunRecord::Ok(r) => results.push(r),
            RunRecord::Failed(f) => failures.push(f),
        }
    }
    results.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    failures.sort_by(|a, b| a.run_id.cmp(&b.run_id));

    write_consolidated_csv(&results_dir.join("results.csv"), &results, &failures)?;

    Ok(GridOutcome {
        results,
        failures,
        executed,
        reused,
    })
}

/// Load every run record in a results directory.
pub fn load_results(results_dir: &Path) -> Result<(Vec<RunResult>, Vec<RunFailure>)> {
    let mut results = Vec::new();
    let mut failures = Vec::new();
    for entry in std::fs::read_dir(results_dir)? {
        let path = entry?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("json") {
            continue;
        }
        match read_record(&path)? {
            RunRecord::Ok(r) => results.push(r),
            RunRecord::Failed(f) => failures.push(f),
        }
    }
    results.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    failures.sort_by(|a, b| a.run_id.cmp(&b.run_id));
    Ok((results, failures))
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Leaderboard sort column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SortKey {
    #[default]
    TestSmape,
    TestMse,
    TestR2,
}

impl std::str::FromStr for SortKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_lowercase().as_str() {
            "test_smape" => Ok(SortKey::TestSmape),
            "test_mse" => Ok(SortKey::TestMse),
            "test_r2" => Ok(SortKey::TestR2),
            other => Err(Error::Param(format!("unknown sort key {other:?}"))),
        }
    }
}

/// One leaderboard row; the column set mirrors the consolidated results
/// table: architecture, PCA dimension, then train/test MSE, SMAPE and R2.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LeaderboardRow {
    pub architecture: String,
    pub pca_dimension: String,
    pub train_mse: f64,
    pub test_mse: f64,
    pub train_smape: f64,
    pub test_smape: f64,
    pub train_r2: f64,
    pub test_r2: f64,
}

/// Rows sorted ascending by the sort key, truncated to `top` when given.
pub fn leaderboard(
    results: &[RunResult],
    sort_key: SortKey,
    top: Option<usize>,
) -> Result<Vec<LeaderboardRow>> {
    if results.is_empty() {
        return Err(Error::NoData("no successful runs to rank".into()));
    }
    let mut rows: Vec<LeaderboardRow> = results
        .iter()
        .map(|r| LeaderboardRow {
            architecture: r.arch.as_str().to_string(),
            pca_dimension: r.pca_dim.clone().unwrap_or_else(|| "none".into()),
            train_mse: r.metrics.train_mse,
            test_mse: r.metrics.test_mse,
            train_smape: r.metrics.train_smape,
            test_smape: r.metrics.test_smape,
            train_r2: r.metrics.train_r2,
            test_r2: r.metrics.test_r2,
        })
        .collect();
    let key = |row: &LeaderboardRow| match sort_key {
        SortKey::TestSmape => row.test_smape,
        SortKey::TestMse => row.test_mse,
        SortKey::TestR2 => row.test_r2,
    };
    rows.sort_by(|a, b| key(a).partial_cmp(&key(b)).expect("finite metrics"));
    if let Some(top) = top {
        rows.truncate(top);
    }
    Ok(rows)
}

/// Minimum test SMAPE achieved per PCA dimension bucket (the no-headline
/// bucket included), across all architectures and transforms.
pub fn min_smape_by_pca(results: &[RunResult]) -> Vec<(String, f64)> {
    let mut best: BTreeMap<String, f64> = BTreeMap::new();
    for r in results {
        let label = r.pca_dim.clone().unwrap_or_else(|| "none".into());
        let entry = best.entry(label).or_insert(f64::INFINITY);
        *entry = entry.min(r.metrics.test_smape);
    }
    let mut out: Vec<(String, f64)> = best.into_iter().collect();
    // none first, then numeric dims ascending, native last.
    out.sort_by_key(|(label, _)| match label.as_str() {
        "none" => (0, 0),
        "native" => (2, 0),
        other => (1, other.parse::<usize>().unwrap_or(usize::MAX)),
    });
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UpliftRow {
    pub arch: String,
    pub transform: String,
    pub smape_none: f64,
    pub smape_best_embedding: f64,
    /// (none - best) / none: positive means headlines helped.
    pub uplift: f64,
}

#[derive(Debug, Clone, Default)]
pub struct UpliftReport {
    pub rows: Vec<UpliftRow>,
    /// Mean uplift over the rows, absent when nothing was comparable.
    pub mean_uplift: Option<f64>,
    /// (arch, transform) pairs missing one of the two buckets.
    pub skipped: Vec<String>,
}

/// Relative test-SMAPE improvement of the best with-headline run over the
/// no-headline run, per (architecture, transform). When several no-headline
/// runs exist (one per embedding axis), the strongest one is the baseline.
pub fn headline_uplift(results: &[RunResult]) -> UpliftReport {
    let mut pairs: BTreeMap<(String, String), (f64, f64)> = BTreeMap::new();
    for r in results {
        let key = (r.arch.as_str().to_string(), r.transform.as_str().to_string());
        let entry = pairs.entry(key).or_insert((f64::INFINITY, f64::INFINITY));
        if r.embedding_model.is_none() {
            entry.0 = entry.0.min(r.metrics.test_smape);
        } else {
            entry.1 = entry.1.min(r.metrics.test_smape);
        }
    }
    let mut report = UpliftReport::default();
    for ((arch, transform), (none, best)) in pairs {
        if !none.is_finite() || !best.is_finite() {
            report.skipped.push(format!(
                "{arch}/{transform}: missing {} bucket",
                if none.is_finite() { "with-headline" } else { "no-headline" }
            ));
            continue;
        }
        report.rows.push(UpliftRow {
            arch,
            transform,
            smape_none: none,
            smape_best_embedding: best,
            uplift: (none - best) / none,
        });
    }
    if !report.rows.is_empty() {
        report.mean_uplift =
            Some(report.rows.iter().map(|r| r.uplift).sum::<f64>() / report.rows.len() as f64);
    }
    report
}

// ---------------------------------------------------------------------------
// CSV emission
// ---------------------------------------------------------------------------

fn write_consolidated_csv(
    path: &Path,
    results: &[RunResult],
    failures: &[RunFailure],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    w.write_record([
        "run_id",
        "status",
        "architecture",
        "transform",
        "embedding_model",
        "pca_dimension",
        "hidden_dim",
        "dropout_p",
        "learning_rate",
        "batch_size",
        "epochs",
        "train_mse",
        "test_mse",
        "train_smape",
        "test_smape",
        "train_r2",
        "test_r2",
        "wall_secs",
        "seed",
        "error",
    ])
    .map_err(csv_io)?;
    for r in results {
        w.write_record([
            r.run_id.clone(),
            "ok".into(),
            r.arch.as_str().into(),
            r.transform.as_str().into(),
            r.embedding_model.clone().unwrap_or_else(|| "none".into()),
            r.pca_dim.clone().unwrap_or_else(|| "none".into()),
            r.spec.hidden_dim.to_string(),
            format!("{}", r.spec.dropout_p),
            format!("{}", r.spec.learning_rate),
            r.spec.batch_size.to_string(),
            r.spec.epochs.to_string(),
            format!("{}", r.metrics.train_mse),
            format!("{}", r.metrics.test_mse),
            format!("{}", r.metrics.train_smape),
            format!("{}", r.metrics.test_smape),
            format!("{}", r.metrics.train_r2),
            format!("{}", r.metrics.test_r2),
            format!("{}", r.wall_secs),
            r.seed.to_string(),
            String::new(),
        ])
        .map_err(csv_io)?;
    }
    for f in failures {
        let mut row = vec![f.run_id.clone(), "failed".into()];
        row.extend(std::iter::repeat_n(String::new(), 17));
        row.push(f.error.clone());
        w.write_record(row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_leaderboard_csv(path: &Path, rows: &[LeaderboardRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    w.write_record([
        "architecture",
        "pca_dimension",
        "train_mse",
        "test_mse",
        "train_smape",
        "test_smape",
        "train_r2",
        "test_r2",
    ])
    .map_err(csv_io)?;
    for r in rows {
        w.write_record([
            r.architecture.clone(),
            r.pca_dimension.clone(),
            format!("{}", r.train_mse),
            format!("{}", r.test_mse),
            format!("{}", r.train_smape),
            format!("{}", r.test_smape),
            format!("{}", r.train_r2),
            format!("{}", r.test_r2),
        ])
        .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_min_smape_csv(path: &Path, rows: &[(String, f64)]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    w.write_record(["pca_dimension", "min_test_smape"]).map_err(csv_io)?;
    for (label, value) in rows {
        w.write_record([label.clone(), format!("{value}")]).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_uplift_csv(path: &Path, report: &UpliftReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io)?;
    w.write_record([
        "architecture",
        "transform",
        "smape_none",
        "smape_best_embedding",
        "uplift",
    ])
    .map_err(csv_io)?;
    for r in &report.rows {
        w.write_record([
            r.arch.clone(),
            r.transform.clone(),
            format!("{}", r.smape_none),
            format!("{}", r.smape_best_embedding),
            format!("{}", r.uplift),
        ])
        .map_err(csv_io)?;
    }
    if let Some(mean) = report.mean_uplift {
        w.write_record(["aggregate", "all", "", "", &format!("{mean}")])
            .map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
