//! Work behind each `cubt` subcommand, driven by serializable configs.
//!
//! Every config round-trips through JSON, so a saved [`RunConfig`] can be
//! re-executed later and produces the same output bytes.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backward::DissimilarityTable;
use crate::baseline;
use crate::data::Dataset;
use crate::datagen::{self, Model, ModelSpec};
use crate::error::{CubtError, Result};
use crate::eval;
use crate::params::Params;
use crate::tree::{Stage, TreeModel};
use crate::{fit, ClusterResult};

/// A persisted invocation of one subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum RunConfig {
    Generate(GenerateConfig),
    Fit(FitConfig),
    Predict(PredictConfig),
    Benchmark(BenchmarkConfig),
    Export(ExportConfig),
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let text = read_to_string(path.as_ref())?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), serde_json::to_string_pretty(self)? + "\n")
    }

    /// Runs the command and returns the text meant for stdout.
    pub fn execute(&self) -> Result<String> {
        match self {
            RunConfig::Generate(c) => {
                let data = cmd_generate(c)?;
                Ok(format!(
                    "wrote {} rows x {} columns to {}\n",
                    data.n(),
                    data.p(),
                    c.output.display()
                ))
            }
            RunConfig::Fit(c) => Ok(cmd_fit(c)?.to_string()),
            RunConfig::Predict(c) => {
                let report = cmd_predict(c)?;
                Ok(match &c.output {
                    Some(path) => format!(
                        "wrote {} predictions to {}\n",
                        report.clusters.len(),
                        path.display()
                    ),
                    None => report.to_csv()?,
                })
            }
            RunConfig::Benchmark(c) => Ok(cmd_benchmark(c)?.render_tables()),
            RunConfig::Export(c) => {
                let dot = cmd_export(c)?;
                Ok(match &c.output {
                    Some(path) => format!("wrote {}\n", path.display()),
                    None => dot,
                })
            }
        }
    }
}

fn read_to_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CubtError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|source| CubtError::File {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, contents).map_err(|source| CubtError::File {
        path: path.to_path_buf(),
        source,
    })
}

fn json_bytes<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

// ---------------------------------------------------------------- generate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateConfig {
    pub model: Model,
    #[serde(default)]
    pub sigma: Option<f64>,
    /// Overrides the model's standard group size.
    #[serde(default)]
    pub per_group: Option<usize>,
    #[serde(default)]
    pub seed: u64,
    pub output: PathBuf,
}

impl GenerateConfig {
    pub fn spec(&self) -> ModelSpec {
        let mut spec = ModelSpec::new(self.model, self.sigma, self.seed);
        if let Some(n) = self.per_group {
            spec.per_group = n;
        }
        spec
    }
}

/// Draws a labeled sample and writes it as CSV.
pub fn cmd_generate(config: &GenerateConfig) -> Result<Dataset> {
    let data = datagen::generate(&config.spec())?;
    let mut buf = Vec::new();
    data.write_csv(&mut buf)?;
    write_file(&config.output, buf)?;
    Ok(data)
}

// --------------------------------------------------------------------- fit

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub data: PathBuf,
    pub out_dir: PathBuf,
    #[serde(flatten)]
    pub params: Params,
}

/// Summary of a fit; the full result lives in `result.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub n: usize,
    pub p: usize,
    pub k_found: usize,
    /// Present only when the input carried a `label` column.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mce: Option<f64>,
    pub mindev_used: f64,
    pub eta: Option<f64>,
    pub warnings: Vec<String>,
    pub files: Vec<PathBuf>,
}

impl std::fmt::Display for FitReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "observations: {} x {}", self.n, self.p)?;
        writeln!(f, "k_found: {}", self.k_found)?;
        if let Some(m) = self.mce {
            writeln!(f, "mce: {m}")?;
        }
        writeln!(f, "mindev_used: {}", self.mindev_used)?;
        if let Some(eta) = self.eta {
            writeln!(f, "eta: {eta}")?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        for p in &self.files {
            writeln!(f, "wrote {}", p.display())?;
        }
        Ok(())
    }
}

pub const RESULT_FILE: &str = "result.json";
pub const TREE_FILE: &str = "tree.json";
pub const DOT_FILE: &str = "tree.dot";
pub const TABLE_FILE: &str = "dissimilarity.csv";

/// Fits on the CSV at `config.data` and writes `result.json`, `tree.json`,
/// `tree.dot` and the pruned tree's `dissimilarity.csv` into `out_dir`.
pub fn cmd_fit(config: &FitConfig) -> Result<FitReport> {
    let data = Dataset::read_csv(&config.data)?;
    let result = fit(&data.without_labels(), &config.params)?;
    log::info!(
        "fit {} rows: {} leaves grown, {} after pruning, k = {}",
        data.n(),
        result.snapshots[0].n_leaves(),
        result.snapshots[1].n_leaves(),
        result.k_found
    );
    let mce = match data.labels() {
        Some(truth) => Some(eval::mce(truth, &result.assignments)?),
        None => None,
    };

    let mut model = result.tree_model();
    model.column_names = data.column_names().map(<[String]>::to_vec);
    let work = match &result.scaling {
        Some(s) => s.apply(&data),
        None => data.without_labels(),
    };
    let table = DissimilarityTable::for_leaves(&result.snapshots[1], &work, config.params.delta);
    let mut table_csv = Vec::new();
    table.write_csv(&mut table_csv)?;

    let dir = &config.out_dir;
    let files = vec![
        dir.join(RESULT_FILE),
        dir.join(TREE_FILE),
        dir.join(DOT_FILE),
        dir.join(TABLE_FILE),
    ];
    write_file(&files[0], json_bytes(&result)?)?;
    write_file(&files[1], json_bytes(&model)?)?;
    write_file(&files[2], model.to_dot())?;
    write_file(&files[3], table_csv)?;

    Ok(FitReport {
        n: data.n(),
        p: data.p(),
        k_found: result.k_found,
        mce,
        mindev_used: result.mindev_used,
        eta: result.eta,
        warnings: result.warnings,
        files,
    })
}

// ----------------------------------------------------------------- predict

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictConfig {
    /// A `tree.json` written by `fit`.
    pub tree: PathBuf,
    pub data: PathBuf,
    /// Where to write the label CSV; stdout when absent.
    #[serde(default)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictReport {
    /// Row identifiers (names from the input or 1-based positions).
    pub ids: Vec<String>,
    pub clusters: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mce: Option<f64>,
}

impl PredictReport {
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["id", "cluster"])?;
        for (id, c) in self.ids.iter().zip(&self.clusters) {
            w.write_record([id.as_str(), &c.to_string()])?;
        }
        let bytes = w.into_inner().map_err(|e| CubtError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}

pub fn load_tree(path: impl AsRef<Path>) -> Result<TreeModel> {
    let text = read_to_string(path.as_ref())?;
    Ok(serde_json::from_str(&text)?)
}

/// Routes every row of `config.data` through a joined tree.
pub fn cmd_predict(config: &PredictConfig) -> Result<PredictReport> {
    let model = load_tree(&config.tree)?;
    if model.stage != Stage::Joined {
        return Err(CubtError::Stage {
            expected: Stage::Joined.name(),
            found: model.stage.name(),
        });
    }
    let data = Dataset::read_csv(&config.data)?;
    let router = model.router()?;
    let clusters = router.predict_dataset(&data)?;
    let ids = match data.row_names() {
        Some(names) => names.to_vec(),
        None => (1..=data.n()).map(|i| i.to_string()).collect(),
    };
    let mce = match data.labels() {
        Some(truth) => Some(eval::mce(truth, &clusters)?),
        None => None,
    };
    let report = PredictReport { ids, clusters, mce };
    if let Some(path) = &config.output {
        write_file(path, report.to_csv()?)?;
    }
    Ok(report)
}

// ------------------------------------------------------------------ export

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportConfig {
    pub tree: PathBuf,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

/// Renders a `tree.json` (any stage) as Graphviz DOT.
pub fn cmd_export(config: &ExportConfig) -> Result<String> {
    let dot = load_tree(&config.tree)?.to_dot();
    if let Some(path) = &config.output {
        write_file(path, &dot)?;
    }
    Ok(dot)
}

// --------------------------------------------------------------- benchmark

/// One simulated setting: a model and, where it has one, a noise level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub model: Model,
    #[serde(default)]
    pub sigma: Option<f64>,
}

impl Scenario {
    pub fn new(model: Model, sigma: Option<f64>) -> Scenario {
        Scenario { model, sigma }
    }

    /// Every published noise level of `model` (one scenario if it has none).
    pub fn all_for(model: Model) -> Vec<Scenario> {
        if model.uses_sigma() {
            model
                .sigma_grid()
                .iter()
                .map(|&s| Scenario::new(model, Some(s)))
                .collect()
        } else {
            vec![Scenario::new(model, None)]
        }
    }
}

/// Cartesian grid of growing and pruning parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub minsize: Vec<usize>,
    pub mindev: Vec<f64>,
    pub mindist: Vec<f64>,
    pub delta: Vec<f64>,
}

impl Grid {
    /// The tuning grid used for the published simulations.
    pub fn published() -> Grid {
        Grid {
            minsize: vec![5, 10, 15],
            mindev: vec![0.7, 0.9],
            mindist: vec![0.3, 0.5],
            delta: vec![0.2, 0.4, 0.6],
        }
    }

    /// A grid that also reaches deep trees, which the quantile joining rule
    /// needs to find the right cluster count.
    pub fn desk() -> Grid {
        Grid {
            minsize: vec![5, 10, 15, 20, 25],
            mindev: vec![0.7, 1e-3, 1e-4, 1e-5],
            mindist: vec![0.0],
            delta: vec![0.2, 0.6],
        }
    }

    /// Grid points in nested order: minsize, mindev, mindist, delta.
    pub fn points(&self) -> Vec<Params> {
        let mut out = Vec::new();
        for &minsize in &self.minsize {
            for &mindev in &self.mindev {
                for &mindist in &self.mindist {
                    for &delta in &self.delta {
                        out.push(Params {
                            minsize,
                            mindev,
                            mindist,
                            delta,
                            ..Params::default()
                        });
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// CUBT joined down to the true number of groups.
    CubtK,
    /// CUBT with the quantile stopping rule.
    CubtEta,
    #[serde(rename = "kmeans")]
    KMeans,
    #[serde(rename = "kmeans10")]
    KMeans10,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::CubtK, Method::CubtEta, Method::KMeans, Method::KMeans10];

    pub fn name(self) -> &'static str {
        match self {
            Method::CubtK => "cubt_k",
            Method::CubtEta => "cubt_eta",
            Method::KMeans => "kmeans",
            Method::KMeans10 => "kmeans10",
        }
    }

    fn uses_grid(self) -> bool {
        matches!(self, Method::CubtK | Method::CubtEta)
    }
}

impl std::str::FromStr for Method {
    type Err = CubtError;

    fn from_str(s: &str) -> Result<Method> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| CubtError::InvalidParams(format!("unknown method `{s}`")))
    }
}

fn default_replicates() -> usize {
    100
}

fn default_restarts() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub scenarios: Vec<Scenario>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Replicate `r` draws its data and k-means starts from `seed + r`.
    #[serde(default)]
    pub seed: u64,
    pub grid: Grid,
    #[serde(default = "all_methods")]
    pub methods: Vec<Method>,
    /// Joining quantile per model name; models not listed use their
    /// published value.
    #[serde(default)]
    pub eta_quantiles: BTreeMap<String, f64>,
    #[serde(default = "default_restarts")]
    pub kmeans_restarts: usize,
    /// Overrides every model's group size (handy for quick runs).
    #[serde(default)]
    pub per_group: Option<usize>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn all_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

impl Default for BenchmarkConfig {
    /// Every published scenario, 100 replicates, the published grid.
    fn default() -> Self {
        BenchmarkConfig {
            scenarios: [Model::M1, Model::M2, Model::M3, Model::M4]
                .into_iter()
                .flat_map(Scenario::all_for)
                .collect(),
            replicates: default_replicates(),
            seed: 0,
            grid: Grid::published(),
            methods: all_methods(),
            eta_quantiles: BTreeMap::new(),
            kmeans_restarts: default_restarts(),
            per_group: None,
            out_dir: None,
        }
    }
}

impl BenchmarkConfig {
    pub fn eta_quantile(&self, model: Model) -> f64 {
        self.eta_quantiles
            .get(model.name())
            .copied()
            .unwrap_or_else(|| model.eta_quantile())
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(CubtError::InvalidParams(m.into()));
        if self.scenarios.is_empty() {
            return bad("benchmark needs at least one scenario");
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1");
        }
        if self.methods.is_empty() {
            return bad("benchmark needs at least one method");
        }
        if self.methods.iter().any(|m| m.uses_grid()) && self.grid.points().is_empty() {
            return bad("parameter grid is empty");
        }
        for p in self.grid.points() {
            p.validate_growth()?;
        }
        Ok(())
    }
}

/// Short stable digest of a parameter record.
pub fn params_hash(params: &Params) -> String {
    let json = serde_json::to_string(params).expect("params serialize");
    let digest = Sha256::digest(json.as_bytes());
    digest[..6].iter().map(|b| format!("{b:02x}")).collect()
}

/// One (scenario, method, configuration, replicate) outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    pub model: Model,
    pub sigma: Option<f64>,
    pub method: Method,
    /// Index into the grid points; absent for k-means.
    pub config: Option<usize>,
    pub params_hash: String,
    pub minsize: Option<usize>,
    pub mindev: Option<f64>,
    pub mindist: Option<f64>,
    pub delta: Option<f64>,
    pub replicate: usize,
    pub seed: u64,
    pub mce: Option<f64>,
    pub k_found: Option<usize>,
    /// `ok`, or the error that stopped this run.
    pub status: String,
}

/// Aggregate over replicates of one (scenario, method, configuration).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub model: Model,
    pub sigma: Option<f64>,
    pub method: Method,
    pub config: Option<usize>,
    pub params_hash: String,
    pub runs: usize,
    pub failures: usize,
    /// Mean over successful runs.
    pub mean_mce: Option<f64>,
    /// Successful runs that found the true number of groups.
    pub correct_k: usize,
}

/// Known-k comparison for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MceTableRow {
    pub model: Model,
    pub sigma: Option<f64>,
    pub cubt_best: Option<f64>,
    pub cubt_worst: Option<f64>,
    pub best_config: Option<usize>,
    pub kmeans: Option<f64>,
    pub kmeans10: Option<f64>,
}

/// Unknown-k recovery for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryTableRow {
    pub model: Model,
    pub sigma: Option<f64>,
    pub eta_quantile: f64,
    pub best_config: Option<usize>,
    pub correct_k: usize,
    pub replicates: usize,
    pub mean_mce: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub config: BenchmarkConfig,
    pub rows: Vec<RunRow>,
    pub summary: Vec<SummaryRow>,
    pub mce_table: Vec<MceTableRow>,
    pub recovery_table: Vec<RecoveryTableRow>,
}

pub const RUNS_FILE: &str = "runs.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MCE_TABLE_FILE: &str = "table_mce.csv";
pub const RECOVERY_TABLE_FILE: &str = "table_k.csv";
pub const CONFIG_FILE: &str = "config.json";

struct Job {
    scenario: usize,
    method: Method,
    config: Option<usize>,
    replicate: usize,
}

fn run_job(
    cfg: &BenchmarkConfig,
    job: &Job,
    points: &[Params],
    data: &Dataset,
) -> RunRow {
    let scenario = cfg.scenarios[job.scenario];
    let seed = cfg.seed.wrapping_add(job.replicate as u64);
    let k = scenario.model.n_groups();
    let params = job.config.map(|c| match job.method {
        Method::CubtK => points[c].clone().with_k(k),
        _ => points[c]
            .clone()
            .with_eta_quantile(cfg.eta_quantile(scenario.model)),
    });
    let x = data.without_labels();
    let outcome: Result<(Vec<usize>, usize)> = match job.method {
        Method::CubtK | Method::CubtEta => {
            fit(&x, params.as_ref().expect("grid method")).map(|r: ClusterResult| {
                let k = r.k_found;
                (r.assignments, k)
            })
        }
        Method::KMeans => baseline::kmeans(&x, k, seed).map(|m| (m.assignments, k)),
        Method::KMeans10 => {
            baseline::kmeans_multi(&x, k, cfg.kmeans_restarts, seed).map(|m| (m.assignments, k))
        }
    };
    let outcome = outcome.and_then(|(a, k_found)| {
        let truth = data.labels().expect("generated data is labeled");
        Ok((eval::mce(truth, &a)?, k_found))
    });
    let hash = match &params {
        Some(p) => params_hash(p),
        None => format!("restarts={}", match job.method {
            Method::KMeans10 => cfg.kmeans_restarts,
            _ => 1,
        }),
    };
    let point = job.config.map(|c| &points[c]);
    let (mce, k_found, status) = match outcome {
        Ok((m, kf)) => (Some(m), Some(kf), "ok".to_string()),
        Err(e) => {
            log::warn!(
                "{} {:?} {} replicate {}: {e}",
                scenario.model,
                scenario.sigma,
                job.method.name(),
                job.replicate
            );
            (None, None, format!("error: {e}"))
        }
    };
    RunRow {
        model: scenario.model,
        sigma: scenario.sigma,
        method: job.method,
        config: job.config,
        params_hash: hash,
        minsize: point.map(|p| p.minsize),
        mindev: point.map(|p| p.mindev),
        mindist: point.map(|p| p.mindist),
        delta: point.map(|p| p.delta),
        replicate: job.replicate,
        seed,
        mce,
        k_found,
        status,
    }
}

/// Runs every (scenario, method, grid point, replicate) combination.
///
/// Work is spread over the rayon pool; rows come back ordered by scenario,
/// method, grid point and replicate whatever the completion order.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkReport> {
    config.validate()?;
    let points = config.grid.points();
    let mut methods = config.methods.clone();
    methods.sort();
    methods.dedup();

    let mut datasets = Vec::new();
    for (s, sc) in config.scenarios.iter().enumerate() {
        for r in 0..config.replicates {
            let mut spec = ModelSpec::new(sc.model, sc.sigma, config.seed.wrapping_add(r as u64));
            if let Some(n) = config.per_group {
                spec.per_group = n;
            }
            datasets.push(((s, r), spec));
        }
    }
    let datasets: BTreeMap<(usize, usize), Dataset> = datasets
        .into_par_iter()
        .map(|(key, spec)| datagen::generate(&spec).map(|d| (key, d)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .collect();

    let mut jobs = Vec::new();
    for s in 0..config.scenarios.len() {
        for &method in &methods {
            let configs: Vec<Option<usize>> = if method.uses_grid() {
                (0..points.len()).map(Some).collect()
            } else {
                vec![None]
            };
            for c in configs {
                for replicate in 0..config.replicates {
                    jobs.push(Job {
                        scenario: s,
                        method,
                        config: c,
                        replicate,
                    });
                }
            }
        }
    }
    log::info!("benchmark: {} runs", jobs.len());
    let rows: Vec<RunRow> = jobs
        .par_iter()
        .map(|job| run_job(config, job, &points, &datasets[&(job.scenario, job.replicate)]))
        .collect();

    let summary = summarize(&rows);
    let (mce_table, recovery_table) = tables(config, &summary);
    Ok(BenchmarkReport {
        config: config.clone(),
        rows,
        summary,
        mce_table,
        recovery_table,
    })
}

fn same_scenario(a: (Model, Option<f64>), b: (Model, Option<f64>)) -> bool {
    a.0 == b.0 && a.1.map(f64::to_bits) == b.1.map(f64::to_bits)
}

/// Aggregates per-run rows, keeping the order in which groups first appear.
pub fn summarize(rows: &[RunRow]) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = Vec::new();
    let mut sums: Vec<f64> = Vec::new();
    for row in rows {
        let pos = out.iter().position(|s| {
            same_scenario((s.model, s.sigma), (row.model, row.sigma))
                && s.method == row.method
                && s.config == row.config
        });
        let i = match pos {
            Some(i) => i,
            None => {
                out.push(SummaryRow {
                    model: row.model,
                    sigma: row.sigma,
                    method: row.method,
                    config: row.config,
                    params_hash: row.params_hash.clone(),
                    runs: 0,
                    failures: 0,
                    mean_mce: None,
                    correct_k: 0,
                });
                sums.push(0.0);
                out.len() - 1
            }
        };
        let s = &mut out[i];
        s.runs += 1;
        match row.mce {
            Some(m) => {
                sums[i] += m;
                if row.k_found == Some(row.model.n_groups()) {
                    s.correct_k += 1;
                }
            }
            None => s.failures += 1,
        }
    }
    for (s, total) in out.iter_mut().zip(sums) {
        let ok = s.runs - s.failures;
        s.mean_mce = (ok > 0).then(|| total / ok as f64);
    }
    out
}

fn tables(
    config: &BenchmarkConfig,
    summary: &[SummaryRow],
) -> (Vec<MceTableRow>, Vec<RecoveryTableRow>) {
    let mut mce_rows = Vec::new();
    let mut rec_rows = Vec::new();
    for sc in &config.scenarios {
        let of = |m: Method| -> Vec<&SummaryRow> {
            summary
                .iter()
                .filter(|s| same_scenario((s.model, s.sigma), (sc.model, sc.sigma)) && s.method == m)
                .collect()
        };
        let scored = |rows: &[&SummaryRow]| -> Vec<(usize, f64)> {
            rows.iter()
                .filter_map(|s| Some((s.config?, s.mean_mce?)))
                .collect()
        };
        let known = scored(&of(Method::CubtK));
        let best = known
            .iter()
            .copied()
            .reduce(|a, b| if b.1 < a.1 { b } else { a });
        let worst = known
            .iter()
            .copied()
            .reduce(|a, b| if b.1 > a.1 { b } else { a });
        let single = |m: Method| of(m).first().and_then(|s| s.mean_mce);
        if config.methods.contains(&Method::CubtK)
            || config.methods.contains(&Method::KMeans)
            || config.methods.contains(&Method::KMeans10)
        {
            mce_rows.push(MceTableRow {
                model: sc.model,
                sigma: sc.sigma,
                cubt_best: best.map(|b| b.1),
                cubt_worst: worst.map(|w| w.1),
                best_config: best.map(|b| b.0),
                kmeans: single(Method::KMeans),
                kmeans10: single(Method::KMeans10),
            });
        }
        if config.methods.contains(&Method::CubtEta) {
            let best = of(Method::CubtEta).into_iter().reduce(|a, b| {
                let better = b.correct_k > a.correct_k
                    || (b.correct_k == a.correct_k
                        && b.mean_mce.unwrap_or(f64::INFINITY) < a.mean_mce.unwrap_or(f64::INFINITY));
                if better {
                    b
                } else {
                    a
                }
            });
            rec_rows.push(RecoveryTableRow {
                model: sc.model,
                sigma: sc.sigma,
                eta_quantile: config.eta_quantile(sc.model),
                best_config: best.and_then(|b| b.config),
                correct_k: best.map_or(0, |b| b.correct_k),
                replicates: config.replicates,
                mean_mce: best.and_then(|b| b.mean_mce),
            });
        }
    }
    (mce_rows, rec_rows)
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl BenchmarkReport {
    pub fn runs_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "model", "sigma", "method", "config", "params_hash", "minsize", "mindev", "mindist",
            "delta", "replicate", "seed", "mce", "k_found", "status",
        ])?;
        for r in &self.rows {
            w.write_record([
                r.model.name().to_string(),
                opt(r.sigma),
                r.method.name().to_string(),
                opt(r.config),
                r.params_hash.clone(),
                opt(r.minsize),
                opt(r.mindev),
                opt(r.mindist),
                opt(r.delta),
                r.replicate.to_string(),
                r.seed.to_string(),
                opt(r.mce),
                opt(r.k_found),
                r.status.clone(),
            ])?;
        }
        finish(w)
    }

    pub fn summary_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "model", "sigma", "method", "config", "params_hash", "runs", "failures", "mean_mce",
            "correct_k",
        ])?;
        for s in &self.summary {
            w.write_record([
                s.model.name().to_string(),
                opt(s.sigma),
                s.method.name().to_string(),
                opt(s.config),
                s.params_hash.clone(),
                s.runs.to_string(),
                s.failures.to_string(),
                opt(s.mean_mce),
                s.correct_k.to_string(),
            ])?;
        }
        finish(w)
    }

    pub fn mce_table_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "model", "sigma", "cubt_best", "cubt_worst", "best_config", "kmeans", "kmeans10",
        ])?;
        for t in &self.mce_table {
            w.write_record([
                t.model.name().to_string(),
                opt(t.sigma),
                opt(t.cubt_best),
                opt(t.cubt_worst),
                opt(t.best_config),
                opt(t.kmeans),
                opt(t.kmeans10),
            ])?;
        }
        finish(w)
    }

    pub fn recovery_table_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "model", "sigma", "eta_quantile", "best_config", "correct_k", "replicates", "mean_mce",
        ])?;
        for t in &self.recovery_table {
            w.write_record([
                t.model.name().to_string(),
                opt(t.sigma),
                t.eta_quantile.to_string(),
                opt(t.best_config),
                t.correct_k.to_string(),
                t.replicates.to_string(),
                opt(t.mean_mce),
            ])?;
        }
        finish(w)
    }

    /// Writes the run rows, summary, both tables and the config to `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let files = [
            (RUNS_FILE, self.runs_csv()?),
            (SUMMARY_FILE, self.summary_csv()?),
            (MCE_TABLE_FILE, self.mce_table_csv()?),
            (RECOVERY_TABLE_FILE, self.recovery_table_csv()?),
            (
                CONFIG_FILE,
                json_bytes(&RunConfig::Benchmark(self.config.clone()))?,
            ),
        ];
        let mut written = Vec::new();
        for (name, body) in files {
            let path = dir.join(name);
            write_file(&path, body)?;
            written.push(path);
        }
        Ok(written)
    }

    /// Plain-text rendering of both tables.
    pub fn render_tables(&self) -> String {
        let f = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.4}"));
        let sigma = |s: Option<f64>| s.map_or("-".to_string(), |x| x.to_string());
        let mut out = String::new();
        if !self.mce_table.is_empty() {
            out.push_str("Mean misclassification error, known k\n");
            let _ = writeln!(
                out,
                "{:<8} {:>6} {:>10} {:>10} {:>10} {:>10}",
                "model", "sigma", "cubt_best", "cubt_worst", "kmeans", "kmeans10"
            );
            for t in &self.mce_table {
                let _ = writeln!(
                    out,
                    "{:<8} {:>6} {:>10} {:>10} {:>10} {:>10}",
                    t.model.name(),
                    sigma(t.sigma),
                    f(t.cubt_best),
                    f(t.cubt_worst),
                    f(t.kmeans),
                    f(t.kmeans10)
                );
            }
        }
        if !self.recovery_table.is_empty() {
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str("Runs recovering the true k, unknown k\n");
            let _ = writeln!(
                out,
                "{:<8} {:>6} {:>6} {:>12} {:>10}",
                "model", "sigma", "q", "correct_k", "mean_mce"
            );
            for t in &self.recovery_table {
                let _ = writeln!(
                    out,
                    "{:<8} {:>6} {:>6} {:>12} {:>10}",
                    t.model.name(),
                    sigma(t.sigma),
                    t.eta_quantile,
                    format!("{}/{}", t.correct_k, t.replicates),
                    f(t.mean_mce)
                );
            }
        }
        let failures: usize = self.summary.iter().map(|s| s.failures).sum();
        if failures > 0 {
            let _ = writeln!(out, "\n{failures} runs failed; see the status column of {RUNS_FILE}");
        }
        out
    }
}

fn finish(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| CubtError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Runs the benchmark and, when `out_dir` is set, writes its files.
pub fn cmd_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkReport> {
    let report = run_benchmark(config)?;
    if let Some(dir) = &config.out_dir {
        report.write_to(dir)?;
    }
    Ok(report)
}
