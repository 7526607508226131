//! Command-line front end. Exit codes: 0 success, 2 usage, 3 data, 4 internal.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cubt::commands::{
    BenchmarkConfig, ExportConfig, FitConfig, GenerateConfig, Grid, Method, PredictConfig,
    RunConfig, Scenario,
};
use cubt::datagen::Model;
use cubt::{CubtError, Params};

#[derive(Parser)]
#[command(name = "cubt", version, about = "Clustering with unsupervised binary trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Persist {
    /// Load the run configuration from this JSON file; flags override it.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Write the effective run configuration to this JSON file.
    #[arg(long, value_name = "FILE")]
    save_config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a labeled sample from a simulation model.
    Generate {
        #[arg(long)]
        model: Option<Model>,
        #[arg(long)]
        sigma: Option<f64>,
        #[arg(long)]
        per_group: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[command(flatten)]
        persist: Persist,
    },
    /// Grow, prune and join a tree on a CSV dataset.
    Fit {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[command(flatten)]
        params: ParamFlags,
        #[command(flatten)]
        persist: Persist,
    },
    /// Assign new observations with a fitted tree.
    Predict {
        #[arg(long)]
        tree: Option<PathBuf>,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[command(flatten)]
        persist: Persist,
    },
    /// Compare CUBT and k-means over replicated simulations.
    Benchmark {
        #[command(flatten)]
        flags: BenchFlags,
        #[command(flatten)]
        persist: Persist,
    },
    /// Render a tree JSON file as Graphviz DOT.
    Export {
        #[arg(long)]
        tree: Option<PathBuf>,
        #[arg(long, short)]
        output: Option<PathBuf>,
        #[command(flatten)]
        persist: Persist,
    },
}

#[derive(Args)]
struct ParamFlags {
    #[arg(long)]
    minsize: Option<usize>,
    #[arg(long)]
    mindev: Option<f64>,
    #[arg(long)]
    mindist: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    eta_quantile: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    standardize: bool,
    /// Keep lowering mindev until the maximal tree has this many leaves.
    #[arg(long)]
    min_leaves: Option<usize>,
    /// Require both children of a split to hold at least minsize rows.
    #[arg(long)]
    min_child_size: bool,
}

impl ParamFlags {
    fn apply(&self, p: &mut Params) {
        if let Some(v) = self.minsize {
            p.minsize = v;
        }
        if let Some(v) = self.mindev {
            p.mindev = v;
        }
        if let Some(v) = self.mindist {
            p.mindist = v;
        }
        if let Some(v) = self.delta {
            p.delta = v;
        }
        if let Some(k) = self.k {
            p.k = Some(k);
            if self.eta_quantile.is_none() {
                p.eta_quantile = None;
            }
        }
        if let Some(q) = self.eta_quantile {
            p.eta_quantile = Some(q);
            if self.k.is_none() {
                p.k = None;
            }
        }
        if let Some(v) = self.seed {
            p.seed = v;
        }
        if let Some(v) = self.min_leaves {
            p.min_leaves = Some(v);
        }
        p.standardize |= self.standardize;
        p.min_child_size |= self.min_child_size;
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum GridChoice {
    /// minsize 5/10/15, mindev 0.7/0.9, mindist 0.3/0.5, delta 0.2/0.4/0.6
    Published,
    /// deeper trees for the quantile joining rule
    Desk,
}

#[derive(Args)]
struct BenchFlags {
    /// Models to run, each at all of its published noise levels.
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<Model>>,
    /// Restrict the noise levels (applies to models that have one).
    #[arg(long, value_delimiter = ',')]
    sigmas: Option<Vec<f64>>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    grid: Option<GridChoice>,
    #[arg(long, value_delimiter = ',')]
    minsize: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    mindev: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    mindist: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    delta: Option<Vec<f64>>,
    /// Subset of cubt_k, cubt_eta, kmeans, kmeans10.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long)]
    restarts: Option<usize>,
    #[arg(long)]
    per_group: Option<usize>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl BenchFlags {
    fn apply(self, c: &mut BenchmarkConfig) {
        if self.models.is_some() || self.sigmas.is_some() {
            let models = self.models.unwrap_or_else(|| {
                let mut m: Vec<Model> = c.scenarios.iter().map(|s| s.model).collect();
                m.dedup();
                m
            });
            c.scenarios = models
                .into_iter()
                .flat_map(|m| match (&self.sigmas, m.uses_sigma()) {
                    (Some(sig), true) => sig.iter().map(|&s| Scenario::new(m, Some(s))).collect(),
                    _ => Scenario::all_for(m),
                })
                .collect();
        }
        if let Some(g) = self.grid {
            c.grid = match g {
                GridChoice::Published => Grid::published(),
                GridChoice::Desk => Grid::desk(),
            };
        }
        if let Some(v) = self.minsize {
            c.grid.minsize = v;
        }
        if let Some(v) = self.mindev {
            c.grid.mindev = v;
        }
        if let Some(v) = self.mindist {
            c.grid.mindist = v;
        }
        if let Some(v) = self.delta {
            c.grid.delta = v;
        }
        if let Some(v) = self.replicates {
            c.replicates = v;
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.methods {
            c.methods = v;
        }
        if let Some(v) = self.restarts {
            c.kmeans_restarts = v;
        }
        if self.per_group.is_some() {
            c.per_group = self.per_group;
        }
        if self.out_dir.is_some() {
            c.out_dir = self.out_dir;
        }
    }
}

fn missing(flag: &str) -> CubtError {
    CubtError::InvalidParams(format!("--{flag} is required (or give it in --config)"))
}

fn wrong_kind(expected: &str) -> CubtError {
    CubtError::InvalidParams(format!("config file does not describe a `{expected}` run"))
}

/// Starting config: the file given with `--config`, if any.
fn base(persist: &Persist) -> Result<Option<RunConfig>, CubtError> {
    persist.config.as_ref().map(RunConfig::load).transpose()
}

fn build(command: Command) -> Result<(RunConfig, Option<PathBuf>), CubtError> {
    match command {
        Command::Generate {
            model,
            sigma,
            per_group,
            seed,
            output,
            persist,
        } => {
            let start = match base(&persist)? {
                Some(RunConfig::Generate(c)) => Some(c),
                Some(_) => return Err(wrong_kind("generate")),
                None => None,
            };
            let model = model
                .or(start.as_ref().map(|c| c.model))
                .ok_or_else(|| missing("model"))?;
            let output = output
                .or(start.as_ref().map(|c| c.output.clone()))
                .ok_or_else(|| missing("output"))?;
            let cfg = GenerateConfig {
                model,
                sigma: sigma.or(start.as_ref().and_then(|c| c.sigma)),
                per_group: per_group.or(start.as_ref().and_then(|c| c.per_group)),
                seed: seed.or(start.as_ref().map(|c| c.seed)).unwrap_or(0),
                output,
            };
            Ok((RunConfig::Generate(cfg), persist.save_config))
        }
        Command::Fit {
            data,
            out_dir,
            params,
            persist,
        } => {
            let start = match base(&persist)? {
                Some(RunConfig::Fit(c)) => Some(c),
                Some(_) => return Err(wrong_kind("fit")),
                None => None,
            };
            let mut p = start.as_ref().map(|c| c.params.clone()).unwrap_or_default();
            params.apply(&mut p);
            let cfg = FitConfig {
                data: data
                    .or(start.as_ref().map(|c| c.data.clone()))
                    .ok_or_else(|| missing("data"))?,
                out_dir: out_dir
                    .or(start.as_ref().map(|c| c.out_dir.clone()))
                    .ok_or_else(|| missing("out-dir"))?,
                params: p,
            };
            Ok((RunConfig::Fit(cfg), persist.save_config))
        }
        Command::Predict {
            tree,
            data,
            output,
            persist,
        } => {
            let start = match base(&persist)? {
                Some(RunConfig::Predict(c)) => Some(c),
                Some(_) => return Err(wrong_kind("predict")),
                None => None,
            };
            let cfg = PredictConfig {
                tree: tree
                    .or(start.as_ref().map(|c| c.tree.clone()))
                    .ok_or_else(|| missing("tree"))?,
                data: data
                    .or(start.as_ref().map(|c| c.data.clone()))
                    .ok_or_else(|| missing("data"))?,
                output: output.or(start.and_then(|c| c.output)),
            };
            Ok((RunConfig::Predict(cfg), persist.save_config))
        }
        Command::Benchmark { flags, persist } => {
            let mut cfg = match base(&persist)? {
                Some(RunConfig::Benchmark(c)) => c,
                Some(_) => return Err(wrong_kind("benchmark")),
                None => BenchmarkConfig::default(),
            };
            flags.apply(&mut cfg);
            Ok((RunConfig::Benchmark(cfg), persist.save_config))
        }
        Command::Export {
            tree,
            output,
            persist,
        } => {
            let start = match base(&persist)? {
                Some(RunConfig::Export(c)) => Some(c),
                Some(_) => return Err(wrong_kind("export")),
                None => None,
            };
            let cfg = ExportConfig {
                tree: tree
                    .or(start.as_ref().map(|c| c.tree.clone()))
                    .ok_or_else(|| missing("tree"))?,
                output: output.or(start.and_then(|c| c.output)),
            };
            Ok((RunConfig::Export(cfg), persist.save_config))
        }
    }
}

fn run(command: Command) -> Result<String, CubtError> {
    let (config, save) = build(command)?;
    if let Some(path) = save {
        config.save(path)?;
    }
    config.execute()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli.command) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_usage_error() {
                2
            } else if e.is_data_error() {
                3
            } else {
                4
            })
        }
    }
}
