//! Multi-seed sweeps: split, train and evaluate every (cell, seed) and write
//! per-run reports, an aggregate table and trade-off plot data.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalOptions, EvalReport};
use crate::fairness::Criterion;
use crate::graph::{load_edge_list, split, Dataset};
use crate::models::{Checkpoint, ModelKind};
use crate::optim::OptimizerKind;
use crate::synth::{sbm, SbmParams};
use crate::training::{train, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "type")]
pub enum DataSource {
    Files {
        edges: PathBuf,
        attrs: PathBuf,
        #[serde(default)]
        bipartite: bool,
    },
    Synth(SbmParams),
}

impl DataSource {
    pub fn load(&self) -> Result<Dataset> {
        match self {
            DataSource::Files {
                edges,
                attrs,
                bipartite,
            } => load_edge_list(edges, attrs, *bipartite),
            DataSource::Synth(p) => sbm(p),
        }
    }
}

/// One model/criterion/strength combination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub model: ModelKind,
    #[serde(default = "no_criterion")]
    pub criterion: Criterion,
    #[serde(default)]
    pub gamma: f64,
}

fn no_criterion() -> Criterion {
    Criterion::None
}

impl Cell {
    /// Row label in reports, e.g. `cne` or `cne (DP, gamma=100)`.
    pub fn label(&self) -> String {
        if self.criterion == Criterion::None {
            self.model.to_string()
        } else {
            format!(
                "{} ({}, gamma={})",
                self.model,
                self.criterion.to_string().to_uppercase(),
                self.gamma
            )
        }
    }

    fn file_stem(&self) -> String {
        if self.criterion == Criterion::None {
            self.model.to_string()
        } else {
            format!("{}_{}_g{}", self.model, self.criterion, self.gamma)
        }
    }
}

/// Optional overrides applied on top of each cell's model defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOverrides {
    pub epochs: Option<usize>,
    pub lr: Option<f64>,
    pub optimizer: Option<OptimizerKind>,
    pub dim: Option<usize>,
    pub s1: Option<f64>,
    pub s2: Option<f64>,
    pub maxent_iters: Option<usize>,
    pub inner_tol: Option<f64>,
    pub inner_max_iters: Option<usize>,
    pub inner_subsample: Option<f64>,
    pub negative_rate: Option<f64>,
    pub differentiate_targets: Option<bool>,
}

impl TrainOverrides {
    pub fn resolve(&self, cell: &Cell, seed: u64) -> TrainConfig {
        let mut c = TrainConfig::for_model(cell.model).with_criterion(cell.criterion, cell.gamma);
        c.seed = seed;
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { c.$f = v; } )* };
        }
        set!(epochs, lr, optimizer, dim, s1, s2, maxent_iters, inner_tol, inner_max_iters, differentiate_targets);
        if self.inner_subsample.is_some() {
            c.inner_subsample = self.inner_subsample;
        }
        if self.negative_rate.is_some() {
            c.negative_rate = self.negative_rate;
        }
        c
    }
}

fn default_seeds() -> Vec<u64> {
    (0..10).collect()
}

fn default_test_frac() -> f64 {
    0.2
}

fn default_jobs() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    /// Dataset name used in report rows.
    pub dataset: String,
    pub source: DataSource,
    pub cells: Vec<Cell>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_test_frac")]
    pub test_frac: f64,
    pub out: PathBuf,
    #[serde(default)]
    pub train: TrainOverrides,
    #[serde(default)]
    pub eo_threshold: Option<f64>,
    /// Maximum number of seeds of one cell running at once.
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    /// Also write each trained model as a JSON checkpoint.
    #[serde(default)]
    pub save_models: bool,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.cells.is_empty() {
            return Err(Error::Config("experiment needs at least one cell".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("experiment needs at least one seed".into()));
        }
        if !(self.test_frac > 0.0 && self.test_frac < 1.0) {
            return Err(Error::Config(format!("test fraction {} not in (0, 1)", self.test_frac)));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be >= 1".into()));
        }
        for cell in &self.cells {
            self.train.resolve(cell, 0).validate()?;
        }
        Ok(())
    }
}

/// Everything needed to reproduce and inspect one (cell, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub method: String,
    pub dataset: String,
    pub seed: u64,
    pub test_frac: f64,
    pub source: DataSource,
    pub config: TrainConfig,
    pub eval: EvalReport,
    pub final_loss_f: f64,
    pub train_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub method: String,
    pub seed: u64,
    pub error: String,
}

/// Mean and sample standard deviation of each measure over a cell's runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: String,
    pub dataset: String,
    pub runs: usize,
    pub failed: usize,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub dp_mean: f64,
    pub dp_std: f64,
    pub eo_mean: f64,
    pub eo_std: f64,
    pub rdp_mean: f64,
    pub rdp_std: f64,
    pub rb_mean: Option<f64>,
    pub rb_std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub method: String,
    pub model: ModelKind,
    pub criterion: Criterion,
    pub gamma: f64,
    /// DP measure, or EO for EO-regularized cells.
    pub unfairness: f64,
    pub auc: f64,
    pub std_x: f64,
    pub std_y: f64,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutcome {
    pub runs: Vec<RunReport>,
    pub failures: Vec<RunFailure>,
    pub summaries: Vec<CellSummary>,
}

/// `(mean, sample std)`; the std of a single value is 0.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Splits, trains and evaluates a single run.
#[allow(clippy::too_many_arguments)]
pub fn run_one(
    data: &Dataset,
    dataset: &str,
    source: &DataSource,
    cell: &Cell,
    seed: u64,
    test_frac: f64,
    overrides: &TrainOverrides,
    eo_threshold: Option<f64>,
) -> Result<(RunReport, crate::training::TrainOutcome)> {
    let config = overrides.resolve(cell, seed);
    let data_split = split(&data.graph, test_frac, seed)?;
    let start = Instant::now();
    let outcome = train(&data_split.train_graph, &data.partition, &config)?;
    let train_seconds = start.elapsed().as_secs_f64();
    let eval = evaluate(
        &outcome.model,
        &data_split,
        &data.graph,
        &data.partition,
        &EvalOptions { seed, eo_threshold },
    )?;
    let report = RunReport {
        method: cell.label(),
        dataset: dataset.to_string(),
        seed,
        test_frac,
        source: source.clone(),
        config,
        eval,
        final_loss_f: outcome.trace.records.last().map_or(0.0, |r| r.loss_f),
        train_seconds,
    };
    Ok((report, outcome))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Runs every cell over every seed. Individual run failures are recorded and
/// the sweep continues; configuration and I/O problems abort.
pub fn run(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    spec.validate()?;
    let data = spec.source.load()?;
    let runs_dir = spec.out.join("runs");
    fs::create_dir_all(&runs_dir).map_err(|e| Error::io(&runs_dir, e))?;
    write_json(&spec.out.join("spec.json"), spec)?;
    let nodes_path = spec.out.join("nodes.csv");
    let mut nodes = csv::WriterBuilder::new().has_headers(false).from_path(&nodes_path)?;
    for (v, id) in data.node_ids.iter().enumerate() {
        nodes.write_record([v.to_string().as_str(), id, &data.partition.labels()[data.partition.group_of(v)]])?;
    }
    nodes.flush().map_err(|e| Error::io(&nodes_path, e))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(spec.jobs)
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;

    let mut outcome = ExperimentOutcome::default();
    let mut plot_rows = Vec::new();
    for cell in &spec.cells {
        log::info!("cell {} over {} seed(s)", cell.label(), spec.seeds.len());
        let results: Vec<Result<RunReport>> = pool.install(|| {
            spec.seeds
                .par_iter()
                .map(|&seed| {
                    let (report, trained) = run_one(
                        &data,
                        &spec.dataset,
                        &spec.source,
                        cell,
                        seed,
                        spec.test_frac,
                        &spec.train,
                        spec.eo_threshold,
                    )?;
                    let stem = runs_dir.join(format!("{}_seed{seed}", cell.file_stem()));
                    write_json(&stem.with_extension("json"), &report)?;
                    trained.trace.write_csv(&PathBuf::from(format!("{}_trace.csv", stem.display())))?;
                    if spec.save_models {
                        let ckpt = Checkpoint {
                            model: trained.model,
                            seed,
                            config: serde_json::to_value(&report.config)?,
                        };
                        let path = PathBuf::from(format!("{}_model.json", stem.display()));
                        fs::write(&path, ckpt.to_json()?).map_err(|e| Error::io(&path, e))?;
                    }
                    Ok(report)
                })
                .collect()
        });

        let mut cell_runs = Vec::new();
        let mut failed = 0;
        for (&seed, r) in spec.seeds.iter().zip(results) {
            match r {
                Ok(report) => cell_runs.push(report),
                Err(e) => {
                    log::error!("{} seed {seed} failed: {e}", cell.label());
                    failed += 1;
                    outcome.failures.push(RunFailure {
                        method: cell.label(),
                        seed,
                        error: e.to_string(),
                    });
                }
            }
        }
        let summary = summarize(cell, &spec.dataset, &cell_runs, failed);
        plot_rows.push(plot_row(cell, &cell_runs));
        outcome.summaries.push(summary);
        outcome.runs.extend(cell_runs);
    }

    let mut per_run = csv::Writer::from_path(spec.out.join("runs.csv"))?;
    per_run.write_record(["method", "dataset", "seed", "auc", "dp", "eo", "rdp", "rb"])?;
    for r in &outcome.runs {
        per_run.write_record([
            r.method.clone(),
            r.dataset.clone(),
            r.seed.to_string(),
            r.eval.auc.to_string(),
            r.eval.dp.to_string(),
            r.eval.eo.to_string(),
            r.eval.rdp.to_string(),
            r.eval.rb.map_or(String::new(), |v| v.to_string()),
        ])?;
    }
    per_run.flush().map_err(|e| Error::io(&spec.out, e))?;

    let mut agg = csv::Writer::from_path(spec.out.join("aggregate.csv"))?;
    for s in &outcome.summaries {
        agg.serialize(s)?;
    }
    agg.flush().map_err(|e| Error::io(&spec.out, e))?;

    let mut plot = csv::Writer::from_path(spec.out.join("plot.csv"))?;
    for row in plot_rows.into_iter().flatten() {
        plot.serialize(row)?;
    }
    plot.flush().map_err(|e| Error::io(&spec.out, e))?;

    if !outcome.failures.is_empty() {
        write_json(&spec.out.join("failures.json"), &outcome.failures)?;
    }
    Ok(outcome)
}

pub fn summarize(cell: &Cell, dataset: &str, runs: &[RunReport], failed: usize) -> CellSummary {
    let col = |f: fn(&EvalReport) -> f64| -> (f64, f64) {
        mean_std(&runs.iter().map(|r| f(&r.eval)).collect::<Vec<_>>())
    };
    let (auc_mean, auc_std) = col(|e| e.auc);
    let (dp_mean, dp_std) = col(|e| e.dp);
    let (eo_mean, eo_std) = col(|e| e.eo);
    let (rdp_mean, rdp_std) = col(|e| e.rdp);
    let rb: Vec<f64> = runs.iter().filter_map(|r| r.eval.rb).collect();
    let (rb_mean, rb_std) = if rb.is_empty() {
        (None, None)
    } else {
        let (m, s) = mean_std(&rb);
        (Some(m), Some(s))
    };
    CellSummary {
        method: cell.label(),
        dataset: dataset.to_string(),
        runs: runs.len(),
        failed,
        auc_mean,
        auc_std,
        dp_mean,
        dp_std,
        eo_mean,
        eo_std,
        rdp_mean,
        rdp_std,
        rb_mean,
        rb_std,
    }
}

fn plot_row(cell: &Cell, runs: &[RunReport]) -> Option<PlotRow> {
    if runs.is_empty() {
        return None;
    }
    let unfair: Vec<f64> = runs
        .iter()
        .map(|r| if cell.criterion == Criterion::Eo { r.eval.eo } else { r.eval.dp })
        .collect();
    let aucs: Vec<f64> = runs.iter().map(|r| r.eval.auc).collect();
    let (unfairness, std_x) = mean_std(&unfair);
    let (auc, std_y) = mean_std(&aucs);
    Some(PlotRow {
        method: cell.label(),
        model: cell.model,
        criterion: cell.criterion,
        gamma: cell.gamma,
        unfairness,
        auc,
        std_x,
        std_y,
    })
}
