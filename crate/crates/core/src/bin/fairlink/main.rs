mod convert;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Map, Value};

use fairlink::experiment::{self, ExperimentSpec};
use fairlink::graph::{format_attributes, format_edge_list, load_edge_list};
use fairlink::models::Checkpoint;
use fairlink::synth::{sbm, SbmParams};
use fairlink::{train, Criterion, Error, ModelKind, Result, TrainConfig};

#[derive(Parser)]
#[command(name = "fairlink", version, about = "Fair link prediction experiments")]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a stochastic block model graph.
    Synth(SynthArgs),
    /// Convert the Polblogs GML file.
    ConvertPolblogs {
        #[arg(long)]
        gml: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert MovieLens 100k (u.data + u.user) to a bipartite graph.
    ConvertMl100k {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        users: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert a directory of SNAP Facebook ego-network files.
    ConvertFacebook {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model on a whole graph and write a checkpoint.
    Train(TrainArgs),
    /// Run a multi-seed experiment sweep.
    Run(RunArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 200)]
    nodes: usize,
    #[arg(long, default_value_t = 2)]
    groups: usize,
    #[arg(long, default_value_t = 0.2)]
    p_intra: f64,
    #[arg(long, default_value_t = 0.02)]
    p_inter: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for edges.txt and attrs.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    edges: Option<PathBuf>,
    #[arg(long)]
    attrs: Option<PathBuf>,
    #[arg(long)]
    bipartite: bool,
}

/// Flags shared by `train` and `run` that map onto training settings.
#[derive(Args)]
struct TuneArgs {
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    inner_tol: Option<f64>,
    /// JSON config file; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    tune: TuneArgs,
    #[arg(long)]
    model: Option<ModelKind>,
    #[arg(long)]
    fairness: Option<Criterion>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    tune: TuneArgs,
    /// Name used in report rows.
    #[arg(long)]
    dataset: Option<String>,
    /// Model kinds; cells are the product of models, criteria and gammas.
    #[arg(long, value_delimiter = ',')]
    model: Vec<ModelKind>,
    #[arg(long, value_delimiter = ',')]
    fairness: Vec<Criterion>,
    #[arg(long, value_delimiter = ',')]
    gamma: Vec<f64>,
    /// Seeds as a list (`0,1,2`) or half-open range (`0..10`).
    #[arg(long, value_parser = parse_seeds)]
    seeds: Option<Seeds>,
    #[arg(long)]
    test_frac: Option<f64>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Use TPR at this threshold for EO instead of the mean score.
    #[arg(long)]
    eo_threshold: Option<f64>,
    #[arg(long)]
    save_models: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
struct Seeds(Vec<u64>);

fn parse_seeds(s: &str) -> std::result::Result<Seeds, String> {
    if let Some((a, b)) = s.split_once("..") {
        let a: u64 = a.trim().parse().map_err(|_| format!("bad range start `{a}`"))?;
        let b: u64 = b.trim().parse().map_err(|_| format!("bad range end `{b}`"))?;
        return Ok(Seeds((a..b).collect()));
    }
    s.split(',')
        .map(|t| t.trim().parse().map_err(|_| format!("bad seed `{t}`")))
        .collect::<std::result::Result<_, _>>()
        .map(Seeds)
}

fn read_config(path: Option<&Path>) -> Result<Map<String, Value>> {
    let Some(path) = path else { return Ok(Map::new()) };
    let text = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    match serde_json::from_str(&text)? {
        Value::Object(m) => Ok(m),
        _ => Err(Error::Config(format!("{} is not a JSON object", path.display()))),
    }
}

fn set<T: serde::Serialize>(map: &mut Map<String, Value>, key: &str, value: Option<T>) {
    if let Some(v) = value {
        map.insert(key.to_string(), json!(v));
    }
}

fn apply_tune(map: &mut Map<String, Value>, tune: &TuneArgs) {
    set(map, "epochs", tune.epochs);
    set(map, "lr", tune.lr);
    set(map, "dim", tune.dim);
    set(map, "inner_tol", tune.inner_tol);
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn cmd_synth(a: &SynthArgs) -> Result<()> {
    let d = sbm(&SbmParams {
        nodes: a.nodes,
        groups: a.groups,
        p_intra: a.p_intra,
        p_inter: a.p_inter,
        seed: a.seed,
    })?;
    create_dir(&a.out)?;
    write_file(&a.out.join("edges.txt"), &format_edge_list(&d.graph, &d.node_ids))?;
    write_file(&a.out.join("attrs.csv"), &format_attributes(&d.partition, &d.node_ids))?;
    println!("{} nodes, {} edges", d.graph.node_count(), d.graph.edge_count());
    Ok(())
}

fn cmd_convert(c: convert::Converted, out: &Path) -> Result<()> {
    c.write(out)?;
    let s = convert::summary(&c);
    println!("{} nodes, {} edges, {} groups", s["nodes"], s["edges"], s["groups"]);
    Ok(())
}

fn require_data(d: &DataArgs) -> Result<(PathBuf, PathBuf)> {
    match (&d.edges, &d.attrs) {
        (Some(e), Some(a)) => Ok((e.clone(), a.clone())),
        _ => Err(Error::Config("both --edges and --attrs are required".into())),
    }
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let mut map = read_config(a.tune.config.as_deref())?;
    set(&mut map, "model", a.model);
    set(&mut map, "criterion", a.fairness);
    set(&mut map, "gamma", a.gamma);
    set(&mut map, "seed", a.seed);
    apply_tune(&mut map, &a.tune);
    let config = TrainConfig::from_partial_json(Value::Object(map))?;

    let (edges, attrs) = require_data(&a.data)?;
    let data = load_edge_list(&edges, &attrs, a.data.bipartite)?;
    let outcome = train(&data.graph, &data.partition, &config)?;
    create_dir(&a.out)?;
    outcome.trace.write_csv(&a.out.join("trace.csv"))?;
    let ckpt = Checkpoint {
        model: outcome.model,
        seed: config.seed,
        config: serde_json::to_value(&config)?,
    };
    write_file(&a.out.join("model.json"), &ckpt.to_json()?)?;
    if let Some(last) = outcome.trace.records.last() {
        println!(
            "epoch {}: L_A={:.6} L_F={:.6e} L={:.6}",
            last.epoch, last.loss_a, last.loss_f, last.loss
        );
    }
    Ok(())
}

fn cmd_run(a: &RunArgs) -> Result<bool> {
    let mut map = read_config(a.tune.config.as_deref())?;
    if let (Some(e), Some(at)) = (&a.data.edges, &a.data.attrs) {
        map.insert(
            "source".into(),
            json!({"type": "files", "edges": e, "attrs": at, "bipartite": a.data.bipartite}),
        );
    } else if a.data.edges.is_some() || a.data.attrs.is_some() {
        return Err(Error::Config("--edges and --attrs must be given together".into()));
    }
    if !map.contains_key("dataset") || a.dataset.is_some() {
        let name = a.dataset.clone().or_else(|| {
            a.data
                .edges
                .as_ref()
                .and_then(|p| p.parent())
                .and_then(|p| p.file_name())
                .map(|s| s.to_string_lossy().into_owned())
        });
        map.insert("dataset".into(), json!(name.unwrap_or_else(|| "dataset".into())));
    }
    if !a.model.is_empty() || !a.fairness.is_empty() || !a.gamma.is_empty() {
        let models = if a.model.is_empty() { vec![ModelKind::Cne] } else { a.model.clone() };
        let criteria = if a.fairness.is_empty() { vec![Criterion::None] } else { a.fairness.clone() };
        let gammas = if a.gamma.is_empty() { vec![100.0] } else { a.gamma.clone() };
        let mut cells = Vec::new();
        for &m in &models {
            for &c in &criteria {
                if c == Criterion::None {
                    cells.push(json!({"model": m, "criterion": c, "gamma": 0.0}));
                    continue;
                }
                for &g in &gammas {
                    cells.push(json!({"model": m, "criterion": c, "gamma": g}));
                }
            }
        }
        map.insert("cells".into(), Value::Array(cells));
    }
    set(&mut map, "seeds", a.seeds.as_ref().map(|s| s.0.clone()));
    set(&mut map, "test_frac", a.test_frac);
    set(&mut map, "jobs", a.jobs);
    set(&mut map, "eo_threshold", a.eo_threshold);
    set(&mut map, "out", a.out.clone());
    if a.save_models {
        map.insert("save_models".into(), json!(true));
    }
    let mut train = match map.remove("train") {
        Some(Value::Object(t)) => t,
        _ => Map::new(),
    };
    apply_tune(&mut train, &a.tune);
    map.insert("train".into(), Value::Object(train));

    let spec: ExperimentSpec = serde_json::from_value(Value::Object(map))
        .map_err(|e| Error::Config(format!("invalid experiment spec: {e}")))?;
    let outcome = experiment::run(&spec)?;
    for s in &outcome.summaries {
        let rb = s
            .rb_mean
            .map_or("/".to_string(), |m| format!("{m:.3} ± {:.4}", s.rb_std.unwrap_or(0.0)));
        println!(
            "{:<28} runs={} failed={} auc={:.3} ± {:.4} dp={:.3} ± {:.4} eo={:.3} ± {:.4} rdp={:.3} rb={rb}",
            s.method, s.runs, s.failed, s.auc_mean, s.auc_std, s.dp_mean, s.dp_std, s.eo_mean, s.eo_std, s.rdp_mean
        );
    }
    Ok(outcome.failures.is_empty())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a).map(|_| true),
        Command::ConvertPolblogs { gml, out } => convert::polblogs(gml).and_then(|c| cmd_convert(c, out)).map(|_| true),
        Command::ConvertMl100k { data, users, out } => {
            convert::ml100k(data, users).and_then(|c| cmd_convert(c, out)).map(|_| true)
        }
        Command::ConvertFacebook { dir, out } => convert::facebook(dir).and_then(|c| cmd_convert(c, out)).map(|_| true),
        Command::Train(a) => cmd_train(a).map(|_| true),
        Command::Run(a) => cmd_run(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e @ Error::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
