//! The `gap` command line.
//!
//! Exit codes: 0 success, 2 usage, 3 data or compatibility, 4 numeric failure.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::checkpoint::Checkpoint;
use crate::config::{keep_from_dropout, parse_kv, preset, short_digest, write_kv};
use crate::error::GapError;
use crate::eval::{eval_clustering, link_prediction, EvalReport};
use crate::graph::{parse_edge_list_with_stats, parse_labels, read_manifest, split_edges, write_manifest, EdgeSplit, Graph, IdMap};
use crate::model::{MlpParams, ModelParams};
use crate::trainer::{format_log_line, grad_check, history_tsv, train_model, GradCheckConfig, OptimizerKind, TrainConfig};

pub const MANIFEST_FILE: &str = "split.manifest";
pub const TRAIN_EDGES_FILE: &str = "train.edges";
pub const IDMAP_FILE: &str = "nodes.idmap";
pub const CHECKPOINT_FILE: &str = "checkpoint.gap";
pub const HISTORY_FILE: &str = "history.tsv";
pub const REPORT_FILE: &str = "report.txt";
pub const RESOLVED_CONFIG_FILE: &str = "config.resolved";
pub const SWEEP_FILE: &str = "sweep.tsv";

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(String),
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric failure: {m}"),
        }
    }
}

impl From<GapError> for CliError {
    fn from(e: GapError) -> Self {
        match e {
            GapError::Argument(_) => CliError::Usage(e.to_string()),
            GapError::Numeric { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "gap", about = "Context-sensitive node embeddings by graph attentive pooling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split an edge list into train/valid/test partitions.
    Split(SplitArgs),
    /// Train a model on a split.
    Train(TrainArgs),
    /// Link-prediction AUC of a checkpoint on the split's test edges.
    EvalLp(EvalLpArgs),
    /// Spectral clustering NMI/AMI of a checkpoint's node embeddings.
    EvalCluster(EvalClusterArgs),
    /// Train and evaluate once per neighborhood length.
    Sweep(SweepArgs),
    /// Train the attentive model and the feed-forward ablation side by side.
    AblateMlp(TrainArgs),
    /// Finite-difference check of the analytic gradients.
    GradCheck(GradCheckArgs),
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    #[arg(long)]
    pub edges: PathBuf,
    /// Fraction of edges kept for training (train + validation).
    #[arg(long)]
    pub ratio: f64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Fraction of the kept edges held out for validation.
    #[arg(long, default_value_t = 0.05)]
    pub valid_fraction: f64,
    /// Treat each line as a directed edge instead of symmetrizing.
    #[arg(long)]
    pub directed: bool,
    #[arg(long)]
    pub out: PathBuf,
}

/// Training options; every one of them may also come from `--config`.
#[derive(Debug, Args, Clone, Default)]
pub struct TrainArgs {
    /// Split directory written by `gap split`.
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Flat "key = value" file; keys match these flag names.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset preset providing defaults: cora, email or zhihu.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub neighborhood: Option<usize>,
    /// Drop probability, converted to a keep probability internally.
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// adam or sgd.
    #[arg(long)]
    pub optimizer: Option<String>,
    /// gap or mlp.
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalLpArgs {
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalClusterArgs {
    #[arg(long)]
    pub split: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// "node community" lines.
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Comma-separated neighborhood lengths.
    #[arg(long)]
    pub values: String,
    /// auc or nmi.
    #[arg(long, default_value = "auc")]
    pub metric: String,
    /// Ground-truth communities, required for --metric nmi.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[command(flatten)]
    pub train: TrainArgs,
}

#[derive(Debug, Args)]
pub struct GradCheckArgs {
    #[arg(long, default_value_t = 20)]
    pub instances: u64,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

/// Which model family to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Gap,
    Mlp,
}

/// Every effective value of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub split: PathBuf,
    pub out: PathBuf,
    pub preset: String,
    pub dropout: f64,
    pub model: ModelKind,
    pub train: TrainConfig,
}

impl RunConfig {
    pub fn to_kv(&self) -> BTreeMap<String, String> {
        let t = &self.train;
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("split", self.split.display().to_string());
        put("out", self.out.display().to_string());
        put("preset", self.preset.clone());
        put("neighborhood", t.neighborhood.to_string());
        put("dropout", self.dropout.to_string());
        put("lr", t.learning_rate.to_string());
        put("dim", t.dim.to_string());
        put("batch-size", t.batch_size.to_string());
        put("epochs", t.max_epochs.to_string());
        put("patience", t.patience.to_string());
        put("seed", t.seed.to_string());
        put("optimizer", t.optimizer.to_string());
        put(
            "model",
            match self.model {
                ModelKind::Gap => "gap",
                ModelKind::Mlp => "mlp",
            }
            .to_string(),
        );
        m
    }

    /// Digest of the settings that determine the trained parameters (paths excluded).
    pub fn digest(&self) -> String {
        let mut kv = self.to_kv();
        kv.remove("out");
        kv.remove("split");
        short_digest(&write_kv(&kv))
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse_value<T: std::str::FromStr>(key: &str, v: &str) -> CliResult<T> {
    v.parse::<T>().map_err(|_| usage(format!("invalid value for {key}: {v:?}")))
}

/// Merges defaults, preset, config file and flags (in increasing priority).
pub fn resolve_run_config(args: &TrainArgs) -> CliResult<RunConfig> {
    let file: BTreeMap<String, String> = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read config {}: {e}", path.display())))?;
            parse_kv(&text).map_err(|e| usage(e.to_string()))?
        }
        None => BTreeMap::new(),
    };
    const KNOWN: &[&str] = &[
        "split", "out", "preset", "neighborhood", "dropout", "lr", "dim", "batch-size", "epochs", "patience", "seed",
        "optimizer", "model",
    ];
    if let Some(k) = file.keys().find(|k| !KNOWN.contains(&k.as_str())) {
        return Err(usage(format!("unknown config key {k:?}")));
    }
    let get = |key: &str| file.get(key).map(String::as_str);

    let preset_name = args
        .preset
        .clone()
        .or_else(|| get("preset").map(str::to_string))
        .unwrap_or_else(|| "cora".to_string());
    let p = preset(&preset_name).map_err(|e| usage(e.to_string()))?;

    macro_rules! pick {
        ($flag:expr, $key:literal, $default:expr) => {
            match ($flag, get($key)) {
                (Some(v), _) => v,
                (None, Some(s)) => parse_value($key, s)?,
                (None, None) => $default,
            }
        };
    }
    let defaults = TrainConfig::default();
    let dropout: f64 = pick!(args.dropout, "dropout", p.dropout);
    let optimizer: String = pick!(args.optimizer.clone(), "optimizer", "adam".to_string());
    let model: String = pick!(args.model.clone(), "model", "gap".to_string());
    let split: Option<PathBuf> = args.split.clone().or_else(|| get("split").map(PathBuf::from));
    let out: Option<PathBuf> = args.out.clone().or_else(|| get("out").map(PathBuf::from));

    let train = TrainConfig {
        neighborhood: pick!(args.neighborhood, "neighborhood", p.neighborhood),
        dim: pick!(args.dim, "dim", p.dim),
        dropout_keep: keep_from_dropout(dropout).map_err(|e| usage(e.to_string()))?,
        learning_rate: pick!(args.lr, "lr", p.learning_rate),
        batch_size: pick!(args.batch_size, "batch-size", defaults.batch_size),
        max_epochs: pick!(args.epochs, "epochs", defaults.max_epochs),
        patience: pick!(args.patience, "patience", defaults.patience),
        seed: pick!(args.seed, "seed", defaults.seed),
        optimizer: optimizer.parse::<OptimizerKind>().map_err(|e| usage(e.to_string()))?,
    };
    train.validate().map_err(|e| usage(e.to_string()))?;
    let model = match model.as_str() {
        "gap" => ModelKind::Gap,
        "mlp" => ModelKind::Mlp,
        other => return Err(usage(format!("unknown model {other:?}"))),
    };
    Ok(RunConfig {
        split: split.ok_or_else(|| usage("--split is required"))?,
        out: out.ok_or_else(|| usage("--out is required"))?,
        preset: preset_name,
        dropout,
        model,
        train,
    })
}

/// Writes `contents` via a temporary file and a rename.
pub fn write_atomic(path: &Path, contents: &str) -> CliResult<()> {
    let tmp = path.with_extension("tmp-write");
    fs::write(&tmp, contents)
        .and_then(|_| fs::rename(&tmp, path))
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn create_out_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))
}

fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

/// A split directory loaded from disk.
pub struct LoadedSplit {
    pub graph: Graph,
    pub split: EdgeSplit,
    pub id_map: IdMap,
}

pub fn load_split(dir: &Path) -> CliResult<LoadedSplit> {
    if !dir.is_dir() {
        return Err(usage(format!("split directory {} does not exist", dir.display())));
    }
    let id_map = IdMap::from_text(&read_text(&dir.join(IDMAP_FILE))?)?;
    let (graph, split) = read_manifest(&read_text(&dir.join(MANIFEST_FILE))?, &id_map)?;
    Ok(LoadedSplit { graph, split, id_map })
}

fn load_checkpoint(path: &Path, loaded: &LoadedSplit) -> CliResult<Checkpoint> {
    let ckpt = Checkpoint::from_text(&read_text(path)?)?;
    if ckpt.num_nodes() != loaded.graph.num_nodes() {
        return Err(CliError::Data(format!(
            "checkpoint covers {} nodes, split has {}",
            ckpt.num_nodes(),
            loaded.graph.num_nodes()
        )));
    }
    let idmap_path = path.parent().unwrap_or(Path::new(".")).join(IDMAP_FILE);
    let ck_map = IdMap::from_text(&read_text(&idmap_path)?)?;
    if ck_map.digest() != loaded.id_map.digest() {
        return Err(CliError::Data(format!(
            "id map digest of checkpoint ({}) differs from split ({})",
            &ck_map.digest()[..16],
            &loaded.id_map.digest()[..16]
        )));
    }
    Ok(ckpt)
}

pub fn cmd_split(args: &SplitArgs) -> CliResult<()> {
    if !(args.ratio > 0.0 && args.ratio <= 1.0) {
        return Err(usage(format!("--ratio must lie in (0, 1], got {}", args.ratio)));
    }
    let text = fs::read_to_string(&args.edges).map_err(|e| CliError::Data(format!("cannot read {}: {e}", args.edges.display())))?;
    let (g, stats) = parse_edge_list_with_stats(&text, args.directed)?;
    let split = split_edges(&g, args.ratio, args.valid_fraction, args.seed)?;
    create_out_dir(&args.out)?;
    write_atomic(&args.out.join(MANIFEST_FILE), &write_manifest(&g, &split))?;
    write_atomic(&args.out.join(TRAIN_EDGES_FILE), &split.train_graph.serialize())?;
    write_atomic(&args.out.join(IDMAP_FILE), &g.id_map().to_text())?;
    println!(
        "nodes {} edges {} train {} valid {} test {} (dropped {} self-loops, {} duplicates)",
        g.num_nodes(),
        g.num_edges(),
        split.train_edges.len(),
        split.valid_edges.len(),
        split.test_edges.len(),
        stats.self_loops,
        stats.duplicates
    );
    Ok(())
}

/// Outcome of one training run as the CLI reports it.
pub struct TrainedRun {
    pub checkpoint: Checkpoint,
    pub best_epoch: Option<usize>,
    pub best_valid_auc: f64,
}

fn log_epoch(r: &crate::trainer::EpochRecord) {
    eprintln!("{}", format_log_line(r));
}

/// Trains per `cfg` and writes checkpoint, history, resolved config and report under `cfg.out`.
pub fn run_training(cfg: &RunConfig, loaded: &LoadedSplit) -> CliResult<TrainedRun> {
    create_out_dir(&cfg.out)?;
    let n = loaded.graph.num_nodes();
    let t = &cfg.train;
    let (checkpoint, history, best_epoch) = match cfg.model {
        ModelKind::Gap => {
            let out = train_model(ModelParams::init(n, t.dim, t.seed)?, &loaded.split, t, log_epoch)?;
            (
                Checkpoint::Gap {
                    params: out.params,
                    neighborhood: t.neighborhood,
                },
                out.history,
                out.best_epoch,
            )
        }
        ModelKind::Mlp => {
            let out = train_model(MlpParams::init(n, t.dim, t.seed)?, &loaded.split, t, log_epoch)?;
            (
                Checkpoint::Mlp {
                    params: out.params,
                    neighborhood: t.neighborhood,
                },
                out.history,
                out.best_epoch,
            )
        }
    };
    let best_valid_auc = best_epoch
        .and_then(|e| history.iter().find(|r| r.epoch == e))
        .map_or(f64::NAN, |r| r.valid_auc);
    write_atomic(&cfg.out.join(CHECKPOINT_FILE), &checkpoint.to_text())?;
    write_atomic(&cfg.out.join(IDMAP_FILE), &loaded.id_map.to_text())?;
    write_atomic(&cfg.out.join(HISTORY_FILE), &history_tsv(&history))?;
    write_atomic(&cfg.out.join(RESOLVED_CONFIG_FILE), &write_kv(&cfg.to_kv()))?;
    let report = EvalReport::new("valid_auc", best_valid_auc, loaded.split.ratio, t.seed, &cfg.digest());
    write_atomic(&cfg.out.join(REPORT_FILE), &format!("{report}\n"))?;
    Ok(TrainedRun {
        checkpoint,
        best_epoch,
        best_valid_auc,
    })
}

pub fn cmd_train(args: &TrainArgs) -> CliResult<()> {
    let cfg = resolve_run_config(args)?;
    let loaded = load_split(&cfg.split)?;
    let run = run_training(&cfg, &loaded)?;
    println!(
        "best_epoch {} valid_auc {:?}",
        run.best_epoch.map_or("-".to_string(), |e| e.to_string()),
        run.best_valid_auc
    );
    Ok(())
}

fn checkpoint_auc(ckpt: &Checkpoint, split: &EdgeSplit, seed: u64) -> CliResult<f64> {
    let len = ckpt.neighborhood();
    let lp = match ckpt {
        Checkpoint::Gap { params, .. } => link_prediction(params, split, len, seed)?,
        Checkpoint::Mlp { params, .. } => link_prediction(params, split, len, seed)?,
    };
    Ok(lp.auc)
}

pub fn cmd_eval_lp(args: &EvalLpArgs) -> CliResult<()> {
    let loaded = load_split(&args.split)?;
    let ckpt = load_checkpoint(&args.checkpoint, &loaded)?;
    let value = checkpoint_auc(&ckpt, &loaded.split, args.seed)?;
    let digest = short_digest(&ckpt.to_text());
    let report = EvalReport::new("auc", value, loaded.split.ratio, args.seed, &digest);
    create_out_dir(&args.out)?;
    write_atomic(&args.out.join(REPORT_FILE), &format!("{report}\n"))?;
    println!("auc {value:?}");
    Ok(())
}

fn checkpoint_clustering(ckpt: &Checkpoint, loaded: &LoadedSplit, labels: &[Option<usize>], seed: u64) -> CliResult<(f64, f64)> {
    let g = &loaded.split.train_graph;
    let len = ckpt.neighborhood();
    let scores = match ckpt {
        Checkpoint::Gap { params, .. } => eval_clustering(params, g, labels, len, seed)?,
        Checkpoint::Mlp { params, .. } => eval_clustering(params, g, labels, len, seed)?,
    };
    Ok((scores.nmi, scores.ami))
}

fn load_labels(path: &Path, loaded: &LoadedSplit) -> CliResult<Vec<Option<usize>>> {
    Ok(parse_labels(&read_text(path)?, &loaded.id_map)?)
}

pub fn cmd_eval_cluster(args: &EvalClusterArgs) -> CliResult<()> {
    let loaded = load_split(&args.split)?;
    let ckpt = load_checkpoint(&args.checkpoint, &loaded)?;
    let labels = load_labels(&args.labels, &loaded)?;
    let (nmi, ami) = checkpoint_clustering(&ckpt, &loaded, &labels, args.seed)?;
    let digest = short_digest(&ckpt.to_text());
    let ratio = loaded.split.ratio;
    let lines = format!(
        "{}\n{}\n",
        EvalReport::new("nmi", nmi, ratio, args.seed, &digest),
        EvalReport::new("ami", ami, ratio, args.seed, &digest)
    );
    create_out_dir(&args.out)?;
    write_atomic(&args.out.join(REPORT_FILE), &lines)?;
    println!("nmi {nmi:?}\nami {ami:?}");
    Ok(())
}

pub fn parse_values(list: &str) -> CliResult<Vec<usize>> {
    let values: Vec<usize> = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value::<usize>("--values", s))
        .collect::<CliResult<_>>()?;
    if values.is_empty() {
        return Err(usage("--values must list at least one neighborhood length"));
    }
    Ok(values)
}

pub fn cmd_sweep(args: &SweepArgs) -> CliResult<()> {
    let values = parse_values(&args.values)?;
    if args.metric != "auc" && args.metric != "nmi" {
        return Err(usage(format!("--metric must be auc or nmi, got {:?}", args.metric)));
    }
    let base = resolve_run_config(&args.train)?;
    let loaded = load_split(&base.split)?;
    let labels = match (&args.metric[..], &args.labels) {
        ("nmi", Some(p)) => Some(load_labels(p, &loaded)?),
        ("nmi", None) => return Err(usage("--metric nmi requires --labels")),
        _ => None,
    };
    let mut tsv = String::from("param\tvalue\tmetric\tscore\n");
    for &len in &values {
        let mut cfg = base.clone();
        cfg.train.neighborhood = len;
        cfg.out = base.out.join(format!("neighborhood-{len}"));
        let run = run_training(&cfg, &loaded)?;
        let score = match &labels {
            Some(l) => checkpoint_clustering(&run.checkpoint, &loaded, l, cfg.train.seed)?.0,
            None => checkpoint_auc(&run.checkpoint, &loaded.split, cfg.train.seed)?,
        };
        println!("neighborhood {len} {} {score:?}", args.metric);
        tsv.push_str(&format!("neighborhood\t{len}\t{}\t{score}\n", args.metric));
    }
    write_atomic(&base.out.join(SWEEP_FILE), &tsv)?;
    Ok(())
}

pub fn cmd_ablate_mlp(args: &TrainArgs) -> CliResult<()> {
    let base = resolve_run_config(args)?;
    let loaded = load_split(&base.split)?;
    let mut results = Vec::new();
    for (kind, name) in [(ModelKind::Gap, "gap"), (ModelKind::Mlp, "mlp")] {
        let mut cfg = base.clone();
        cfg.model = kind;
        cfg.out = base.out.join(name);
        let run = run_training(&cfg, &loaded)?;
        let auc = checkpoint_auc(&run.checkpoint, &loaded.split, cfg.train.seed)?;
        results.push((name, auc, cfg.digest()));
    }
    let mut lines = String::new();
    for (name, auc, digest) in &results {
        let r = EvalReport::new(&format!("auc_{name}"), *auc, loaded.split.ratio, base.train.seed, digest);
        lines.push_str(&format!("{r}\n"));
        println!("{name}_auc {auc:?}");
    }
    println!("gap_minus_mlp {:?}", results[0].1 - results[1].1);
    write_atomic(&base.out.join(REPORT_FILE), &lines)?;
    Ok(())
}

pub fn cmd_grad_check(args: &GradCheckArgs) -> CliResult<()> {
    let cfg = GradCheckConfig::default();
    let mut worst = 0.0f64;
    for i in 0..args.instances {
        let report = grad_check(&cfg, args.seed.wrapping_add(i))?;
        worst = worst.max(report.max_rel_error);
        if !report.passed {
            return Err(CliError::Numeric(format!("gradient check failed on instance {i}: {report:?}")));
        }
    }
    println!("max_rel_error {worst:e} over {} instances", args.instances);
    Ok(())
}

pub fn run(cli: Cli) -> CliResult<()> {
    match &cli.command {
        Command::Split(a) => cmd_split(a),
        Command::Train(a) => cmd_train(a),
        Command::EvalLp(a) => cmd_eval_lp(a),
        Command::EvalCluster(a) => cmd_eval_cluster(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::AblateMlp(a) => cmd_ablate_mlp(a),
        Command::GradCheck(a) => cmd_grad_check(a),
    }
}

pub fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gap: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
