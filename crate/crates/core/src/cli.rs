//! The `dnl` command line.
//!
//! Every subcommand writes its outputs to files and echoes the fully resolved
//! flags to a `run_config.json` next to them. Exit codes: 0 success,
//! 1 runtime failure, 2 usage error.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::eval::{emit_comparison, ErrorReport};
use crate::fingerprint::{load_dataset_dir, load_scans, split_dataset, DatasetSplit, SPLIT_FILE};
use crate::model::{self, load_checkpoint, save_checkpoint, write_training_log, DnlModel, TrainingConfig, TrainingData};
use crate::neighborhood::DEFAULT_K;
use crate::pipeline::{floor_splits, model_predictions, run_baselines, FloorSplit};
use crate::synth::{generate, write_radio_map, Layout, RadioMapConfig};

pub const RUN_CONFIG_FILE: &str = "run_config.json";
pub const PREDICTIONS_FILE: &str = "predictions.csv";

#[derive(Debug, Parser)]
#[command(name = "dnl", version, about = "WiFi fingerprint positioning with neighborhood graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic radio map.
    Synth(SynthArgs),
    /// Write a seeded 6:2:2 train/validation/test split.
    Split(SplitArgs),
    /// Evaluate KNN and WKNN on the test split.
    Baseline(BaselineArgs),
    /// Train one model per floor.
    Train(TrainArgs),
    /// Evaluate trained models on the test split.
    Evaluate(EvaluateArgs),
    /// Locate unlabeled scans with a trained model.
    Predict(PredictArgs),
}

fn positive_usize(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(v) => Ok(v),
        Err(e) => Err(e.to_string()),
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SynthArgs {
    /// Number of fingerprints.
    #[arg(long, default_value_t = 2000, value_parser = positive_usize)]
    pub fps: usize,
    /// Number of access points.
    #[arg(long, default_value_t = 60, value_parser = positive_usize)]
    pub waps: usize,
    /// Floor width in meters.
    #[arg(long, default_value_t = 100.0)]
    pub width: f64,
    /// Floor height in meters.
    #[arg(long, default_value_t = 80.0)]
    pub height: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Shadowing standard deviation in dB.
    #[arg(long, default_value_t = 4.0)]
    pub sigma: f64,
    /// Path-loss exponent.
    #[arg(long, default_value_t = 3.0)]
    pub eta: f64,
    /// RSS at 1 m in dBm.
    #[arg(long, default_value_t = -30.0, allow_hyphen_values = true)]
    pub p0: f64,
    /// Detection threshold in dBm.
    #[arg(long, default_value_t = -95.0, allow_hyphen_values = true)]
    pub threshold: f64,
    /// Floor label written to every fingerprint.
    #[arg(long, default_value_t = 1, allow_hyphen_values = true)]
    pub floor: i32,
    /// Place fingerprints on a grid instead of uniformly.
    #[arg(long)]
    pub grid: bool,
    /// Output directory.
    #[arg(short = 'o', long = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SplitArgs {
    /// Dataset directory.
    #[arg(short = 'i', long = "input")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output file, default `<input>/split.json`.
    #[arg(short = 'o', long = "out")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct BaselineArgs {
    #[arg(short = 'i', long = "input")]
    pub input: PathBuf,
    /// Split file, default `<input>/split.json`.
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_K, value_parser = positive_usize)]
    pub k: usize,
    /// Report directory, default the input directory.
    #[arg(short = 'o', long = "out-dir")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainArgs {
    #[arg(short = 'i', long = "input")]
    pub input: PathBuf,
    #[arg(long)]
    pub split: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Checkpoint path, default `<input>/model.json`. Datasets with several
    /// floors get one `<stem>.floor<F>.json` per floor.
    #[arg(short = 'o', long = "out")]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_K, value_parser = positive_usize)]
    pub k: usize,
    #[arg(long, default_value_t = 100, value_parser = positive_usize)]
    pub epochs: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [64, 128, 256], value_parser = positive_usize)]
    pub batch_sizes: Vec<usize>,
    /// Batch-size runs trained concurrently.
    #[arg(long, default_value_t = 1, value_parser = positive_usize)]
    pub jobs: usize,
    /// Write every training and validation graph as JSON into this directory.
    #[arg(long)]
    pub dump_graphs: Option<PathBuf>,
    /// Suppress per-epoch lines on stderr.
    #[arg(long)]
    #[serde(skip)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    #[arg(short = 'i', long = "input")]
    pub input: PathBuf,
    #[arg(long)]
    pub split: Option<PathBuf>,
    /// Checkpoint given to `train -o`.
    #[arg(long)]
    pub model: PathBuf,
    /// Also report KNN and WKNN.
    #[arg(long)]
    pub baselines: bool,
    #[arg(short = 'o', long = "out-dir")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Scans in the observations format `fp_id,mac,rss_dbm`.
    #[arg(long)]
    pub scans: PathBuf,
    /// Output CSV, default `predictions.csv` next to the scans.
    #[arg(short = 'o', long = "out")]
    pub out: Option<PathBuf>,
}

/// Parses the process arguments and runs; returns the exit code.
pub fn main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::Split(a) => split(a),
        Command::Baseline(a) => baseline(a),
        Command::Train(a) => train(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Predict(a) => predict(a),
    }
}

#[derive(Serialize)]
struct RunConfig<'a, T: Serialize> {
    subcommand: &'a str,
    version: &'a str,
    #[serde(flatten)]
    args: &'a T,
}

fn write_run_config<T: Serialize>(dir: &Path, subcommand: &str, args: &T) -> Result<()> {
    let rc = RunConfig {
        subcommand,
        version: env!("CARGO_PKG_VERSION"),
        args,
    };
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(RUN_CONFIG_FILE);
    let text = serde_json::to_string_pretty(&rc)? + "\n";
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

fn parent_dir(path: &Path) -> PathBuf {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    }
}

fn split_path(input: &Path, split: &Option<PathBuf>) -> PathBuf {
    split.clone().unwrap_or_else(|| input.join(SPLIT_FILE))
}

/// Checkpoint path for `floor`: `path` itself for single-floor datasets,
/// otherwise `<stem>.floor<F>.json` beside it.
pub fn floor_checkpoint_path(path: &Path, floor: i32, multi_floor: bool) -> PathBuf {
    if !multi_floor {
        return path.to_path_buf();
    }
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    path.with_file_name(format!("{stem}.floor{floor}.json"))
}

/// Training log path beside a checkpoint: `<stem>.log.csv`.
pub fn training_log_path(checkpoint: &Path) -> PathBuf {
    let stem = checkpoint.file_stem().and_then(|s| s.to_str()).unwrap_or("model");
    checkpoint.with_file_name(format!("{stem}.log.csv"))
}

fn synth(a: SynthArgs) -> Result<()> {
    let cfg = RadioMapConfig {
        width: a.width,
        height: a.height,
        n_waps: a.waps,
        n_fps: a.fps,
        tx_power_dbm: a.p0,
        path_loss_exponent: a.eta,
        shadowing_std: a.sigma,
        detection_threshold_dbm: a.threshold,
        floor: a.floor,
        layout: if a.grid { Layout::Grid } else { Layout::Uniform },
        seed: a.seed,
    };
    let map = generate(&cfg)?;
    write_radio_map(&map, &a.out)?;
    write_run_config(&a.out, "synth", &a)
}

fn split(mut a: SplitArgs) -> Result<()> {
    let fps = load_dataset_dir(&a.input)?;
    let s = split_dataset(&fps, a.seed)?;
    let out = a.out.clone().unwrap_or_else(|| a.input.join(SPLIT_FILE));
    s.save(&out)?;
    a.out = Some(out.clone());
    write_run_config(&parent_dir(&out), "split", &a)
}

fn load_floors(input: &Path, split: &Path) -> Result<(Vec<crate::fingerprint::Fingerprint>, DatasetSplit)> {
    let fps = load_dataset_dir(input)?;
    let s = DatasetSplit::load(split)?;
    Ok((fps, s))
}

fn baseline(mut a: BaselineArgs) -> Result<()> {
    let split = split_path(&a.input, &a.split);
    let (fps, s) = load_floors(&a.input, &split)?;
    let floors = floor_splits(&fps, &s)?;
    let reports = run_baselines(&floors, a.k)?;
    let out_dir = a.out_dir.clone().unwrap_or_else(|| a.input.clone());
    emit_comparison(&reports, &out_dir, &[])?;
    a.split = Some(split);
    a.out_dir = Some(out_dir.clone());
    write_run_config(&out_dir, "baseline", &a)
}

fn dump_graphs(data: &TrainingData, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let sets = [("train", &data.train_graphs), ("validation", &data.val_graphs)];
    for (name, graphs) in sets {
        for g in graphs {
            let id = g.fp_nodes[0].fp_id;
            g.write_json(dir.join(format!("{name}_{id}.json")))?;
        }
    }
    Ok(())
}

fn train_floor(f: &FloorSplit<'_>, a: &TrainArgs, cfg: &TrainingConfig, path: &Path) -> Result<()> {
    if f.validation.is_empty() {
        return Err(Error::contract(format!("floor {} has no validation fingerprints", f.floor)));
    }
    let data = TrainingData::build(&f.train, &f.validation, cfg.k)?;
    if let Some(dir) = &a.dump_graphs {
        dump_graphs(&data, dir)?;
    }
    let outcome = model::fit(&data, cfg)?;
    for (bs, reason) in &outcome.failed_runs {
        eprintln!("floor {}: batch size {bs} aborted: {reason}", f.floor);
    }
    if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    save_checkpoint(&outcome.model, path)?;
    write_training_log(&outcome.log, training_log_path(path))
}

fn train(mut a: TrainArgs) -> Result<()> {
    let split = split_path(&a.input, &a.split);
    let (fps, s) = load_floors(&a.input, &split)?;
    let floors = floor_splits(&fps, &s)?;
    let out = a.out.clone().unwrap_or_else(|| a.input.join("model.json"));
    let cfg = TrainingConfig {
        k: a.k,
        batch_sizes: a.batch_sizes.clone(),
        epochs: a.epochs,
        seed: a.seed,
        jobs: a.jobs,
        progress: !a.quiet,
        ..TrainingConfig::default()
    };
    cfg.validate()?;
    let multi = floors.len() > 1;
    for f in &floors {
        train_floor(f, &a, &cfg, &floor_checkpoint_path(&out, f.floor, multi))?;
    }
    a.split = Some(split);
    a.out = Some(out.clone());
    write_run_config(&parent_dir(&out), "train", &a)
}

fn evaluate(mut a: EvaluateArgs) -> Result<()> {
    let split = split_path(&a.input, &a.split);
    let (fps, s) = load_floors(&a.input, &split)?;
    let floors = floor_splits(&fps, &s)?;
    let multi = floors.len() > 1;
    let mut models: BTreeMap<i32, DnlModel> = BTreeMap::new();
    for f in &floors {
        models.insert(f.floor, load_checkpoint(floor_checkpoint_path(&a.model, f.floor, multi))?);
    }
    let mut reports: Vec<ErrorReport> = Vec::new();
    if a.baselines {
        let k = models.values().next().map_or(DEFAULT_K, |m| m.k);
        reports.extend(run_baselines(&floors, k)?);
    }
    reports.push(model_predictions(&floors, &models)?.report("DNL")?);
    let out_dir = a.out_dir.clone().unwrap_or_else(|| a.input.clone());
    emit_comparison(&reports, &out_dir, &[])?;
    a.split = Some(split);
    a.out_dir = Some(out_dir.clone());
    write_run_config(&out_dir, "evaluate", &a)
}

fn predict(mut a: PredictArgs) -> Result<()> {
    let model = load_checkpoint(&a.model)?;
    let scans = load_scans(&a.scans)?;
    let positions = model.predict_scans(&scans)?;
    let out = a.out.clone().unwrap_or_else(|| parent_dir(&a.scans).join(PREDICTIONS_FILE));
    let io = |e| Error::io(&out, e);
    let mut w = BufWriter::new(File::create(&out).map_err(io)?);
    writeln!(w, "fp_id,x,y").map_err(io)?;
    for (s, p) in scans.iter().zip(&positions) {
        writeln!(w, "{},{},{}", s.fp_id, p.x, p.y).map_err(io)?;
    }
    w.flush().map_err(io)?;
    a.out = Some(out.clone());
    write_run_config(&parent_dir(&out), "predict", &a)
}
