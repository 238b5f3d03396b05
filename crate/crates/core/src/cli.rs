//! The `homon` command line.
//!
//! Exit codes: 0 on success, 2 for unreadable or insufficient input data,
//! 3 for a resolution mismatch between a checkpoint and a dataset, 1 for
//! anything else.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::experiments::{self, Model, SweepConfig, SweepKind, SweepResult};
use crate::grid::Grid;
use crate::ingest::{self, BinaryDataset, DatasetKind};
use crate::measurement::{self, MeasurementConfig};
use crate::model::{ActivationShape, Checkpoint};
use crate::optics::{self, field::save_png, ComplexField, Encoder, OpticsConfig, PhaseCombine};
use crate::plot::{self, Panel, Series};
use crate::training::{self, Confusion, EpochRecord, Preset, TrainConfig};

#[derive(Debug, Parser)]
#[command(
    name = "homon",
    version,
    about = "Train and evaluate simulated HOM quantum optical neurons"
)]
pub struct Cli {
    /// Worker threads (default: logical cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network and write its history, checkpoint, confusion matrix and curves.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a test split.
    Eval(EvalArgs),
    /// Repeat training over a grid of readout or data settings.
    Sweep(SweepArgs),
    /// Synthesise a hologram for one image and report its fidelity.
    Gs(GsArgs),
    /// Train on propagated fields with full-profile and array gradients.
    CompareModes(CompareArgs),
    /// Photons needed to estimate a visibility to ±eps with confidence 1 − delta.
    Shots(ShotsArgs),
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    #[arg(long, value_enum)]
    pub dataset: Option<DatasetKind>,
    /// Directory holding `<dataset>/…-idx?-ubyte[.gz]` files.
    #[arg(long, env = "HOMON_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    /// Class indices mapped to labels 0 and 1.
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    pub classes: Option<Vec<u8>>,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// One of table1-qon-mnist, table1-qosn-mnist, table1-qon-fashion, table1-qosn-fashion.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub neurons: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Photon-counting readout, e.g. `cc=3000,eta=0.8,bg=5`.
    #[arg(long)]
    pub noise: Option<String>,
    #[arg(long)]
    pub lr_lambda: Option<f64>,
    #[arg(long)]
    pub lr_b: Option<f64>,
    #[arg(long)]
    pub lr_w: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub gamma: Option<f64>,
    /// JSON file with any of the flag names as keys; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Resample test images to this side length first.
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(value_enum)]
    pub kind: SweepKind,
    #[command(flatten)]
    pub data: DataArgs,
    /// Comma-separated sweep values.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub cc: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub bg: Option<f64>,
    /// Background levels for the camera sweep.
    #[arg(long, value_delimiter = ',')]
    pub backgrounds: Option<Vec<f64>>,
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub neurons: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct OpticsArgs {
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Mask-to-beam-splitter distance in metres.
    #[arg(long)]
    pub distance: Option<f64>,
    #[arg(long)]
    pub pitch: Option<f64>,
    #[arg(long)]
    pub waist: Option<f64>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub upsample: Option<usize>,
    #[arg(long, value_enum)]
    pub combine: Option<PhaseCombine>,
}

impl OpticsArgs {
    fn resolve(&self) -> OpticsConfig {
        let d = OpticsConfig::default();
        OpticsConfig {
            grid: self.grid.unwrap_or(d.grid),
            upsample: self.upsample.unwrap_or(d.upsample),
            pitch: self.pitch.unwrap_or(d.pitch),
            wavelength: d.wavelength,
            distance: self.distance.unwrap_or(d.distance),
            waist: self.waist.unwrap_or(d.waist),
            gs_iterations: self.iterations.unwrap_or(d.gs_iterations),
            combine: self.combine.unwrap_or(d.combine),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct GsArgs {
    /// Grayscale PNG to encode.
    #[arg(long, conflicts_with = "index")]
    pub image: Option<PathBuf>,
    /// Index into the dataset (padded to 32×32) instead of a PNG.
    #[arg(long)]
    pub index: Option<usize>,
    #[arg(long, value_enum)]
    pub dataset: Option<DatasetKind>,
    #[arg(long, env = "HOMON_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
    #[command(flatten)]
    pub optics: OpticsArgs,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub neurons: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Maximum per-pixel phase noise in radians.
    #[arg(long, default_value_t = 0.0)]
    pub phase_noise: f64,
    #[command(flatten)]
    pub optics: OpticsArgs,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ShotsArgs {
    #[arg(long)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.05)]
    pub delta: f64,
}

/// A failed command: message and process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io { .. }
            | Error::MagicMismatch { .. }
            | Error::TruncatedFile { .. }
            | Error::CountMismatch { .. }
            | Error::BadDimensions { .. }
            | Error::InsufficientSamples { .. } => 2,
            Error::ShapeMismatch { .. } => 3,
            _ => 1,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

type CmdResult<T = ()> = std::result::Result<T, Failure>;

/// Written last by every successful command.
#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: u64,
    pub artifacts: Vec<String>,
    pub version: String,
    pub duration_seconds: f64,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Some(n) = cli.jobs {
        // A pool may already exist when called repeatedly in one process.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}

fn dispatch(cmd: Command) -> CmdResult {
    match cmd {
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::Gs(a) => cmd_gs(&a),
        Command::CompareModes(a) => cmd_compare(&a),
        Command::Shots(a) => {
            println!("{}", measurement::hoeffding_shots(a.eps, a.delta)?);
            Ok(())
        }
    }
}

/// Parses `cc=REAL[,eta=REAL][,bg=REAL]`.
pub fn parse_noise(text: &str, seed: u64) -> Result<MeasurementConfig, Error> {
    let mut cfg = MeasurementConfig::new(f64::NAN, seed);
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("noise entry `{part}` is not key=value")))?;
        let v: f64 = value
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("noise value `{value}` is not a number")))?;
        match key {
            "cc" => cfg.mean_signal_cc = v,
            "eta" => cfg.eta_vis = v,
            "bg" => cfg.background_rate = v,
            other => return Err(Error::InvalidConfig(format!("unknown noise key `{other}`"))),
        }
    }
    if cfg.mean_signal_cc.is_nan() {
        return Err(Error::InvalidConfig("--noise needs cc=…".into()));
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Keys accepted in a `--config` JSON file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub dataset: Option<DatasetKind>,
    pub data_dir: Option<PathBuf>,
    pub classes: Option<Vec<u8>>,
    pub n_train: Option<usize>,
    pub n_test: Option<usize>,
    pub seed: Option<u64>,
    pub preset: Option<String>,
    pub neurons: Option<usize>,
    pub epochs: Option<usize>,
    pub noise: Option<String>,
    pub lr_lambda: Option<f64>,
    pub lr_b: Option<f64>,
    pub lr_w: Option<f64>,
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
}

/// Fully resolved training run.
#[derive(Debug, Clone, Serialize)]
pub struct TrainPlan {
    pub dataset: DatasetKind,
    pub data_dir: PathBuf,
    pub classes: (u8, u8),
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
    pub neurons: usize,
    pub preset: Option<String>,
    pub train: TrainConfig,
    pub noise: Option<MeasurementConfig>,
}

fn classes_pair(v: &[u8]) -> Result<(u8, u8), Error> {
    match v {
        [a, b] if a != b && *a < 10 && *b < 10 => Ok((*a, *b)),
        _ => Err(Error::InvalidConfig(format!(
            "need two distinct classes in 0..=9, got {v:?}"
        ))),
    }
}

fn default_data_dir() -> PathBuf {
    PathBuf::from("data")
}

fn preset(name: &str) -> Result<Preset, Error> {
    Preset::by_name(name).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "unknown preset `{name}` (expected one of {})",
            training::PRESET_NAMES.join(", ")
        ))
    })
}

/// Defaults ← preset ← config file ← flags.
pub fn resolve_train(a: &TrainArgs) -> Result<TrainPlan, Error> {
    let file: FileConfig = match &a.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?,
        None => FileConfig::default(),
    };
    let d = &a.data;
    let preset_name = a.preset.clone().or(file.preset.clone());
    let base = preset_name.as_deref().map(preset).transpose()?;
    let dataset = d
        .dataset
        .or(file.dataset)
        .or(base.as_ref().map(|p| p.dataset))
        .unwrap_or(DatasetKind::Mnist);
    let neurons = a
        .neurons
        .or(file.neurons)
        .or(base.as_ref().map(|p| p.neurons))
        .unwrap_or(1);
    let mut train = match &base {
        Some(p) => p.config.clone(),
        None => {
            let epochs = match dataset {
                DatasetKind::Mnist => 20,
                DatasetKind::Fashion => 30,
            };
            TrainConfig::reference(dataset, neurons, epochs)
        }
    };
    if let Some(e) = a.epochs.or(file.epochs) {
        let mid = e / 2;
        train.epochs = e;
        for s in &mut train.lr_schedule {
            s.epoch = mid;
        }
    }
    let pick = |flag: Option<f64>, file: Option<f64>, current: f64| flag.or(file).unwrap_or(current);
    train.lr_lambda = pick(a.lr_lambda, file.lr_lambda, train.lr_lambda);
    train.lr_b = pick(a.lr_b, file.lr_b, train.lr_b);
    train.lr_w = pick(a.lr_w, file.lr_w, train.lr_w);
    train.shape = ActivationShape::new(
        pick(a.beta, file.beta, train.shape.beta),
        pick(a.gamma, file.gamma, train.shape.gamma),
    )?;
    let seed = d.seed.or(file.seed).unwrap_or(0);
    train.seed = seed;
    train.validate()?;
    if neurons == 0 {
        return Err(Error::InvalidConfig("need at least one neuron".into()));
    }
    let classes = match d.classes.clone().or(file.classes) {
        Some(v) => classes_pair(&v)?,
        None => dataset.default_classes(),
    };
    let noise = a
        .noise
        .clone()
        .or(file.noise)
        .map(|s| parse_noise(&s, seed))
        .transpose()?;
    Ok(TrainPlan {
        dataset,
        data_dir: d.data_dir.clone().or(file.data_dir).unwrap_or_else(default_data_dir),
        classes,
        n_train: d
            .n_train
            .or(file.n_train)
            .or(base.as_ref().map(|p| p.n_train))
            .unwrap_or(100),
        n_test: d
            .n_test
            .or(file.n_test)
            .or(base.as_ref().map(|p| p.n_test))
            .unwrap_or(40),
        seed,
        neurons,
        preset: preset_name,
        train,
        noise,
    })
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Failure + '_ {
    move |e| Failure::from(Error::io(path, e))
}

fn create_out(dir: &Path) -> CmdResult {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn write_text(path: &Path, text: &str) -> CmdResult {
    fs::write(path, text).map_err(io_err(path))
}

fn write_manifest(
    out: &Path,
    command: &str,
    config: &impl Serialize,
    seed: u64,
    mut artifacts: Vec<String>,
    started: Instant,
) -> CmdResult {
    for a in &artifacts {
        if !out.join(a).is_file() {
            return Err(Failure {
                code: 1,
                message: format!("artifact {a} missing from {}", out.display()),
            });
        }
    }
    artifacts.push("manifest.json".into());
    let m = RunManifest {
        command: command.into(),
        config: serde_json::to_value(config).map_err(Error::from)?,
        seed,
        artifacts,
        version: env!("CARGO_PKG_VERSION").into(),
        duration_seconds: started.elapsed().as_secs_f64(),
    };
    let text = serde_json::to_string_pretty(&m).map_err(Error::from)?;
    write_text(&out.join("manifest.json"), &(text + "\n"))
}

#[derive(Serialize)]
struct ConfusionReport<'a> {
    class_names: &'a [String; 2],
    counts: [[u64; 2]; 2],
    accuracy: f64,
}

fn confusion_json(names: &[String; 2], c: &Confusion) -> CmdResult<String> {
    let r = ConfusionReport {
        class_names: names,
        counts: c.counts,
        accuracy: c.accuracy(),
    };
    Ok(serde_json::to_string_pretty(&r).map_err(Error::from)? + "\n")
}

/// Accuracy and loss panels for a training history.
pub fn history_panels(history: &[EpochRecord], title: &str) -> Vec<Panel> {
    let x: Vec<f64> = history.iter().map(|r| r.epoch as f64).collect();
    let col = |f: fn(&EpochRecord) -> f64| history.iter().map(f).collect::<Vec<_>>();
    vec![
        Panel {
            title: format!("{title}: accuracy"),
            x_label: "epoch".into(),
            y_label: "accuracy".into(),
            y_range: Some((0.0, 1.0)),
            series: vec![
                Series::new("train", x.clone(), col(|r| r.train_accuracy)),
                Series::new("test", x.clone(), col(|r| r.test_accuracy)),
            ],
            ..Panel::default()
        },
        Panel {
            title: format!("{title}: loss"),
            x_label: "epoch".into(),
            y_label: "binary cross-entropy".into(),
            series: vec![
                Series::new("train", x.clone(), col(|r| r.train_loss)),
                Series::new("test", x, col(|r| r.test_loss)),
            ],
            ..Panel::default()
        },
    ]
}

fn load_split(
    data_dir: &Path,
    dataset: DatasetKind,
    classes: (u8, u8),
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> CmdResult<(BinaryDataset, BinaryDataset)> {
    Ok(ingest::load_binary(data_dir, dataset, classes, n_train, n_test, seed)?)
}

pub fn cmd_train(a: &TrainArgs) -> CmdResult {
    let started = Instant::now();
    let plan = resolve_train(a)?;
    let (train, test) = load_split(
        &plan.data_dir,
        plan.dataset,
        plan.classes,
        plan.n_train,
        plan.n_test,
        plan.seed,
    )?;
    if train.is_empty() || test.is_empty() {
        return Err(Failure::input("train and test sets must be nonempty"));
    }
    let (params, history) = training::train(&train, &test, plan.neurons, &plan.train, plan.noise)?;
    let confusion = training::confusion_matrix(&test, &params, plan.train.shape)?;

    create_out(&a.out)?;
    training::write_history_csv(&a.out.join("history.csv"), &history)?;
    Checkpoint::new(&params, plan.train.shape).save(&a.out.join("params.json"))?;
    write_text(
        &a.out.join("confusion.json"),
        &confusion_json(&test.class_names, &confusion)?,
    )?;
    let title = format!("{} vs {}", test.class_names[0], test.class_names[1]);
    write_text(
        &a.out.join("curves.svg"),
        &plot::render(&history_panels(&history, &title)),
    )?;
    if let Some(last) = history.last() {
        println!(
            "epoch {}: train accuracy {:.4}, test accuracy {:.4}, train loss {:.4}",
            last.epoch, last.train_accuracy, last.test_accuracy, last.train_loss
        );
    }
    write_manifest(
        &a.out,
        "train",
        &plan,
        plan.seed,
        ["history.csv", "params.json", "confusion.json", "curves.svg"]
            .map(String::from)
            .to_vec(),
        started,
    )
}

pub fn cmd_eval(a: &EvalArgs) -> CmdResult {
    let started = Instant::now();
    let (params, shape) = Checkpoint::load(&a.checkpoint)?.into_parts()?;
    let d = &a.data;
    let dataset = d.dataset.unwrap_or(DatasetKind::Mnist);
    let classes = match &d.classes {
        Some(v) => classes_pair(v)?,
        None => dataset.default_classes(),
    };
    let seed = d.seed.unwrap_or(0);
    let n_test = d.n_test.unwrap_or(40);
    if n_test == 0 {
        return Err(Failure::input("test set is empty"));
    }
    let data_dir = d.data_dir.clone().unwrap_or_else(default_data_dir);
    let (_, mut test) = load_split(&data_dir, dataset, classes, d.n_train.unwrap_or(100), n_test, seed)?;
    if let Some(r) = a.resolution {
        test = test.resampled(r);
    }
    let (rows, cols) = params.resolution();
    if (rows, cols) != (test.resolution, test.resolution) {
        return Err(Error::ShapeMismatch {
            left: (rows, cols),
            right: (test.resolution, test.resolution),
        }
        .into());
    }
    let confusion = training::confusion_matrix(&test, &params, shape)?;
    let json = confusion_json(&test.class_names, &confusion)?;
    print!("{json}");
    if let Some(out) = &a.out {
        create_out(out)?;
        write_text(&out.join("confusion.json"), &json)?;
        #[derive(Serialize)]
        struct EvalConfig<'a> {
            checkpoint: &'a Path,
            dataset: DatasetKind,
            classes: (u8, u8),
            n_test: usize,
            seed: u64,
        }
        let cfg = EvalConfig {
            checkpoint: &a.checkpoint,
            dataset,
            classes,
            n_test,
            seed,
        };
        write_manifest(out, "eval", &cfg, seed, vec!["confusion.json".into()], started)?;
    }
    Ok(())
}

pub fn resolve_sweep(a: &SweepArgs) -> Result<(SweepConfig, PathBuf), Error> {
    let mut c = SweepConfig::defaults(a.kind);
    let d = &a.data;
    if let Some(name) = &a.preset {
        let p = preset(name)?;
        c.dataset = p.dataset;
        c.classes = p.dataset.default_classes();
        c.neurons = p.neurons;
        c.train = p.config;
    }
    if let Some(ds) = d.dataset {
        if ds != c.dataset && a.preset.is_none() {
            c.train = TrainConfig::reference(ds, c.neurons, c.train.epochs);
        }
        c.dataset = ds;
        c.classes = ds.default_classes();
    }
    if let Some(n) = a.neurons {
        if a.preset.is_none() {
            c.train = TrainConfig::reference(c.dataset, n, c.train.epochs);
        }
        c.neurons = n;
    }
    if let Some(e) = a.epochs {
        c.train.epochs = e;
        for s in &mut c.train.lr_schedule {
            s.epoch = e / 2;
        }
    }
    if let Some(v) = &d.classes {
        c.classes = classes_pair(v)?;
    }
    if let Some(g) = &a.grid {
        c.grid = g.clone();
    }
    if let Some(b) = &a.backgrounds {
        c.camera_backgrounds = b.clone();
    }
    c.repeats = a.repeats.unwrap_or(c.repeats);
    c.cc = a.cc.unwrap_or(c.cc);
    c.eta = a.eta.unwrap_or(c.eta);
    c.background = a.bg.unwrap_or(c.background);
    c.n_train = d.n_train.unwrap_or(c.n_train);
    c.n_test = d.n_test.unwrap_or(c.n_test);
    c.seed = d.seed.unwrap_or(c.seed);
    c.validate()?;
    Ok((c, d.data_dir.clone().unwrap_or_else(default_data_dir)))
}

/// Mean test accuracy ±1σ against the sweep value, one line per model and
/// background level.
pub fn sweep_panel(r: &SweepResult) -> Panel {
    let summary = r.summary();
    let mut groups: Vec<(Model, f64)> = Vec::new();
    for s in &summary {
        if s.value.is_finite() && !groups.contains(&(s.model, s.background)) {
            groups.push((s.model, s.background));
        }
    }
    let mut series: Vec<Series> = groups
        .iter()
        .map(|&(model, bg)| {
            let rows: Vec<_> = summary
                .iter()
                .filter(|s| s.model == model && s.background == bg && s.value.is_finite())
                .collect();
            let name = if r.kind == experiments::SweepKind::Camera {
                format!("{} (bg {bg})", model.name())
            } else {
                model.name().to_string()
            };
            Series::new(
                name,
                rows.iter().map(|s| s.value).collect(),
                rows.iter().map(|s| s.mean_test_accuracy).collect(),
            )
            .with_band(rows.iter().map(|s| s.std_test_accuracy).collect())
        })
        .collect();
    if let Some(reference) = summary.iter().find(|s| s.model == Model::Noiseless) {
        let xs: Vec<f64> = summary.iter().map(|s| s.value).filter(|v| v.is_finite()).collect();
        if let (Some(lo), Some(hi)) = (xs.iter().copied().reduce(f64::min), xs.iter().copied().reduce(f64::max)) {
            series.push(
                Series::new("noiseless", vec![lo, hi], vec![reference.mean_test_accuracy; 2])
                    .with_band(vec![reference.std_test_accuracy; 2])
                    .dashed(),
            );
        }
    }
    Panel {
        title: format!("test accuracy vs {}", r.value_label()),
        x_label: r.value_label().into(),
        y_label: "mean test accuracy (±1σ)".into(),
        log_x: matches!(r.kind, SweepKind::Counts | SweepKind::Camera),
        y_range: Some((0.0, 1.0)),
        series,
    }
}

pub fn cmd_sweep(a: &SweepArgs) -> CmdResult {
    let started = Instant::now();
    let (cfg, data_dir) = resolve_sweep(a)?;
    let (train, test) = load_split(&data_dir, cfg.dataset, cfg.classes, cfg.n_train, cfg.n_test, cfg.seed)?;
    let result = experiments::run_sweep(&cfg, &train, &test)?;
    create_out(&a.out)?;
    result.write_csv(&a.out.join("sweep.csv"))?;
    result.write_summary_csv(&a.out.join("summary.csv"))?;
    write_text(&a.out.join("sweep.svg"), &plot::render(&[sweep_panel(&result)]))?;
    for s in result.summary() {
        println!(
            "{:>10} bg {:<6} {:<9} {:.4} ± {:.4} (n={})",
            s.value,
            s.background,
            s.model.name(),
            s.mean_test_accuracy,
            s.std_test_accuracy,
            s.n
        );
    }
    write_manifest(
        &a.out,
        "sweep",
        &cfg,
        cfg.seed,
        ["sweep.csv", "summary.csv", "sweep.svg"].map(String::from).to_vec(),
        started,
    )
}

#[derive(Serialize)]
struct GsReport {
    source: String,
    optics: OpticsConfig,
    iterations: usize,
    fidelity: Vec<f64>,
    final_fidelity: f64,
    energy_in_window: f64,
}

fn gs_image(a: &GsArgs) -> CmdResult<(Grid, String)> {
    if let Some(p) = &a.image {
        if !p.is_file() {
            return Err(Failure::input(format!("input image {} does not exist", p.display())));
        }
        return Ok((optics::field::load_png(p)?, p.display().to_string()));
    }
    let dataset = a.dataset.unwrap_or(DatasetKind::Mnist);
    let index = a.index.unwrap_or(0);
    let dir = a.data_dir.clone().unwrap_or_else(default_data_dir);
    let (images, labels) = ingest::locate(&dir, dataset)?;
    let raw = ingest::load_idx(images, labels)?;
    let img = raw
        .images
        .get(index)
        .ok_or_else(|| Failure::input(format!("index {index} out of range ({} images)", raw.len())))?;
    Ok((
        ingest::pad(img, ingest::DEFAULT_BORDER),
        format!("{}[{index}]", dataset.dir_name()),
    ))
}

pub fn cmd_gs(a: &GsArgs) -> CmdResult {
    let started = Instant::now();
    let (img, source) = gs_image(a)?;
    if img.rows() != img.cols() {
        return Err(Failure::input(format!(
            "image must be square, got {}×{}",
            img.rows(),
            img.cols()
        )));
    }
    let cfg = a.optics.resolve();
    let enc = Encoder::new(cfg, img.rows())?;
    let result = enc.hologram(&img)?;
    let mask = ComplexField::from_polar(
        &Grid::filled(cfg.grid, cfg.grid, 1.0),
        &result.phase,
        cfg.pitch,
        cfg.wavelength,
    )?;
    let intensity = result.output.intensity();
    let in_window = intensity.dot(enc.constraint())? / intensity.sum();
    let report = GsReport {
        source,
        optics: cfg,
        iterations: cfg.gs_iterations,
        final_fidelity: result.final_fidelity(),
        fidelity: result.fidelity.clone(),
        energy_in_window: in_window,
    };
    create_out(&a.out)?;
    mask.write_dump(&a.out.join("mask.bin"))?;
    save_png(&intensity, &a.out.join("intensity.png"))?;
    let text = serde_json::to_string_pretty(&report).map_err(Error::from)? + "\n";
    write_text(&a.out.join("report.json"), &text)?;
    println!(
        "fidelity after {} iterations: {:.4} ({:.1}% of the energy inside the window)",
        cfg.gs_iterations,
        report.final_fidelity,
        100.0 * in_window
    );
    write_manifest(
        &a.out,
        "gs",
        &report,
        0,
        ["mask.bin", "intensity.png", "report.json"].map(String::from).to_vec(),
        started,
    )
}

pub fn cmd_compare(a: &CompareArgs) -> CmdResult {
    let started = Instant::now();
    let d = &a.data;
    let dataset = d.dataset.unwrap_or(DatasetKind::Fashion);
    let classes = match &d.classes {
        Some(v) => classes_pair(v)?,
        None => dataset.default_classes(),
    };
    let neurons = a.neurons.unwrap_or(1);
    let seed = d.seed.unwrap_or(0);
    let cfg = TrainConfig::reference(dataset, neurons, a.epochs.unwrap_or(20));
    let optics = a.optics.resolve();
    let data_dir = d.data_dir.clone().unwrap_or_else(default_data_dir);
    let (train, test) = load_split(
        &data_dir,
        dataset,
        classes,
        d.n_train.unwrap_or(100),
        d.n_test.unwrap_or(40),
        seed,
    )?;
    let r = optics::compare_training_modes(&train, &test, neurons, &cfg, Some(optics), a.phase_noise, seed)?;
    create_out(&a.out)?;
    training::write_history_csv(&a.out.join("full_profile.csv"), &r.full_profile)?;
    training::write_history_csv(&a.out.join("discrete_arrays.csv"), &r.discrete_arrays)?;
    let mut panels = history_panels(&r.full_profile, "full-profile gradients");
    panels.extend(history_panels(&r.discrete_arrays, "array gradients"));
    write_text(&a.out.join("curves.svg"), &plot::render(&panels))?;
    for (name, h) in [
        ("full profile", &r.full_profile),
        ("discrete arrays", &r.discrete_arrays),
    ] {
        if let Some(l) = h.last() {
            println!("{name}: train {:.4}, test {:.4}", l.train_accuracy, l.test_accuracy);
        }
    }
    #[derive(Serialize)]
    struct CompareConfig {
        dataset: DatasetKind,
        classes: (u8, u8),
        neurons: usize,
        seed: u64,
        phase_noise: f64,
        train: TrainConfig,
        optics: OpticsConfig,
    }
    let plan = CompareConfig {
        dataset,
        classes,
        neurons,
        seed,
        phase_noise: a.phase_noise,
        train: cfg,
        optics,
    };
    write_manifest(
        &a.out,
        "compare-modes",
        &plan,
        seed,
        ["full_profile.csv", "discrete_arrays.csv", "curves.svg"]
            .map(String::from)
            .to_vec(),
        started,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_specs() {
        let c = parse_noise("cc=3000", 4).unwrap();
        assert_eq!(
            (c.mean_signal_cc, c.eta_vis, c.background_rate, c.seed),
            (3000.0, 1.0, 0.0, 4)
        );
        let c = parse_noise("cc=100,eta=0.5,bg=2.5", 0).unwrap();
        assert_eq!((c.mean_signal_cc, c.eta_vis, c.background_rate), (100.0, 0.5, 2.5));
        assert!(parse_noise("eta=0.5", 0).is_err());
        assert!(parse_noise("cc=abc", 0).is_err());
        assert!(parse_noise("cc=10,foo=1", 0).is_err());
        assert!(parse_noise("cc=10,eta=2", 0).is_err());
    }

    fn train_args(extra: &[&str]) -> TrainArgs {
        let mut argv = vec!["homon", "train"];
        argv.extend_from_slice(extra);
        match Cli::try_parse_from(argv).unwrap().command {
            Command::Train(a) => a,
            _ => unreachable!(),
        }
    }

    #[test]
    fn presets_and_overrides() {
        let p = resolve_train(&train_args(&["--preset", "table1-qosn-fashion"])).unwrap();
        assert_eq!(p.neurons, 2);
        assert_eq!(p.dataset, DatasetKind::Fashion);
        assert_eq!(p.train.epochs, 30);
        assert_eq!(p.train.lr_w, 12.6);
        assert_eq!(p.classes, (7, 8));
        let p = resolve_train(&train_args(&[
            "--preset",
            "table1-qon-mnist",
            "--epochs",
            "8",
            "--beta",
            "5",
        ]))
        .unwrap();
        assert_eq!(p.train.epochs, 8);
        assert_eq!(p.train.lr_schedule[0].epoch, 4);
        assert_eq!(p.train.shape.beta, 5.0);
        assert_eq!(p.train.shape.gamma, 5.5);
        assert!(resolve_train(&train_args(&["--preset", "nope"])).is_err());
        assert!(resolve_train(&train_args(&["--classes", "3", "3"])).is_err());
    }

    #[test]
    fn config_file_sits_between_preset_and_flags() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(
            &path,
            r#"{"preset": "table1-qon-fashion", "epochs": 6, "seed": 9, "noise": "cc=50"}"#,
        )
        .unwrap();
        let p = resolve_train(&train_args(&["--config", path.to_str().unwrap(), "--epochs", "4"])).unwrap();
        assert_eq!(p.dataset, DatasetKind::Fashion);
        assert_eq!(p.train.epochs, 4);
        assert_eq!(p.seed, 9);
        assert_eq!(p.noise.unwrap().mean_signal_cc, 50.0);
        fs::write(&path, r#"{"epochz": 6}"#).unwrap();
        assert!(resolve_train(&train_args(&["--config", path.to_str().unwrap()])).is_err());
    }

    #[test]
    fn exit_codes_by_error_kind() {
        let missing = Error::io("x", std::io::Error::new(std::io::ErrorKind::NotFound, "gone"));
        assert_eq!(Failure::from(missing).code, 2);
        assert_eq!(
            Failure::from(Error::ShapeMismatch {
                left: (1, 1),
                right: (2, 2)
            })
            .code,
            3
        );
        assert_eq!(Failure::from(Error::CheckpointParse("bad".into())).code, 1);
    }

    #[test]
    fn unknown_arguments_exit_with_usage_error() {
        assert_eq!(run(["homon", "frobnicate"]), 2);
        assert_eq!(run(["homon", "--help"]), 0);
    }

    #[test]
    fn shots_command() {
        assert_eq!(run(["homon", "shots", "--eps", "0.1"]), 0);
        assert_eq!(run(["homon", "shots", "--eps", "2"]), 1);
    }
}
