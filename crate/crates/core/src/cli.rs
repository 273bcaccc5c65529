//! `depthfill` command line: generate, train, eval, infer, verify.
//!
//! Exit codes: 0 success, 1 I/O or unreadable data, 2 invalid config or
//! arguments, 3 numerical abort.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::dataset::{
    decode_depth_png, encode_depth_png, list_samples, load_sample, read_depth_png, read_rgb_png, verify_sample,
    write_depth_png, write_rgb_png, DatasetError, Sample, Verdict, VerifyConfig, MAX_DEPTH,
};
use crate::dfnet::DfnetConfig;
use crate::geometry::{
    deproject, resize_bilinear, resize_nearest, write_ply, CameraIntrinsics, DepthMap, GeometryError, Grid, RgbImage,
};
use crate::objective::{ObjectiveError, Scope};
use crate::synth::{generate_dataset, Preset, SynthConfig, SynthError};
use crate::tensor::TensorError;
use crate::train::{
    evaluate_with, initial_checkpoint, predict_depth, predict_sample, sample_label, train, unit_rgb, Checkpoint,
    DiskSamples, Part, SampleSource, TrainConfig, TrainError, TrainOptions, LOG_FILE,
};

#[derive(Debug, Parser)]
#[command(name = "depthfill", version, about = "Depth completion for transparent objects")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic RGB-D dataset with an object-held-out split.
    Generate(GenerateArgs),
    /// Train DFNet on the training side of a dataset.
    Train(TrainArgs),
    /// Evaluate a checkpoint and write metric reports.
    Eval(EvalArgs),
    /// Refine one RGB-D pair.
    Infer(InferArgs),
    /// Screen dataset images for blur and exposure problems.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub scenes: usize,
    #[arg(long)]
    pub views: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    /// Transparent objects held out for the test split.
    #[arg(long, default_value_t = 0)]
    pub holdout: usize,
    /// Generator config JSON; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint directory, rewritten after every epoch.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long)]
    pub dense_layers: Option<usize>,
    #[arg(long)]
    pub growth: Option<usize>,
    #[arg(long)]
    pub levels: Option<usize>,
    /// Add the raw depth to the network output.
    #[arg(long)]
    pub residual: bool,
    #[arg(long)]
    pub no_augment: bool,
    /// Metric scope for the per-epoch evaluation on the test split.
    #[arg(long, value_enum, default_value_t = ScopeArg::Masked)]
    pub scope: ScopeArg,
    /// Run config JSON (`{"model": {...}, "train": {...}}`); flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Continue from a checkpoint directory; only --epochs may change.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Single-threaded, bit-reproducible run.
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, required_unless_present = "oracle_gt")]
    pub ckpt: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ScopeArg::Masked)]
    pub scope: ScopeArg,
    #[arg(long, value_enum, default_value_t = PartArg::All)]
    pub part: PartArg,
    /// Per-sample and aggregate CSV (stdout when absent).
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Directory for per-sample error-map PNGs.
    #[arg(long)]
    pub error_maps: Option<PathBuf>,
    /// Error in meters mapped to the top of the color ramp.
    #[arg(long, default_value_t = 0.1)]
    pub error_max: f64,
    /// Use the ground truth as the prediction (pipeline self-check).
    #[arg(long)]
    pub oracle_gt: bool,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(long)]
    pub rgb: PathBuf,
    #[arg(long)]
    pub depth: PathBuf,
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the refined depth as a PLY point cloud.
    #[arg(long)]
    pub cloud: Option<PathBuf>,
    /// Camera intrinsics JSON at the input resolution; required with --cloud.
    #[arg(long)]
    pub intrinsics: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Minimum Laplacian variance.
    #[arg(long)]
    pub blur: Option<f64>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ScopeArg {
    Masked,
    Global,
}

impl From<ScopeArg> for Scope {
    fn from(s: ScopeArg) -> Self {
        match s {
            ScopeArg::Masked => Scope::Masked,
            ScopeArg::Global => Scope::Global,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum PartArg {
    Train,
    Test,
    All,
}

impl From<PartArg> for Part {
    fn from(p: PartArg) -> Self {
        match p {
            PartArg::Train => Part::Train,
            PartArg::Test => Part::Test,
            PartArg::All => Part::All,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: 2, message: message.into() }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self { code: 1, message: format!("{}: {e}", path.display()) }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

fn dataset_code(e: &DatasetError) -> u8 {
    match e {
        DatasetError::Io { .. } | DatasetError::Format { .. } => 1,
        DatasetError::Geometry(g) => geometry_code(g),
        DatasetError::DepthRange { .. } | DatasetError::Invalid(_) | DatasetError::Split(_) => 2,
    }
}

fn geometry_code(e: &GeometryError) -> u8 {
    match e {
        GeometryError::Io(_) | GeometryError::Ply(_) => 1,
        _ => 2,
    }
}

fn tensor_code(e: &TensorError) -> u8 {
    match e {
        TensorError::Io(_) | TensorError::Format(_) => 1,
        _ => 2,
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        let code = match &e {
            TrainError::Io { .. } | TrainError::Format { .. } => 1,
            TrainError::NonFinite(_) | TrainError::Diverged { .. } => 3,
            TrainError::Dataset(d) => dataset_code(d),
            TrainError::Tensor(t) => tensor_code(t),
            TrainError::Objective(ObjectiveError::Csv(_)) => 1,
            _ => 2,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<DatasetError> for CliError {
    fn from(e: DatasetError) -> Self {
        Self { code: dataset_code(&e), message: e.to_string() }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        let code = match &e {
            SynthError::Dataset(d) => dataset_code(d),
            SynthError::Geometry(g) => geometry_code(g),
            _ => 2,
        };
        Self { code, message: e.to_string() }
    }
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        Self { code: geometry_code(&e), message: e.to_string() }
    }
}

impl From<ObjectiveError> for CliError {
    fn from(e: ObjectiveError) -> Self {
        let code = if matches!(e, ObjectiveError::Csv(_)) { 1 } else { 2 };
        Self { code, message: e.to_string() }
    }
}

type Result<T, E = CliError> = std::result::Result<T, E>;

/// Parses `args` (including the program name) and runs the command; returns
/// the process exit code.
pub fn run<I, S>(args: I) -> u8
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}

pub fn execute(cli: Cli) -> Result<()> {
    let threads = match &cli.command {
        Command::Train(a) if a.deterministic => Some(1),
        _ => cli.threads,
    };
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::config("--threads must be at least 1"));
        }
        // the global pool can only be set once per process; later calls keep it
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Infer(a) => cmd_infer(a),
        Command::Verify(a) => cmd_verify(a),
    }
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| match e.classify() {
        serde_json::error::Category::Io => CliError::io(path, e),
        _ => CliError::config(format!("{}: {e}", path.display())),
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    Ok(BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?))
}

fn require_dir(path: &Path) -> Result<()> {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::io(path, "not a directory"))
    }
}

fn cmd_generate(a: GenerateArgs) -> Result<()> {
    let mut config: SynthConfig = match &a.config {
        Some(p) => read_json(p)?,
        None => SynthConfig::default(),
    };
    if let Some(v) = a.views {
        config.views = v;
    }
    if let Some(p) = a.preset {
        config.preset = p;
    }
    if let Some(w) = a.width {
        config.width = w;
    }
    if let Some(h) = a.height {
        config.height = h;
    }
    config.validate()?;
    if a.scenes == 0 {
        return Err(CliError::config("--scenes must be at least 1"));
    }
    let summary = generate_dataset(&a.out, &config, a.scenes, a.seed, a.holdout, &VerifyConfig::default())?;
    println!("scenes: {}", summary.scenes);
    println!("samples: {}", summary.samples);
    println!("rejected: {}", summary.rejected);
    if let Some(split) = summary.split {
        println!(
            "split: {} train scenes, {} test scenes, held-out objects {:?}",
            split.train_scenes.len(),
            split.test_scenes.len(),
            split.held_out_objects
        );
    }
    Ok(())
}

/// Network shape options of a run config; the input size comes from the data.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden: usize,
    pub dense_layers: usize,
    pub growth: usize,
    pub levels: usize,
    pub residual: bool,
}

impl Default for ModelSection {
    fn default() -> Self {
        let d = DfnetConfig::default();
        Self { hidden: d.hidden, dense_layers: d.dense_layers, growth: d.growth, levels: d.levels, residual: d.residual }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub train: TrainConfig,
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    require_dir(&a.data)?;
    let data = DiskSamples::open(&a.data, Part::Train)?;
    let test = DiskSamples::open(&a.data, Part::Test)?;
    if data.is_empty() {
        return Err(CliError::config(format!("{}: no training samples", a.data.display())));
    }

    let mut ckpt = match &a.resume {
        Some(dir) => {
            let overrides = [a.batch_size.is_some(), a.lr.is_some(), a.seed.is_some(), a.hidden.is_some()]
                .into_iter()
                .chain([a.dense_layers.is_some(), a.growth.is_some(), a.levels.is_some(), a.residual])
                .chain([a.no_augment, a.config.is_some()]);
            if overrides.into_iter().any(|x| x) {
                return Err(CliError::config("--resume continues the stored run; only --epochs may be given"));
            }
            let mut ckpt = Checkpoint::load(dir)?;
            if let Some(e) = a.epochs {
                ckpt.meta.train.epochs = e;
            }
            if dir != &a.out {
                let log = dir.join(LOG_FILE);
                if log.exists() {
                    fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
                    fs::copy(&log, a.out.join(LOG_FILE)).map_err(|e| CliError::io(&log, e))?;
                }
            }
            ckpt
        }
        None => {
            let mut run: RunConfig = match &a.config {
                Some(p) => read_json(p)?,
                None => RunConfig::default(),
            };
            let t = &mut run.train;
            if let Some(e) = a.epochs {
                t.epochs = e;
            }
            if let Some(b) = a.batch_size {
                t.batch_size = b;
            }
            if let Some(lr) = a.lr {
                t.lr0 = lr;
            }
            if let Some(s) = a.seed {
                t.seed = s;
            }
            if a.no_augment {
                t.augment = crate::dataset::AugmentConfig::disabled();
            }
            let m = &mut run.model;
            if let Some(h) = a.hidden {
                m.hidden = h;
            }
            if let Some(l) = a.dense_layers {
                m.dense_layers = l;
            }
            if let Some(g) = a.growth {
                m.growth = g;
            }
            if let Some(l) = a.levels {
                m.levels = l;
            }
            m.residual |= a.residual;
            let (width, height) = data.load(0)?.dims();
            let model = DfnetConfig {
                hidden: m.hidden,
                dense_layers: m.dense_layers,
                growth: m.growth,
                levels: m.levels,
                height,
                width,
                residual: m.residual,
            };
            if a.out.join(LOG_FILE).exists() {
                return Err(CliError::config(format!(
                    "{} already holds a training run; pass --resume or choose another --out",
                    a.out.display()
                )));
            }
            initial_checkpoint(model, run.train)?
        }
    };
    println!(
        "training on {} samples ({} held out), {} parameters",
        data.len(),
        test.len(),
        ckpt.net.param_count()
    );
    let mut report = |log: &crate::train::EpochLog| {
        let eval = log.eval.and_then(|r| r.values).map(|v| format!(" eval_rmse {:.5} d105 {:.2}", v.rmse, v.d105));
        println!("epoch {} lr {:e} loss {:.6}{}", log.epoch, log.lr, log.train_loss, eval.unwrap_or_default());
    };
    let opts = TrainOptions {
        out: Some(&a.out),
        eval: if test.is_empty() { None } else { Some(&test) },
        scope: a.scope.into(),
        on_epoch: Some(&mut report),
    };
    train(&mut ckpt, &data, opts)?;
    println!("checkpoint: {}", a.out.display());
    Ok(())
}

/// 256-entry error ramp: blue, cyan, green, yellow, red at indices
/// 0, 64, 128, 192, 255, linear in between.
pub fn error_ramp(index: u8) -> [u8; 3] {
    const STOPS: [(f64, [f64; 3]); 5] = [
        (0.0, [0.0, 0.0, 255.0]),
        (64.0, [0.0, 255.0, 255.0]),
        (128.0, [0.0, 255.0, 0.0]),
        (192.0, [255.0, 255.0, 0.0]),
        (255.0, [255.0, 0.0, 0.0]),
    ];
    let x = index as f64;
    let k = STOPS.windows(2).position(|w| x <= w[1].0).unwrap_or(STOPS.len() - 2);
    let ((x0, c0), (x1, c1)) = (STOPS[k], STOPS[k + 1]);
    let t = (x - x0) / (x1 - x0);
    [0, 1, 2].map(|i| (c0[i] + (c1[i] - c0[i]) * t).round() as u8)
}

/// Gray outside the mask.
pub const ERROR_MAP_BACKGROUND: [u8; 3] = [128, 128, 128];

/// `|pred - gt|` on masked pixels mapped onto [`error_ramp`], saturating at `max_error`.
pub fn error_map(pred: &DepthMap, sample: &Sample, max_error: f64) -> RgbImage {
    let (w, h) = sample.dims();
    Grid::from_fn(w, h, |u, v| {
        if !*sample.mask.get(u, v) {
            return ERROR_MAP_BACKGROUND;
        }
        let e = (*pred.get(u, v) as f64 - *sample.gt_depth.get(u, v) as f64).abs();
        error_ramp((255.0 * (e / max_error).min(1.0)).round() as u8)
    })
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    require_dir(&a.data)?;
    if !(a.error_max > 0.0) {
        return Err(CliError::config("--error-max must be positive"));
    }
    let data = DiskSamples::open(&a.data, a.part.into())?;
    let mut ckpt = match &a.ckpt {
        Some(dir) if !a.oracle_gt => Some(Checkpoint::load(dir)?),
        _ => None,
    };
    let loss = ckpt.as_ref().map(|c| c.meta.train.loss).unwrap_or_default();
    if let Some(dir) = &a.error_maps {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut map_err = None;
    let report = evaluate_with(&data, a.scope.into(), &loss, |sample| {
        let pred = match ckpt.as_mut() {
            Some(c) => predict_sample(&mut c.net, sample)?,
            None => sample.gt_depth.clone(),
        };
        if let Some(dir) = &a.error_maps {
            let path = dir.join(format!("{}.png", sample_label(sample).replace('/', "_")));
            if let Err(e) = write_rgb_png(&path, &error_map(&pred, sample, a.error_max)) {
                map_err.get_or_insert(e);
            }
        }
        Ok(pred)
    })?;
    if let Some(e) = map_err {
        return Err(e.into());
    }
    match &a.report {
        Some(path) => {
            let mut out = create(path)?;
            report.write_csv(&mut out)?;
            out.flush().map_err(|e| CliError::io(path, e))?;
        }
        None => report.write_csv(std::io::stdout().lock())?,
    }
    let agg = report.aggregate;
    match agg.values {
        Some(v) => eprintln!(
            "{} pixels ({}): rmse {:.5} rel {:.5} mae {:.5} d105 {:.2} d110 {:.2} d125 {:.2}",
            agg.pixel_count,
            agg.scope.as_str(),
            v.rmse,
            v.rel,
            v.mae,
            v.d105,
            v.d110,
            v.d125
        ),
        None => eprintln!("no evaluated pixels ({} scope); metrics undefined", agg.scope.as_str()),
    }
    Ok(())
}

fn cmd_infer(a: InferArgs) -> Result<()> {
    if a.cloud.is_some() && a.intrinsics.is_none() {
        return Err(CliError::config("--cloud needs --intrinsics"));
    }
    let intrinsics: Option<CameraIntrinsics> = a.intrinsics.as_deref().map(read_json).transpose()?;
    let rgb = read_rgb_png(&a.rgb)?;
    let raw = read_depth_png(&a.depth)?;
    if rgb.dims() != raw.dims() {
        return Err(CliError::config(format!(
            "rgb is {}x{} but depth is {}x{}",
            rgb.width(),
            rgb.height(),
            raw.width(),
            raw.height()
        )));
    }
    let (w, h) = rgb.dims();
    if let Some(intr) = &intrinsics {
        intr.validate()?;
        if (intr.width, intr.height) != (w, h) {
            return Err(CliError::config(format!(
                "intrinsics are for {}x{}, input is {w}x{h}",
                intr.width, intr.height
            )));
        }
    }
    let mut net = Checkpoint::load_model(&a.ckpt)?;
    let (nw, nh) = (net.config().width, net.config().height);
    let rgb_in = resize_bilinear(&unit_rgb(&rgb), nw, nh);
    let raw_in = resize_nearest(&raw, nw, nh);
    let pred = predict_depth(&mut net, &rgb_in, &raw_in)?;
    let pred = resize_bilinear(&pred.map(|&d| [d]), w, h).map(|d| d[0].clamp(0.0, MAX_DEPTH as f32));
    // what the PNG will hold
    let pred = decode_depth_png(w, h, &encode_depth_png(&pred)?);
    write_depth_png(&a.out, &pred)?;
    println!("refined depth: {} ({w}x{h})", a.out.display());
    if let (Some(path), Some(intr)) = (&a.cloud, &intrinsics) {
        let cloud = deproject(&pred, intr, None)?;
        let mut out = create(path)?;
        write_ply(&mut out, &cloud)?;
        out.flush().map_err(|e| CliError::io(path, e))?;
        println!("point cloud: {} ({} points)", path.display(), cloud.len());
    }
    Ok(())
}

fn cmd_verify(a: VerifyArgs) -> Result<()> {
    require_dir(&a.data)?;
    let mut config = VerifyConfig::default();
    if let Some(b) = a.blur {
        config.blur_threshold = b;
    }
    let dirs = list_samples(&a.data)?;
    let mut rows = Vec::with_capacity(dirs.len());
    let mut rejected = 0;
    for dir in &dirs {
        let sample = load_sample(dir)?;
        let (verdict, stats) = verify_sample(&sample.rgb, &config);
        let (label, reason) = match verdict {
            Verdict::Accept => ("accept", String::new()),
            Verdict::Reject(r) => {
                rejected += 1;
                ("reject", r)
            }
        };
        let name = dir.strip_prefix(&a.data).unwrap_or(dir).to_string_lossy().replace('\\', "/");
        rows.push([
            name,
            label.to_string(),
            reason,
            stats.laplacian_variance.to_string(),
            stats.clipped_fraction.to_string(),
            stats.occupied_bins.to_string(),
        ]);
    }
    let header = ["sample", "verdict", "reason", "laplacian_variance", "clipped_fraction", "occupied_bins"];
    let write = |out: &mut dyn Write| -> std::result::Result<(), csv::Error> {
        let mut csv = csv::Writer::from_writer(out);
        csv.write_record(header)?;
        for r in &rows {
            csv.write_record(r)?;
        }
        csv.flush()?;
        Ok(())
    };
    match &a.report {
        Some(path) => {
            let mut out = create(path)?;
            write(&mut out).map_err(|e| CliError::io(path, e))?;
            out.flush().map_err(|e| CliError::io(path, e))?;
        }
        None => write(&mut std::io::stdout().lock()).map_err(|e| CliError::io(Path::new("<stdout>"), e))?,
    }
    eprintln!("{} samples: {} accepted, {rejected} rejected", dirs.len(), dirs.len() - rejected);
    Ok(())
}
