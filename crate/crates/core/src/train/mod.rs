//! AdamW training with a multi-step learning-rate schedule, per-epoch
//! checkpoints, and pixel-weighted evaluation.

mod checkpoint;
mod optim;

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{augment, list_samples, load_sample, read_split, AugmentConfig, DatasetError, Sample};
use crate::dfnet::DfNet;
use crate::geometry::{DepthMap, Grid, RgbImage};
use crate::objective::{depth_loss, metrics, LossConfig, MetricsAccumulator, MetricsReport, ObjectiveError, Scope};
use crate::synth::derive_seed;
use crate::tensor::{BatchNormMode, Tape, Tensor, TensorError};

pub use checkpoint::{initial_checkpoint, Checkpoint, CheckpointMeta, CHECKPOINT_FORMAT_VERSION, META_FILE, MODEL_FILE, OPTIM_FILE};
pub use optim::{AdamW, AdamWConfig, ParamUpdate};

pub const LOG_FILE: &str = "log.csv";
pub const LOG_HEADER: [&str; 9] = ["epoch", "lr", "train_loss", "eval_rmse", "eval_rel", "eval_mae", "d105", "d110", "d125"];

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("sample is {found_w}x{found_h}, model expects {expected_w}x{expected_h}")]
    Dims { expected_w: usize, expected_h: usize, found_w: usize, found_h: usize },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {detail}")]
    Format { path: PathBuf, detail: String },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("training diverged: epoch {epoch} loss {loss} exceeded 10x the initial {initial} for 3 consecutive epochs")]
    Diverged { epoch: usize, loss: f64, initial: f64 },
    #[error("empty {0} set")]
    Empty(&'static str),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

pub type Result<T, E = TrainError> = std::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr0: f64,
    pub decay_factor: f64,
    /// Epoch indices (0-based) from which one more decay applies.
    pub decay_epochs: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub optimizer: AdamWConfig,
    pub augment: AugmentConfig,
    pub loss: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr0: 1e-3,
            decay_factor: 5.0,
            decay_epochs: vec![5, 15, 25, 35],
            epochs: 40,
            batch_size: 4,
            seed: 0,
            optimizer: AdamWConfig::default(),
            augment: AugmentConfig::default(),
            loss: LossConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(TrainError::Config(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if !(self.decay_factor >= 1.0) {
            return Err(TrainError::Config(format!("decay_factor must be >= 1, got {}", self.decay_factor)));
        }
        if self.decay_epochs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(TrainError::Config(format!("decay_epochs must be strictly increasing: {:?}", self.decay_epochs)));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Config("batch_size must be at least 1".into()));
        }
        self.optimizer.validate()?;
        self.loss.validate()?;
        Ok(())
    }
}

/// `lr0 / factor^k` where `k` counts decay epochs `<= epoch`.
pub fn lr_schedule(epoch: usize, config: &TrainConfig) -> f64 {
    let k = config.decay_epochs.iter().filter(|&&e| e <= epoch).count();
    config.lr0 / config.decay_factor.powi(k as i32)
}

/// Random-access sample provider.
pub trait SampleSource {
    fn len(&self) -> usize;
    fn load(&self, index: usize) -> Result<Sample>;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl SampleSource for [Sample] {
    fn len(&self) -> usize {
        <[Sample]>::len(self)
    }
    fn load(&self, index: usize) -> Result<Sample> {
        Ok(self[index].clone())
    }
}

impl SampleSource for Vec<Sample> {
    fn len(&self) -> usize {
        self.as_slice().len()
    }
    fn load(&self, index: usize) -> Result<Sample> {
        Ok(self[index].clone())
    }
}

/// Samples read from disk on demand.
#[derive(Clone, Debug)]
pub struct DiskSamples {
    pub dirs: Vec<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Part {
    Train,
    Test,
    All,
}

impl DiskSamples {
    /// Sample directories of one side of the split in `root/split.json`.
    pub fn open(root: &Path, part: Part) -> Result<Self> {
        let dirs = list_samples(root)?;
        if part == Part::All {
            return Ok(Self { dirs });
        }
        let split = read_split(root)?;
        let dirs = dirs
            .into_iter()
            .filter(|d| {
                let scene = d.parent().and_then(|p| p.file_name()).and_then(|n| n.to_str());
                let id = scene.and_then(|s| s.strip_prefix("scene_")).and_then(|s| s.parse::<u32>().ok());
                id.is_some_and(|id| split.is_test(id) == (part == Part::Test))
            })
            .collect();
        Ok(Self { dirs })
    }
}

impl SampleSource for DiskSamples {
    fn len(&self) -> usize {
        self.dirs.len()
    }
    fn load(&self, index: usize) -> Result<Sample> {
        Ok(load_sample(&self.dirs[index])?)
    }
}

/// `scene_XXXX/view_XXX` for a sample.
pub fn sample_label(sample: &Sample) -> String {
    format!("scene_{:04}/view_{:03}", sample.meta.scene_id, sample.meta.viewpoint)
}

fn check_dims(net: &DfNet<f32>, sample: &Sample) -> Result<()> {
    let c = net.config();
    let (w, h) = sample.dims();
    if (w, h) != (c.width, c.height) {
        return Err(TrainError::Dims { expected_w: c.width, expected_h: c.height, found_w: w, found_h: h });
    }
    Ok(())
}

/// Network inputs: `rgb [N, 3, H, W]` scaled to `[0, 1]`, `raw [N, 1, H, W]`
/// and `gt [N, 1, H, W]` in meters.
pub struct Batch {
    pub rgb: Tensor<f32>,
    pub raw: Tensor<f32>,
    pub gt: Tensor<f32>,
}

impl Batch {
    pub fn new(samples: &[Sample]) -> Result<Self> {
        let first = samples.first().ok_or(TrainError::Empty("batch"))?;
        let (w, h) = first.dims();
        let n = samples.len();
        let plane = w * h;
        let mut rgb = vec![0f32; n * 3 * plane];
        let mut raw = Vec::with_capacity(n * plane);
        let mut gt = Vec::with_capacity(n * plane);
        for (b, s) in samples.iter().enumerate() {
            let (sw, sh) = s.dims();
            if (sw, sh) != (w, h) {
                return Err(TrainError::Dims { expected_w: w, expected_h: h, found_w: sw, found_h: sh });
            }
            for (i, px) in s.rgb.data().iter().enumerate() {
                for c in 0..3 {
                    rgb[(b * 3 + c) * plane + i] = px[c] as f32 / 255.0;
                }
            }
            raw.extend_from_slice(s.raw_depth.data());
            gt.extend_from_slice(s.gt_depth.data());
        }
        Ok(Self {
            rgb: Tensor::new([n, 3, h, w], rgb)?,
            raw: Tensor::new([n, 1, h, w], raw)?,
            gt: Tensor::new([n, 1, h, w], gt)?,
        })
    }
}

/// Eval-mode prediction from RGB in `[0, 1]` and raw depth in meters, both
/// at the network's input size.
pub fn predict_depth(net: &mut DfNet<f32>, rgb: &Grid<[f32; 3]>, raw: &DepthMap) -> Result<DepthMap> {
    let c = net.config();
    let (w, h) = raw.dims();
    if rgb.dims() != (w, h) || (w, h) != (c.width, c.height) {
        let (found_w, found_h) = if raw.dims() == (c.width, c.height) { rgb.dims() } else { raw.dims() };
        return Err(TrainError::Dims { expected_w: c.width, expected_h: c.height, found_w, found_h });
    }
    let plane = w * h;
    let mut planar = vec![0f32; 3 * plane];
    for (i, px) in rgb.data().iter().enumerate() {
        for (ch, &x) in px.iter().enumerate() {
            planar[ch * plane + i] = x;
        }
    }
    let rgb = Tensor::new([1, 3, h, w], planar)?;
    let raw = Tensor::new([1, 1, h, w], raw.data().to_vec())?;
    let out = net.predict(&rgb, &raw)?;
    Ok(DepthMap::from_vec(w, h, out.into_data()).expect("prediction has the input size"))
}

/// `rgb` bytes scaled to `[0, 1]`.
pub fn unit_rgb(rgb: &RgbImage) -> Grid<[f32; 3]> {
    rgb.map(|px| px.map(|c| c as f32 / 255.0))
}

/// Eval-mode prediction for one sample.
pub fn predict_sample(net: &mut DfNet<f32>, sample: &Sample) -> Result<DepthMap> {
    check_dims(net, sample)?;
    predict_depth(net, &unit_rgb(&sample.rgb), &sample.raw_depth)
}

/// One optimizer step on `samples`; returns the loss before the update.
pub fn train_step(net: &mut DfNet<f32>, optim: &mut AdamW<f32>, samples: &[Sample], lr: f64, loss: &LossConfig) -> Result<f64> {
    let batch = Batch::new(samples)?;
    let mut tape = Tape::new();
    let vars = net.bind(&mut tape, true);
    let pred = net.forward(&mut tape, &vars, &batch.rgb, &batch.raw, BatchNormMode::Train)?;
    let (total, terms) = depth_loss(&mut tape, &pred, &batch.gt, loss)?;
    if !terms.total.is_finite() {
        return Err(TrainError::NonFinite("training loss".into()));
    }
    tape.backward(&total)?;
    let grads: Vec<(String, bool, Tensor<f32>)> = net
        .specs()
        .iter()
        .map(|s| (s.name.clone(), s.kind.decays(), tape.grad_tensor(&vars[&s.name])))
        .collect();
    drop(tape);
    let mut values: Vec<(String, bool, Tensor<f32>, Tensor<f32>)> = grads
        .into_iter()
        .map(|(name, decay, grad)| {
            let value = net.param(&name).expect("planned parameter").clone();
            (name, decay, value, grad)
        })
        .collect();
    optim.step(
        lr,
        values.iter_mut().map(|(name, decay, value, grad)| ParamUpdate { name, value, grad, decay: *decay }),
    )?;
    for (name, _, value, _) in values {
        *net.param_mut(&name).expect("planned parameter") = value;
    }
    Ok(terms.total)
}

/// Records `loss` as the outcome of `epoch`: the first recorded loss becomes
/// the reference, and the third consecutive loss above 10x the reference (or
/// any non-finite loss) is an error.
pub fn divergence_guard(meta: &mut CheckpointMeta, epoch: usize, loss: f64) -> Result<()> {
    if !loss.is_finite() {
        return Err(TrainError::NonFinite(format!("training loss of epoch {epoch}")));
    }
    match meta.initial_loss {
        None => meta.initial_loss = Some(loss),
        Some(initial) if loss > 10.0 * initial => {
            meta.diverging_epochs += 1;
            if meta.diverging_epochs >= 3 {
                return Err(TrainError::Diverged { epoch, loss, initial });
            }
        }
        Some(_) => meta.diverging_epochs = 0,
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    /// 0-based epoch index.
    pub epoch: usize,
    pub lr: f64,
    /// Mean over the epoch's batches.
    pub train_loss: f64,
    pub steps: u64,
    pub eval: Option<MetricsReport>,
}

impl EpochLog {
    fn record(&self) -> Vec<String> {
        let mut rec = vec![self.epoch.to_string(), self.lr.to_string(), self.train_loss.to_string()];
        match self.eval.as_ref().and_then(|r| r.values) {
            Some(v) => rec.extend([v.rmse, v.rel, v.mae, v.d105, v.d110, v.d125].map(|x| x.to_string())),
            None => rec.extend(std::iter::repeat_n(String::new(), 6)),
        }
        rec
    }
}

/// Appends rows to `path`, writing the header first when the file is new.
pub fn append_log(path: &Path, rows: &[EpochLog]) -> Result<()> {
    let io = |source| TrainError::Io { path: path.to_path_buf(), source };
    let fresh = !path.exists();
    let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
    let mut csv = csv::Writer::from_writer(file);
    let csv_err = |e: csv::Error| TrainError::Objective(ObjectiveError::Csv(e));
    if fresh {
        csv.write_record(LOG_HEADER).map_err(csv_err)?;
    }
    for row in rows {
        csv.write_record(row.record()).map_err(csv_err)?;
    }
    csv.flush().map_err(io)?;
    Ok(())
}

pub struct TrainOptions<'a> {
    /// Checkpoint directory, rewritten after every epoch together with `log.csv`.
    pub out: Option<&'a Path>,
    /// Evaluated after every epoch when present.
    pub eval: Option<&'a dyn SampleSource>,
    pub scope: Scope,
    pub on_epoch: Option<&'a mut dyn FnMut(&EpochLog)>,
}

impl Default for TrainOptions<'_> {
    fn default() -> Self {
        Self { out: None, eval: None, scope: Scope::Masked, on_epoch: None }
    }
}

/// Runs epochs `ckpt.meta.epoch .. ckpt.meta.train.epochs`, updating `ckpt`
/// in place.
///
/// Each epoch shuffles the training indices with a seed derived from the
/// config seed and the epoch, augments every sample with its own derived
/// seed, and steps once per batch (the last batch may be short). Training
/// stops with [`TrainError::Diverged`] when the epoch loss stays above 10x
/// the first epoch's loss for 3 epochs in a row, and with
/// [`TrainError::NonFinite`] on a NaN loss or gradient.
pub fn train(ckpt: &mut Checkpoint, data: &dyn SampleSource, mut opts: TrainOptions<'_>) -> Result<Vec<EpochLog>> {
    let config = ckpt.meta.train.clone();
    config.validate()?;
    if data.is_empty() {
        return Err(TrainError::Empty("training"));
    }
    let mut logs = Vec::new();
    for epoch in ckpt.meta.epoch..config.epochs {
        let lr = lr_schedule(epoch, &config);
        let epoch_seed = derive_seed(config.seed, epoch as u64);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(epoch_seed, u64::MAX)));
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let mut samples = Vec::with_capacity(chunk.len());
            for &i in chunk {
                let s = data.load(i)?;
                check_dims(&ckpt.net, &s)?;
                samples.push(augment(&s, derive_seed(epoch_seed, i as u64), &config.augment));
            }
            let loss = train_step(&mut ckpt.net, &mut ckpt.optim, &samples, lr, &config.loss)?;
            loss_sum += loss;
            batches += 1;
        }
        let train_loss = loss_sum / batches as f64;

        divergence_guard(&mut ckpt.meta, epoch, train_loss)?;

        let eval = match opts.eval {
            Some(src) => Some(evaluate(&mut ckpt.net, src, opts.scope, &config.loss)?.aggregate),
            None => None,
        };
        ckpt.meta.epoch = epoch + 1;
        ckpt.meta.steps = ckpt.optim.steps();
        ckpt.meta.train_loss = Some(train_loss);
        ckpt.meta.metrics = eval;
        let log = EpochLog { epoch, lr, train_loss, steps: ckpt.optim.steps(), eval };
        if let Some(dir) = opts.out {
            ckpt.save(dir)?;
            append_log(&dir.join(LOG_FILE), std::slice::from_ref(&log))?;
        }
        if let Some(f) = opts.on_epoch.as_mut() {
            f(&log);
        }
        logs.push(log);
    }
    Ok(logs)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    /// Pooled over every evaluated pixel of every sample.
    pub aggregate: MetricsReport,
    pub per_sample: Vec<(String, MetricsReport)>,
}

impl EvalReport {
    /// Per-sample rows followed by an `all` row with the aggregate.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut rows = self.per_sample.clone();
        rows.push(("all".into(), self.aggregate));
        crate::objective::write_metrics_csv(out, Some("sample"), &rows)?;
        Ok(())
    }
}

/// Metrics of `predict(sample)` against each sample's ground truth.
pub fn evaluate_with(
    data: &dyn SampleSource,
    scope: Scope,
    loss: &LossConfig,
    mut predict: impl FnMut(&Sample) -> Result<DepthMap>,
) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(TrainError::Empty("evaluation"));
    }
    let mut total = MetricsAccumulator::default();
    let mut per_sample = Vec::with_capacity(data.len());
    for i in 0..data.len() {
        let sample = data.load(i)?;
        let pred = predict(&sample)?;
        let acc = metrics(&pred, &sample.gt_depth, &sample.mask, loss, scope)?;
        total.merge(&acc);
        per_sample.push((sample_label(&sample), acc.report(scope)));
    }
    Ok(EvalReport { aggregate: total.report(scope), per_sample })
}

pub fn evaluate(net: &mut DfNet<f32>, data: &dyn SampleSource, scope: Scope, loss: &LossConfig) -> Result<EvalReport> {
    evaluate_with(data, scope, loss, |s| predict_sample(net, s))
}
