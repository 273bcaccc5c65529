use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AdamW, Result, TrainConfig, TrainError};
use crate::dfnet::{DfNet, DfnetConfig};
use crate::objective::MetricsReport;
use crate::tensor::{read_container, write_container};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;
pub const MODEL_FILE: &str = "model.params";
pub const OPTIM_FILE: &str = "optim.params";
pub const META_FILE: &str = "checkpoint.json";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub model: DfnetConfig,
    pub train: TrainConfig,
    /// Completed epochs.
    pub epoch: usize,
    pub steps: u64,
    /// Mean loss of the first epoch, the divergence guard reference.
    pub initial_loss: Option<f64>,
    /// Consecutive epochs above the divergence threshold.
    pub diverging_epochs: usize,
    pub train_loss: Option<f64>,
    pub metrics: Option<MetricsReport>,
}

/// Directory with `model.params`, `optim.params` and `checkpoint.json`.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub net: DfNet<f32>,
    pub optim: AdamW<f32>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TrainError + '_ {
    move |source| TrainError::Io { path: path.to_path_buf(), source }
}

impl Checkpoint {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let write = |name: &str, f: &dyn Fn(&mut BufWriter<File>) -> Result<()>| -> Result<()> {
            let path = dir.join(name);
            let mut out = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
            f(&mut out)?;
            out.flush().map_err(io_err(&path))
        };
        write(MODEL_FILE, &|out| Ok(write_container(out, &self.net.to_tensors())?))?;
        write(OPTIM_FILE, &|out| Ok(write_container(out, &self.optim.to_tensors())?))?;
        write(META_FILE, &|out| {
            serde_json::to_writer_pretty(&mut *out, &self.meta).map_err(|e| TrainError::Config(e.to_string()))?;
            out.write_all(b"\n").map_err(io_err(&dir.join(META_FILE)))
        })
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(META_FILE);
        let file = File::open(&meta_path).map_err(io_err(&meta_path))?;
        let meta: CheckpointMeta = serde_json::from_reader(BufReader::new(file))
            .map_err(|e| TrainError::Format { path: meta_path.clone(), detail: e.to_string() })?;
        if meta.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(TrainError::Format {
                path: meta_path,
                detail: format!("unsupported format version {}", meta.format_version),
            });
        }
        let read = |name: &str| {
            let path = dir.join(name);
            let file = File::open(&path).map_err(io_err(&path))?;
            read_container::<f32, _>(&mut BufReader::new(file))
                .map_err(|e| TrainError::Format { path: path.clone(), detail: e.to_string() })
        };
        let net = DfNet::from_tensors(meta.model, read(MODEL_FILE)?)
            .map_err(|e| TrainError::Format { path: dir.join(MODEL_FILE), detail: e.to_string() })?;
        let optim = AdamW::from_tensors(meta.train.optimizer, meta.steps, read(OPTIM_FILE)?)?;
        for spec in net.specs() {
            if let Some(shape) = optim.moment_shape(&spec.name) {
                if shape != spec.shape.as_slice() {
                    return Err(TrainError::Format {
                        path: dir.join(OPTIM_FILE),
                        detail: format!("moments of {} have shape {shape:?}, expected {:?}", spec.name, spec.shape),
                    });
                }
            }
        }
        Ok(Self { meta, net, optim })
    }

    /// Loads just the network.
    pub fn load_model(dir: &Path) -> Result<DfNet<f32>> {
        Ok(Self::load(dir)?.net)
    }
}

/// Fresh checkpoint state for `config`.
pub fn initial_checkpoint(model: DfnetConfig, train: TrainConfig) -> Result<Checkpoint> {
    train.validate()?;
    let net = DfNet::new(model, train.seed)?;
    let optim = AdamW::new(train.optimizer);
    Ok(Checkpoint {
        meta: CheckpointMeta {
            format_version: CHECKPOINT_FORMAT_VERSION,
            model,
            train,
            epoch: 0,
            steps: 0,
            initial_loss: None,
            diverging_epochs: 0,
            train_loss: None,
            metrics: None,
        },
        net,
        optim,
    })
}
