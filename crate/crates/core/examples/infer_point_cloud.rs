// Trains a tiny model for a few epochs, saves it, reloads the checkpoint and
// turns a refined depth map of an unseen scene into a colored point cloud.
//
// cargo run --release --example infer_point_cloud -- [OUT_DIR]

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::PathBuf;

use depthfill::dfnet::DfnetConfig;
use depthfill::geometry::{deproject_colored, read_ply, write_ply};
use depthfill::objective::{metrics, LossConfig, Scope};
use depthfill::synth::{generate_scene_samples, SynthConfig};
use depthfill::train::{initial_checkpoint, predict_sample, train, Checkpoint, TrainConfig, TrainOptions};

pub struct InferSummary {
    pub points: usize,
    pub raw_rmse: f64,
    pub refined_rmse: f64,
}

pub fn run_example(out: PathBuf, epochs: usize) -> Result<InferSummary, Box<dyn std::error::Error>> {
    let synth = SynthConfig { width: 64, height: 48, views: 4, ..Default::default() };
    let mut data = generate_scene_samples(&synth, 1, 0)?;
    data.extend(generate_scene_samples(&synth, 2, 1)?);
    let unseen = generate_scene_samples(&synth, 99, 0)?.remove(0);

    let model = DfnetConfig { hidden: 8, dense_layers: 2, growth: 4, levels: 2, height: 48, width: 64, residual: false };
    let train_config = TrainConfig { lr0: 3e-3, epochs, decay_epochs: vec![], ..Default::default() };
    let mut ckpt = initial_checkpoint(model, train_config)?;
    let ckpt_dir = out.join("checkpoint");
    train(&mut ckpt, &data, TrainOptions { out: Some(ckpt_dir.as_path()), ..Default::default() })?;

    let mut net = Checkpoint::load_model(&ckpt_dir)?;
    let refined = predict_sample(&mut net, &unseen)?;
    let loss = LossConfig::default();
    let rmse = |pred| -> Result<f64, Box<dyn std::error::Error>> {
        let report = metrics(pred, &unseen.gt_depth, &unseen.mask, &loss, Scope::Masked)?.report(Scope::Masked);
        Ok(report.values.map_or(f64::NAN, |v| v.rmse))
    };
    let (raw_rmse, refined_rmse) = (rmse(&unseen.raw_depth)?, rmse(&refined)?);
    println!("masked RMSE: raw sensor {raw_rmse:.4} m, refined {refined_rmse:.4} m");

    let cloud = deproject_colored(&refined, &synth.intrinsics(), None, &unseen.rgb)?;
    let ply = out.join("refined.ply");
    write_ply(&mut BufWriter::new(File::create(&ply)?), &cloud)?;
    let back = read_ply(BufReader::new(File::open(&ply)?))?;
    println!("{} points written to {}, {} read back", cloud.len(), ply.display(), back.len());
    Ok(InferSummary { points: back.len(), raw_rmse, refined_rmse })
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("depthfill-infer"));
    run_example(out, 20).map(|_| ())
}
