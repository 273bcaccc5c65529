// Overfits DFNet on eight views of one synthetic scene and reports the
// masked metrics on those same views.
//
// cargo run --release --example train_overfit -- [STEPS]

use std::time::Instant;

use depthfill::dataset::AugmentConfig;
use depthfill::dfnet::DfnetConfig;
use depthfill::objective::{MetricValues, Scope};
use depthfill::synth::{generate_scene_samples, SynthConfig};
use depthfill::train::{evaluate, initial_checkpoint, train, TrainConfig, TrainOptions};

pub struct OverfitSetup {
    pub width: usize,
    pub height: usize,
    pub samples: usize,
    pub hidden: usize,
    pub dense_layers: usize,
    pub growth: usize,
    pub levels: usize,
    pub steps: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Learning rate drops by 5 after this fraction of the steps.
    pub decay_at: f64,
    pub seed: u64,
}

impl Default for OverfitSetup {
    fn default() -> Self {
        Self {
            width: 80,
            height: 64,
            samples: 8,
            hidden: 16,
            dense_layers: 3,
            growth: 8,
            levels: 4,
            steps: 500,
            batch_size: 2,
            lr: 1e-2,
            decay_at: 0.8,
            seed: 1,
        }
    }
}

pub struct OverfitOutcome {
    pub steps: u64,
    pub masked: MetricValues,
    pub global: MetricValues,
}

pub fn run_example(setup: &OverfitSetup) -> Result<OverfitOutcome, Box<dyn std::error::Error>> {
    let synth = SynthConfig { width: setup.width, height: setup.height, views: setup.samples, ..Default::default() };
    let data = generate_scene_samples(&synth, setup.seed, 0)?;
    let model = DfnetConfig {
        hidden: setup.hidden,
        dense_layers: setup.dense_layers,
        growth: setup.growth,
        levels: setup.levels,
        height: setup.height,
        width: setup.width,
        residual: false,
    };
    let per_epoch = data.len().div_ceil(setup.batch_size);
    let epochs = setup.steps / per_epoch;
    let config = TrainConfig {
        lr0: setup.lr,
        decay_epochs: vec![(epochs as f64 * setup.decay_at) as usize],
        epochs,
        batch_size: setup.batch_size,
        seed: setup.seed,
        augment: AugmentConfig::disabled(),
        ..Default::default()
    };
    let loss = config.loss;
    let mut ckpt = initial_checkpoint(model, config)?;

    let start = Instant::now();
    let mut report = |log: &depthfill::train::EpochLog| {
        if (log.epoch + 1) % (epochs / 5).max(1) == 0 {
            println!("epoch {:4} lr {:.1e} loss {:.6} ({:.0?})", log.epoch, log.lr, log.train_loss, start.elapsed());
        }
    };
    train(&mut ckpt, &data, TrainOptions { on_epoch: Some(&mut report), ..Default::default() })?;

    let masked = evaluate(&mut ckpt.net, &data, Scope::Masked, &loss)?.aggregate.values.ok_or("no masked pixels")?;
    let global = evaluate(&mut ckpt.net, &data, Scope::Global, &loss)?.aggregate.values.ok_or("no valid pixels")?;
    println!(
        "{} steps: masked RMSE {:.4} m, d1.05 {:.1}% | global RMSE {:.4} m, d1.05 {:.1}%",
        ckpt.meta.steps, masked.rmse, masked.d105, global.rmse, global.d105
    );
    Ok(OverfitOutcome { steps: ckpt.meta.steps, masked, global })
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut setup = OverfitSetup::default();
    if let Some(steps) = std::env::args().nth(1) {
        setup.steps = steps.parse()?;
    }
    run_example(&setup).map(|_| ())
}
