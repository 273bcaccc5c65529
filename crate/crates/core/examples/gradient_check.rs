// Finite-difference check of the conv / batch-norm stack, the depth loss and
// a small DFNet, all in f64.
//
// cargo run --release --example gradient_check

use std::collections::BTreeMap;

use depthfill::dfnet::{DfNet, DfnetConfig};
use depthfill::objective::{depth_loss, LossConfig};
use depthfill::tensor::gradcheck::{check_gradients, project, GradCheckOptions};
use depthfill::tensor::{BatchNormMode, BatchNormState, Tensor, BN_EPSILON};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], lo: f64, hi: f64, seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(lo..hi))
}

/// Returns the worst relative error per check.
pub fn run_example(size: usize) -> Result<Vec<(&'static str, f64)>, Box<dyn std::error::Error>> {
    let mut results = Vec::new();

    let x = random(&[2, 3, size, size], -1.0, 1.0, 1);
    let w = random(&[4, 3, 3, 3], -0.5, 0.5, 2);
    let report = check_gradients(
        &[x, w],
        |tape, v| {
            let y = tape.conv2d(&v[0], &v[1], None, 1, 1)?;
            let mut state = BatchNormState::new(4);
            let gamma = tape.constant(Tensor::full([4], 1.3));
            let beta = tape.constant(Tensor::full([4], 0.2));
            let y = tape.batch_norm(&y, &gamma, &beta, &mut state, BatchNormMode::Train, BN_EPSILON)?;
            let y = tape.pixel_shuffle(&y, 2)?;
            project(tape, &y, 5)
        },
        &GradCheckOptions::default(),
    )?;
    results.push(("conv + batch norm + shuffle", report.max_relative_error()));

    let pred = random(&[1, 1, size, size], 0.5, 1.5, 4);
    let gt = random(&[1, 1, size, size], 0.5, 1.5, 5);
    let report = check_gradients(
        &[pred],
        |tape, v| {
            let (loss, _) = depth_loss(tape, &v[0], &gt, &LossConfig::default())
                .map_err(|e| depthfill::tensor::TensorError::InvalidArgument { op: "loss", detail: e.to_string() })?;
            Ok(loss)
        },
        &GradCheckOptions::default(),
    )?;
    results.push(("depth + normal loss", report.max_relative_error()));

    let config = DfnetConfig { hidden: 8, dense_layers: 2, growth: 4, levels: 2, height: size, width: size, residual: false };
    let mut net = DfNet::<f64>::new(config, 11)?;
    let rgb = random(&[2, 3, size, size], 0.0, 1.0, 6);
    let depth = random(&[2, 1, size, size], 0.3, 1.5, 7);
    let names: Vec<String> = net.specs().iter().map(|s| s.name.clone()).collect();
    let values: Vec<Tensor<f64>> = names.iter().map(|n| net.param(n).unwrap().clone()).collect();
    let opts = GradCheckOptions { step: 1e-7, max_coords: Some(4), seed: 3 };
    let report = check_gradients(
        &values,
        |tape, vars| {
            let bound: BTreeMap<String, _> = names.iter().cloned().zip(vars.iter().cloned()).collect();
            let out = net.forward(tape, &bound, &rgb, &depth, BatchNormMode::Train)?;
            project(tape, &out, 7)
        },
        &opts,
    )?;
    results.push(("full network", report.max_relative_error()));
    Ok(results)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (name, err) in run_example(16)? {
        println!("{name:28} max relative error {err:.2e}");
    }
    Ok(())
}
