// Generates a small cluttered dataset, screens it and writes an
// object-held-out split.
//
// cargo run --release --example generate_dataset -- [OUT_DIR]

use std::path::PathBuf;

use depthfill::dataset::{list_samples, load_sample, VerifyConfig};
use depthfill::synth::{generate_dataset, SynthConfig};

pub fn run_example(out: PathBuf) -> Result<(), Box<dyn std::error::Error>> {
    let config = SynthConfig { width: 160, height: 120, views: 4, ..Default::default() };
    let summary = generate_dataset(&out, &config, 3, 42, 2, &VerifyConfig::default())?;
    println!(
        "{} scenes, {} samples written, {} rejected",
        summary.scenes, summary.samples, summary.rejected
    );
    if let Some(split) = &summary.split {
        println!("held-out objects {:?}: test scenes {:?}", split.held_out_objects, split.test_scenes);
    }

    let first = list_samples(&out)?.into_iter().next().ok_or("no samples written")?;
    let sample = load_sample(&first)?;
    let masked = sample.mask.data().iter().filter(|&&m| m).count();
    let holes = sample
        .mask
        .data()
        .iter()
        .zip(sample.raw_depth.data())
        .filter(|(&m, &d)| m && d == 0.0)
        .count();
    println!("{}: {masked} transparent pixels, {holes} of them without raw depth", first.display());
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("depthfill-demo"));
    run_example(out)
}
