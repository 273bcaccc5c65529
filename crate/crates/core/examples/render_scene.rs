// Renders one cluttered scene from a few viewpoints, corrupts the transparent
// regions like a depth sensor would and exports the ground truth of the first
// view as a colored point cloud.
//
// cargo run --release --example render_scene -- [OUT.ply]

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use depthfill::geometry::{deproject_colored, write_ply};
use depthfill::synth::{generate_scene_samples, SynthConfig};

pub fn run_example(out: PathBuf) -> Result<usize, Box<dyn std::error::Error>> {
    let config = SynthConfig { width: 160, height: 120, views: 3, ..Default::default() };
    let samples = generate_scene_samples(&config, 5, 0)?;
    for (k, s) in samples.iter().enumerate() {
        let mask = s.mask.data();
        let inside = mask.iter().filter(|&&m| m).count();
        let dropped = mask.iter().zip(s.raw_depth.data()).filter(|(&m, &d)| m && d == 0.0).count();
        let bled = mask
            .iter()
            .zip(s.raw_depth.data().iter().zip(s.gt_depth.data()))
            .filter(|(&m, (&r, &g))| m && r > 0.0 && (r - g).abs() > 0.05)
            .count();
        println!("view {k}: {inside} transparent pixels, {dropped} dropped, {bled} showing the surface behind");
    }

    let first = &samples[0];
    let cloud = deproject_colored(&first.gt_depth, &config.intrinsics(), None, &first.rgb)?;
    write_ply(&mut BufWriter::new(File::create(&out)?), &cloud)?;
    println!("{} points written to {}", cloud.len(), out.display());
    Ok(cloud.len())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("scene.ply"));
    run_example(out).map(|_| ())
}
