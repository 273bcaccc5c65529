// Training-time augmentation of one synthetic view: flips and rotations move
// depth, mask and normals together, color jitter only touches the RGB.
//
// cargo run --release --example augment

use depthfill::dataset::{augment, AugmentConfig};
use depthfill::geometry::normals_from_depth;
use depthfill::synth::{generate_scene_samples, SynthConfig};

/// Largest gap between the carried normals and normals recomputed from the
/// transformed ground-truth depth, over pixels valid in both.
pub fn run_example(seeds: u64) -> Result<f64, Box<dyn std::error::Error>> {
    let synth = SynthConfig { width: 64, height: 64, views: 1, ..Default::default() };
    let sample = generate_scene_samples(&synth, 3, 0)?.remove(0);
    let geometric = AugmentConfig { p_noise: 0.0, p_color: 0.0, p_flip: 0.5, p_rotate: 1.0, ..Default::default() };
    let reference = normals_from_depth(&sample.gt_depth);

    let mut worst: f64 = 0.0;
    for seed in 0..seeds {
        let out = augment(&sample, seed, &geometric);
        let derived = normals_from_depth(&out.gt_depth);
        let carried = augment_normals(&reference.normals, &sample, seed, &geometric);
        let mut gap: f64 = 0.0;
        for ((a, b), ok) in derived.normals.data().iter().zip(carried.data()).zip(derived.valid.data()) {
            if *ok && *b != [0.0; 3] {
                gap = gap.max((0..3).map(|k| (a[k] - b[k]).abs() as f64).fold(0.0, f64::max));
            }
        }
        let masked = out.mask.data().iter().filter(|&&m| m).count();
        println!("seed {seed}: {masked} transparent pixels, derived vs carried normals {gap:.1e}");
        worst = worst.max(gap);
    }

    let color = AugmentConfig { p_color: 1.0, ..AugmentConfig::disabled() };
    let jittered = augment(&sample, 7, &color);
    let changed = jittered.rgb.data().iter().zip(sample.rgb.data()).filter(|(a, b)| a != b).count();
    println!("color jitter changed {changed} of {} pixels, depth untouched: {}", sample.rgb.data().len(), jittered.gt_depth == sample.gt_depth);
    Ok(worst)
}

/// Runs the depth-derived normals through the same geometric transform by
/// storing them in the sample's normal plane.
fn augment_normals(
    normals: &depthfill::geometry::NormalMap,
    sample: &depthfill::dataset::Sample,
    seed: u64,
    config: &AugmentConfig,
) -> depthfill::geometry::NormalMap {
    let mut s = sample.clone();
    s.normals = normals.clone();
    augment(&s, seed, config).normals
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let worst = run_example(6)?;
    println!("largest normal mismatch: {worst:.1e}");
    Ok(())
}
