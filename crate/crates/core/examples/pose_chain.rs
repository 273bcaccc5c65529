// Object poses along a camera trajectory: one tracked observation is chained
// through the tracker, then carried to every other viewpoint.
//
// cargo run --release --example pose_chain

use depthfill::geometry::{object_pose_in_camera, propagate_pose, RigidTransform};
use depthfill::synth::{trajectory, SynthConfig};

pub fn run_example(views: usize) -> Result<f64, Box<dyn std::error::Error>> {
    let config = SynthConfig { views, ..Default::default() };
    let cams = trajectory(&config)?;

    // tracker and marker rigs are fixed in the world
    let world_from_tracker = RigidTransform::from_axis_angle([0.0, 0.0, 1.0], 0.3, [0.5, -0.2, 0.8]);
    let tracker_from_marker = RigidTransform::from_axis_angle([1.0, 1.0, 0.0], 0.7, [-0.4, 0.3, -0.7]);
    let marker_from_object = RigidTransform::from_translation([0.0, 0.0, -0.05]);
    let world_from_object = world_from_tracker.compose(&tracker_from_marker).compose(&marker_from_object);

    let k0 = 0;
    let cam0_from_tracker = cams[k0].compose(&world_from_tracker);
    let pose_k0 = object_pose_in_camera(&cam0_from_tracker, &tracker_from_marker, &marker_from_object);

    let mut worst = 0.0f64;
    for (k, cam) in cams.iter().enumerate() {
        let carried = propagate_pose(cam, &cams[k0], &pose_k0);
        let direct = cam.compose(&world_from_object);
        let err = carried.max_abs_diff(&direct);
        worst = worst.max(err);
        let t = carried.translation();
        println!("view {k:2}: object at ({:+.3}, {:+.3}, {:+.3}) m, chain error {err:.1e}", t[0], t[1], t[2]);
    }
    Ok(worst)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let worst = run_example(8)?;
    println!("largest deviation from the direct pose: {worst:.1e}");
    Ok(())
}
