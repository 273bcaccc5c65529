// Runs each example with small parameters.

macro_rules! example {
    ($name:ident, $file:literal) => {
        #[allow(dead_code)]
        mod $name {
            include!(concat!(env!("CARGO_MANIFEST_DIR"), "/examples/", $file));
        }
    };
}

example!(generate, "generate_dataset.rs");
example!(pose, "pose_chain.rs");
example!(render, "render_scene.rs");
example!(gradients, "gradient_check.rs");
example!(metric, "metrics.rs");
example!(infer, "infer_point_cloud.rs");
example!(overfit, "train_overfit.rs");

#[test]
fn generate_dataset_example() {
    let dir = tempfile::tempdir().unwrap();
    generate::run_example(dir.path().to_path_buf()).unwrap();
    assert!(dir.path().join("split.json").exists());
}

#[test]
fn pose_chain_example() {
    let worst = pose::run_example(6).unwrap();
    assert!(worst < 1e-12, "{worst:e}");
}

#[test]
fn render_scene_example() {
    let dir = tempfile::tempdir().unwrap();
    let points = render::run_example(dir.path().join("scene.ply")).unwrap();
    assert!(points > 0);
}

#[test]
fn gradient_check_example() {
    for (name, err) in gradients::run_example(8).unwrap() {
        assert!(err <= 1e-4, "{name}: {err:e}");
    }
}

#[test]
fn metrics_example() {
    let reports = metric::run_example().unwrap();
    let masked = reports[0].values.unwrap();
    assert_eq!((masked.d105, masked.d110, masked.d125), (0.0, 0.0, 100.0));
    assert_eq!(reports[1].pixel_count, 8);
}

#[test]
fn infer_point_cloud_example() {
    let dir = tempfile::tempdir().unwrap();
    let summary = infer::run_example(dir.path().to_path_buf(), 2).unwrap();
    assert!(summary.points > 0 && summary.points <= 64 * 48);
    assert!(summary.refined_rmse.is_finite() && summary.raw_rmse.is_finite());
}

#[test]
fn train_overfit_example() {
    let setup = overfit::OverfitSetup { width: 32, height: 32, samples: 2, hidden: 4, dense_layers: 1, growth: 4, levels: 2, steps: 4, ..Default::default() };
    let outcome = overfit::run_example(&setup).unwrap();
    assert_eq!(outcome.steps, 4);
    assert!(outcome.masked.rmse.is_finite());
}

example!(augmentation, "augment.rs");

#[test]
fn augment_example() {
    let worst = augmentation::run_example(4).unwrap();
    assert!(worst < 1e-6, "{worst:e}");
}
