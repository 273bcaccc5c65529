use std::path::Path;
use std::process::{Command, Output};

use depthfill::dataset::{read_depth_png, write_depth_png, write_rgb_png};
use depthfill::geometry::{read_ply, CameraIntrinsics, DepthMap, RgbImage};

fn depthfill(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_depthfill")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(out: &Path) {
    let res = depthfill(&[
        "generate", "--out", path(out), "--scenes", "3", "--views", "2", "--width", "64", "--height", "48", "--seed", "4",
        "--holdout", "1",
    ]);
    assert_eq!(code(&res), 0, "{}", String::from_utf8_lossy(&res.stderr));
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    reader.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn argument_and_config_errors_exit_2() {
    assert_eq!(code(&depthfill(&["frobnicate"])), 2);
    assert_eq!(code(&depthfill(&["generate"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let out = depthfill(&["generate", "--out", path(dir.path()), "--scenes", "0"]);
    assert_eq!(code(&out), 2);
    assert_eq!(code(&depthfill(&["--help"])), 0);
}

#[test]
fn missing_data_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope");
    assert_eq!(code(&depthfill(&["verify", "--data", path(&missing)])), 1);
    assert_eq!(code(&depthfill(&["eval", "--data", path(&missing), "--oracle-gt"])), 1);
}

#[test]
fn verify_and_oracle_eval() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    generate(&data);
    let samples = depthfill::dataset::list_samples(&data).unwrap().len();
    assert!(samples > 0);

    let out = depthfill(&["verify", "--data", path(&data)]);
    assert_eq!(code(&out), 0);
    let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), samples);
    assert!(rows.iter().all(|r| r[1] == "accept"));

    let report = dir.path().join("gt.csv");
    let out = depthfill(&["eval", "--data", path(&data), "--oracle-gt", "--report", path(&report)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let rows = csv_rows(&std::fs::read_to_string(&report).unwrap());
    assert_eq!(rows.len(), samples + 1);
    let all = rows.last().unwrap();
    assert_eq!(all[0], "all");
    // rmse, rel, mae zero; every delta 100
    assert_eq!(&all[3..9], ["0", "0", "0", "100", "100", "100"]);
}

#[test]
fn train_eval_infer_round() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    generate(&data);
    let ckpt = dir.path().join("ckpt");
    let small = ["--hidden", "4", "--dense-layers", "1", "--growth", "4", "--levels", "2", "--batch-size", "2"];
    let mut args = vec!["train", "--data", path(&data), "--out", path(&ckpt), "--epochs", "1", "--deterministic"];
    args.extend(small);
    let out = depthfill(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let log = std::fs::read_to_string(ckpt.join("log.csv")).unwrap();
    assert_eq!(log.lines().count(), 2);

    // a fresh run into a used directory is refused
    assert_eq!(code(&depthfill(&args)), 2);
    // resume may only change the epoch count
    let out = depthfill(&["train", "--data", path(&data), "--out", path(&ckpt), "--resume", path(&ckpt), "--lr", "0.1"]);
    assert_eq!(code(&out), 2);
    let out = depthfill(&["train", "--data", path(&data), "--out", path(&ckpt), "--resume", path(&ckpt), "--epochs", "2"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let log = std::fs::read_to_string(ckpt.join("log.csv")).unwrap();
    assert_eq!(log.lines().nth(2).unwrap().split(',').next(), Some("1"));

    let maps = dir.path().join("maps");
    let report = dir.path().join("eval.csv");
    let out = depthfill(&[
        "eval", "--data", path(&data), "--ckpt", path(&ckpt), "--report", path(&report), "--error-maps", path(&maps),
        "--scope", "global",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let samples = depthfill::dataset::list_samples(&data).unwrap().len();
    assert_eq!(std::fs::read_dir(&maps).unwrap().count(), samples);
    assert_eq!(csv_rows(&std::fs::read_to_string(&report).unwrap()).len(), samples + 1);

    // full-size input is resized to the network and back
    let (w, h) = (640, 480);
    let rgb = RgbImage::from_fn(w, h, |u, v| [(u % 256) as u8, (v % 256) as u8, ((u + v) % 256) as u8]);
    let depth = DepthMap::from_fn(w, h, |u, v| if (u / 40 + v / 40) % 5 == 0 { 0.0 } else { 0.6 + 0.0004 * v as f32 });
    let (rgb_path, depth_path) = (dir.path().join("rgb.png"), dir.path().join("raw.png"));
    write_rgb_png(&rgb_path, &rgb).unwrap();
    write_depth_png(&depth_path, &depth).unwrap();
    let intr_path = dir.path().join("intrinsics.json");
    std::fs::write(&intr_path, serde_json::to_string(&CameraIntrinsics::from_fov(w, h, 60.0)).unwrap()).unwrap();
    let (refined, cloud) = (dir.path().join("refined.png"), dir.path().join("refined.ply"));
    let out = depthfill(&[
        "infer", "--rgb", path(&rgb_path), "--depth", path(&depth_path), "--ckpt", path(&ckpt), "--out", path(&refined),
        "--cloud", path(&cloud), "--intrinsics", path(&intr_path),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let pred = read_depth_png(&refined).unwrap();
    assert_eq!(pred.dims(), (w, h));
    let points = read_ply(std::io::BufReader::new(std::fs::File::open(&cloud).unwrap())).unwrap();
    assert_eq!(points.len(), pred.data().iter().filter(|&&d| d > 0.0).count());

    // --cloud without intrinsics is a config error
    let out = depthfill(&[
        "infer", "--rgb", path(&rgb_path), "--depth", path(&depth_path), "--ckpt", path(&ckpt), "--out", path(&refined),
        "--cloud", path(&cloud),
    ]);
    assert_eq!(code(&out), 2);
}
