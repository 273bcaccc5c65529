// Scalar-loop oracles shared by the test targets.
#![allow(dead_code)]

use depthfill::objective::LossConfig;
use depthfill::tensor::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
}

/// Direct convolution: one scalar loop per output element.
pub fn conv_oracle(x: &Tensor<f64>, w: &Tensor<f64>, b: &[f64], stride: usize, pad: usize) -> Tensor<f64> {
    let [n, cin, h, wd] = x.dims4("oracle").unwrap();
    let [cout, _, kh, kw] = w.dims4("oracle").unwrap();
    let ho = (h + 2 * pad - kh) / stride + 1;
    let wo = (wd + 2 * pad - kw) / stride + 1;
    let mut out = Tensor::zeros([n, cout, ho, wo]);
    for bi in 0..n {
        for co in 0..cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = b[co];
                    for ci in 0..cin {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= wd as isize {
                                    continue;
                                }
                                acc += x.data()[((bi * cin + ci) * h + iy as usize) * wd + ix as usize]
                                    * w.data()[((co * cin + ci) * kh + ky) * kw + kx];
                            }
                        }
                    }
                    out.data_mut()[((bi * cout + co) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    out
}

pub fn avg_pool_oracle(x: &Tensor<f64>) -> Tensor<f64> {
    let [n, c, h, w] = x.dims4("oracle").unwrap();
    let mut out = Tensor::zeros([n, c, h / 2, w / 2]);
    for nc in 0..n * c {
        for i in 0..h / 2 {
            for j in 0..w / 2 {
                let at = |y: usize, z: usize| x.data()[(nc * h + y) * w + z];
                out.data_mut()[(nc * (h / 2) + i) * (w / 2) + j] =
                    (at(2 * i, 2 * j) + at(2 * i, 2 * j + 1) + at(2 * i + 1, 2 * j) + at(2 * i + 1, 2 * j + 1)) * 0.25;
            }
        }
    }
    out
}

/// Scatters every input element to its sub-pixel position.
pub fn pixel_shuffle_oracle(x: &Tensor<f64>, r: usize) -> Tensor<f64> {
    let [n, crr, h, w] = x.dims4("oracle").unwrap();
    let c = crr / (r * r);
    let mut out = Tensor::zeros([n, c, h * r, w * r]);
    for b in 0..n {
        for k in 0..crr {
            let (ch, i, j) = (k / (r * r), (k % (r * r)) / r, k % r);
            for y in 0..h {
                for z in 0..w {
                    out.data_mut()[((b * c + ch) * h * r + y * r + i) * w * r + z * r + j] = x.data()[((b * crr + k) * h + y) * w + z];
                }
            }
        }
    }
    out
}

pub fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

pub fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Derivative of `f` along one axis at index `i` of a length-`len` axis.
pub fn derivative(len: usize, i: usize, f: impl Fn(usize) -> f64) -> (f64, Vec<usize>) {
    if len == 1 {
        (0.0, vec![i])
    } else if i == 0 {
        (f(1) - f(0), vec![0, 1])
    } else if i == len - 1 {
        (f(i) - f(i - 1), vec![i - 1, i])
    } else {
        ((f(i + 1) - f(i - 1)) / 2.0, vec![i - 1, i + 1])
    }
}

/// Both loss terms `(L_d, L_s)` recomputed pixel by pixel.
pub fn loss_oracle(pred: &[f64], gt: &[f64], n: usize, h: usize, w: usize, cfg: &LossConfig) -> (f64, f64) {
    let ok = |i: usize| gt[i] >= cfg.lo && gt[i] <= cfg.hi;
    let (mut sd, mut nd) = (0.0, 0.0);
    let (mut ss, mut ns) = (0.0, 0.0);
    for b in 0..n {
        let at = |v: usize, u: usize| b * h * w + v * w + u;
        for v in 0..h {
            for u in 0..w {
                let i = at(v, u);
                if !ok(i) {
                    continue;
                }
                sd += (pred[i] - gt[i]).powi(2);
                nd += 1.0;
                let (gw, cols) = derivative(w, u, |x| gt[at(v, x)]);
                let (gh, rows) = derivative(h, v, |y| gt[at(y, u)]);
                if !cols.iter().all(|&x| ok(at(v, x))) || !rows.iter().all(|&y| ok(at(y, u))) {
                    continue;
                }
                let (pw, _) = derivative(w, u, |x| pred[at(v, x)]);
                let (ph, _) = derivative(h, v, |y| pred[at(y, u)]);
                let np = cross([0.0, 1.0, ph], [1.0, 0.0, pw]);
                let ng = cross([0.0, 1.0, gh], [1.0, 0.0, gw]);
                ss += 1.0 - dot(np, ng) / (dot(np, np).sqrt() * dot(ng, ng).sqrt());
                ns += 1.0;
            }
        }
    }
    (sd / nd, if ns > 0.0 { ss / ns } else { 0.0 })
}

pub fn random_maps(seed: u64, n: usize, h: usize, w: usize, holes: bool) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gt: Vec<f64> = (0..n * h * w)
        .map(|_| if holes && rng.random_bool(0.15) { 0.0 } else { rng.random_range(0.4..1.4) })
        .collect();
    let pred = gt.iter().map(|g| g + rng.random_range(-0.2..0.2)).collect();
    (pred, gt)
}

/// `[rmse, rel, mae, d105, d110, d125]` over the listed pixels.
pub fn metrics_oracle(pred: &[f64], gt: &[f64], idx: &[usize]) -> [f64; 6] {
    let m = idx.len() as f64;
    let rmse = (idx.iter().map(|&i| (pred[i] - gt[i]).powi(2)).sum::<f64>() / m).sqrt();
    let mae = idx.iter().map(|&i| (pred[i] - gt[i]).abs()).sum::<f64>() / m;
    let rel = idx.iter().map(|&i| (pred[i] - gt[i]).abs() / gt[i]).sum::<f64>() / m;
    let delta = |t: f64| {
        100.0 * idx.iter().filter(|&&i| pred[i] > 0.0 && f64::max(pred[i] / gt[i], gt[i] / pred[i]) < t).count() as f64 / m
    };
    [rmse, rel, mae, delta(1.05), delta(1.10), delta(1.25)]
}

pub type M4 = [[f64; 4]; 4];

pub fn matmul(a: &M4, b: &M4) -> M4 {
    let mut c = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                c[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    c
}

pub fn max_diff(a: &M4, b: &M4) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..4 {
        for j in 0..4 {
            m = m.max((a[i][j] - b[i][j]).abs());
        }
    }
    m
}

pub fn identity4() -> M4 {
    let mut m = [[0.0; 4]; 4];
    for (i, row) in m.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    m
}

/// Minimal ASCII PLY reader: header keywords, then whitespace-separated rows.
pub fn parse_ply_text(text: &str) -> Vec<Vec<f64>> {
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("ply"));
    let mut count = None;
    let mut props = 0;
    for line in lines.by_ref() {
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["format", "ascii", "1.0"] | ["comment", ..] => {}
            ["element", "vertex", n] => count = Some(n.parse::<usize>().unwrap()),
            ["property", _, _] => props += 1,
            ["end_header"] => break,
            other => panic!("unexpected header line {other:?}"),
        }
    }
    let rows: Vec<Vec<f64>> = lines
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split_whitespace().map(|x| x.parse().unwrap()).collect())
        .collect();
    assert_eq!(Some(rows.len()), count);
    assert!(rows.iter().all(|r| r.len() == props));
    rows
}

/// Every file under `root` keyed by relative path.
pub fn tree(root: &std::path::Path) -> std::collections::BTreeMap<String, Vec<u8>> {
    let mut out = std::collections::BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}
