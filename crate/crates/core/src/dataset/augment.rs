use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Sample;
use crate::geometry::{CameraIntrinsics, Grid};

/// Per-transform probabilities and magnitudes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub p_flip: f64,
    pub p_rotate: f64,
    pub p_noise: f64,
    /// Standard deviation in meters of the noise added to raw depth.
    pub noise_sigma: f64,
    pub p_color: f64,
    pub hue_deg: f64,
    pub lightness: f64,
    pub saturation: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            p_flip: 0.5,
            p_rotate: 0.5,
            p_noise: 0.5,
            noise_sigma: 0.005,
            p_color: 0.5,
            hue_deg: 10.0,
            lightness: 0.1,
            saturation: 0.1,
        }
    }
}

impl AugmentConfig {
    pub fn disabled() -> Self {
        Self { p_flip: 0.0, p_rotate: 0.0, p_noise: 0.0, p_color: 0.0, ..Self::default() }
    }
}

/// RGB in `[0, 1]` to (hue in `[0, 1)`, lightness, saturation).
pub fn rgb_to_hls(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let (maxc, minc) = (r.max(g).max(b), r.min(g).min(b));
    let l = (minc + maxc) / 2.0;
    if maxc == minc {
        return (0.0, l, 0.0);
    }
    let span = maxc - minc;
    let s = if l <= 0.5 { span / (maxc + minc) } else { span / (2.0 - maxc - minc) };
    let (rc, gc, bc) = ((maxc - r) / span, (maxc - g) / span, (maxc - b) / span);
    let h = if r == maxc {
        bc - gc
    } else if g == maxc {
        2.0 + rc - bc
    } else {
        4.0 + gc - rc
    };
    ((h / 6.0).rem_euclid(1.0), l, s)
}

pub fn hls_to_rgb(h: f64, l: f64, s: f64) -> (f64, f64, f64) {
    if s == 0.0 {
        return (l, l, l);
    }
    let m2 = if l <= 0.5 { l * (1.0 + s) } else { l + s - l * s };
    let m1 = 2.0 * l - m2;
    let channel = |hue: f64| {
        let hue = hue.rem_euclid(1.0);
        if hue < 1.0 / 6.0 {
            m1 + (m2 - m1) * hue * 6.0
        } else if hue < 0.5 {
            m2
        } else if hue < 2.0 / 3.0 {
            m1 + (m2 - m1) * (2.0 / 3.0 - hue) * 6.0
        } else {
            m1
        }
    };
    (channel(h + 1.0 / 3.0), channel(h), channel(h - 1.0 / 3.0))
}

fn to_u8(x: f64) -> u8 {
    (x * 255.0).round().clamp(0.0, 255.0) as u8
}

/// Shifts hue (degrees), lightness and saturation of every pixel by the same offsets.
pub fn shift_hls(rgb: &Grid<[u8; 3]>, dh_deg: f64, dl: f64, ds: f64) -> Grid<[u8; 3]> {
    rgb.map(|p| {
        let (h, l, s) = rgb_to_hls(p[0] as f64 / 255.0, p[1] as f64 / 255.0, p[2] as f64 / 255.0);
        let (r, g, b) = hls_to_rgb(h + dh_deg / 360.0, (l + dl).clamp(0.0, 1.0), (s + ds).clamp(0.0, 1.0));
        [to_u8(r), to_u8(g), to_u8(b)]
    })
}

fn flip_sample(s: &Sample) -> Sample {
    let mut meta = s.meta.clone();
    meta.intrinsics.cx = meta.intrinsics.width as f64 - 1.0 - meta.intrinsics.cx;
    Sample {
        rgb: s.rgb.flip_horizontal(),
        raw_depth: s.raw_depth.flip_horizontal(),
        gt_depth: s.gt_depth.flip_horizontal(),
        mask: s.mask.flip_horizontal(),
        normals: s.normals.flip_horizontal().map(|n| [-n[0], n[1], n[2]]),
        meta,
    }
}

fn rotate_sample(s: &Sample) -> Sample {
    let i = s.meta.intrinsics;
    let mut meta = s.meta.clone();
    meta.intrinsics = CameraIntrinsics {
        fx: i.fy,
        fy: i.fx,
        cx: i.cy,
        cy: i.width as f64 - 1.0 - i.cx,
        width: i.height,
        height: i.width,
    };
    Sample {
        rgb: s.rgb.rotate90_ccw(),
        raw_depth: s.raw_depth.rotate90_ccw(),
        gt_depth: s.gt_depth.rotate90_ccw(),
        mask: s.mask.rotate90_ccw(),
        normals: s.normals.rotate90_ccw().map(|n| [n[1], -n[0], n[2]]),
        meta,
    }
}

/// Applies flip, quarter-turn rotation, raw-depth noise and HLS jitter, each
/// with its configured probability. Quarter turns change the image shape, so
/// non-square samples only rotate by 180 degrees. Object poses in the metadata
/// keep referring to the original view; intrinsics follow the transform.
pub fn augment(sample: &Sample, seed: u64, config: &AugmentConfig) -> Sample {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = sample.clone();
    if rng.random_bool(config.p_flip.clamp(0.0, 1.0)) {
        out = flip_sample(&out);
    }
    if rng.random_bool(config.p_rotate.clamp(0.0, 1.0)) {
        let (w, h) = out.dims();
        let turns = if w == h { rng.random_range(1..=3) } else { 2 };
        for _ in 0..turns {
            out = rotate_sample(&out);
        }
    }
    if rng.random_bool(config.p_noise.clamp(0.0, 1.0)) && config.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, config.noise_sigma).expect("positive sigma");
        for d in out.raw_depth.data_mut() {
            if *d > 0.0 {
                *d = (*d as f64 + normal.sample(&mut rng)).max(0.0) as f32;
            }
        }
    }
    if rng.random_bool(config.p_color.clamp(0.0, 1.0)) {
        let dh = rng.random_range(-1.0..=1.0) * config.hue_deg;
        let dl = rng.random_range(-1.0..=1.0) * config.lightness;
        let ds = rng.random_range(-1.0..=1.0) * config.saturation;
        out.rgb = shift_hls(&out.rgb, dh, dl, ds);
    }
    out
}
