use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Result, SynthError};
use crate::geometry::{DepthMap, Mask};

/// How a depth sensor fails on transparent surfaces.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorruptionModel {
    /// Probability that a pixel reports the surface behind the object.
    pub p_bleed: f64,
    /// Probability that a (non-bleeding) pixel reports nothing.
    pub p_drop: f64,
    /// Standard deviation in meters of the noise on surviving pixels.
    pub sigma: f64,
    /// Mask growth in pixels (square neighborhood).
    pub dilation: usize,
    pub blob_count: usize,
    /// Radius in pixels of each blob of missing depth.
    pub blob_radius: usize,
}

impl Default for CorruptionModel {
    fn default() -> Self {
        Self { p_bleed: 0.2, p_drop: 0.6, sigma: 0.01, dilation: 2, blob_count: 2, blob_radius: 4 }
    }
}

impl CorruptionModel {
    /// The model that changes nothing.
    pub fn none() -> Self {
        Self { p_bleed: 0.0, p_drop: 0.0, sigma: 0.0, dilation: 0, blob_count: 0, blob_radius: 0 }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [("p_bleed", self.p_bleed), ("p_drop", self.p_drop)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SynthError::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(SynthError::Config(format!("sigma must be finite and non-negative, got {}", self.sigma)));
        }
        Ok(())
    }
}

/// Grows `mask` by `radius` pixels in the Chebyshev metric.
pub fn dilate(mask: &Mask, radius: usize) -> Mask {
    if radius == 0 {
        return mask.clone();
    }
    let (w, h) = mask.dims();
    // separable: rows then columns
    let mut rows = Mask::new(w, h, false);
    for v in 0..h {
        for u in 0..w {
            if *mask.get(u, v) {
                for x in u.saturating_sub(radius)..=(u + radius).min(w - 1) {
                    rows.set(x, v, true);
                }
            }
        }
    }
    let mut out = Mask::new(w, h, false);
    for v in 0..h {
        for u in 0..w {
            if *rows.get(u, v) {
                for y in v.saturating_sub(radius)..=(v + radius).min(h - 1) {
                    out.set(u, y, true);
                }
            }
        }
    }
    out
}

/// Simulated raw depth: pixels outside the dilated mask keep the ground
/// truth; inside, each pixel bleeds through to `behind` with `p_bleed`,
/// otherwise drops out with `p_drop`, otherwise gets Gaussian noise. Blobs of
/// missing depth are then punched into the dilated mask.
pub fn corrupt_depth(
    gt: &DepthMap,
    mask: &Mask,
    behind: &DepthMap,
    model: &CorruptionModel,
    seed: u64,
) -> Result<DepthMap> {
    gt.ensure_dims(mask)?;
    gt.ensure_dims(behind)?;
    model.validate()?;
    let region = dilate(mask, model.dilation);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = (model.sigma > 0.0).then(|| Normal::new(0.0, model.sigma).expect("validated sigma"));
    let mut out = gt.clone();
    let (w, h) = gt.dims();
    for v in 0..h {
        for u in 0..w {
            if !*region.get(u, v) {
                continue;
            }
            let d = if rng.random_bool(model.p_bleed) {
                *behind.get(u, v)
            } else if rng.random_bool(model.p_drop) {
                0.0
            } else if let Some(n) = &noise {
                let g = *gt.get(u, v);
                if g > 0.0 {
                    (g as f64 + n.sample(&mut rng)).max(0.0) as f32
                } else {
                    0.0
                }
            } else {
                *gt.get(u, v)
            };
            out.set(u, v, d);
        }
    }
    let inside: Vec<(usize, usize)> =
        (0..h).flat_map(|v| (0..w).map(move |u| (u, v))).filter(|&(u, v)| *region.get(u, v)).collect();
    if !inside.is_empty() {
        let r = model.blob_radius as isize;
        for _ in 0..model.blob_count {
            let (cu, cv) = inside[rng.random_range(0..inside.len())];
            for dv in -r..=r {
                for du in -r..=r {
                    let (x, y) = (cu as isize + du, cv as isize + dv);
                    if du * du + dv * dv > r * r || x < 0 || y < 0 || x >= w as isize || y >= h as isize {
                        continue;
                    }
                    if *region.get(x as usize, y as usize) {
                        out.set(x as usize, y as usize, 0.0);
                    }
                }
            }
        }
    }
    Ok(out)
}
