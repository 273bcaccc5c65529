use serde::{Deserialize, Serialize};

use crate::geometry::RgbImage;

/// Thresholds for the automatic quality screen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Minimum variance of the Laplacian response.
    pub blur_threshold: f64,
    /// Maximum fraction of pixels darker than 5 or brighter than 250.
    pub exposure_hi: f64,
    /// Minimum number of occupied intensity bins (of 256).
    pub exposure_lo: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { blur_threshold: 10.0, exposure_hi: 0.5, exposure_lo: 16 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ImageStats {
    pub laplacian_variance: f64,
    pub clipped_fraction: f64,
    pub occupied_bins: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Verdict {
    Accept,
    Reject(String),
}

impl Verdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, Verdict::Accept)
    }
}

impl ImageStats {
    pub fn of(rgb: &RgbImage) -> Self {
        let (w, h) = rgb.dims();
        let gray: Vec<f64> =
            rgb.data().iter().map(|p| 0.299 * p[0] as f64 + 0.587 * p[1] as f64 + 0.114 * p[2] as f64).collect();

        let mut responses = Vec::with_capacity(w.saturating_sub(2) * h.saturating_sub(2));
        for v in 1..h.saturating_sub(1) {
            for u in 1..w.saturating_sub(1) {
                let g = |du: isize, dv: isize| gray[(v as isize + dv) as usize * w + (u as isize + du) as usize];
                responses.push(g(0, -1) + g(-1, 0) + g(1, 0) + g(0, 1) - 4.0 * g(0, 0));
            }
        }
        let laplacian_variance = if responses.is_empty() {
            0.0
        } else {
            let n = responses.len() as f64;
            let mean = responses.iter().sum::<f64>() / n;
            responses.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n
        };

        let mut hist = [0usize; 256];
        let mut clipped = 0usize;
        for &g in &gray {
            if !(5.0..=250.0).contains(&g) {
                clipped += 1;
            }
            hist[(g.floor() as usize).min(255)] += 1;
        }
        Self {
            laplacian_variance,
            clipped_fraction: if gray.is_empty() { 0.0 } else { clipped as f64 / gray.len() as f64 },
            occupied_bins: hist.iter().filter(|&&c| c > 0).count(),
        }
    }
}

/// Screens an RGB frame for blur (Laplacian variance) and bad exposure
/// (clipped fraction, histogram spread).
pub fn verify_sample(rgb: &RgbImage, config: &VerifyConfig) -> (Verdict, ImageStats) {
    let stats = ImageStats::of(rgb);
    let verdict = if stats.laplacian_variance < config.blur_threshold {
        Verdict::Reject(format!(
            "blurry: laplacian variance {:.3} < {}",
            stats.laplacian_variance, config.blur_threshold
        ))
    } else if stats.clipped_fraction > config.exposure_hi {
        Verdict::Reject(format!(
            "exposure: clipped fraction {:.3} > {}",
            stats.clipped_fraction, config.exposure_hi
        ))
    } else if stats.occupied_bins < config.exposure_lo {
        Verdict::Reject(format!("exposure: {} occupied bins < {}", stats.occupied_bins, config.exposure_lo))
    } else {
        Verdict::Accept
    };
    (verdict, stats)
}
