//! Depth + surface-normal training loss over the valid depth range, and the
//! RMSE / REL / MAE / δ evaluation metrics.

mod loss;
mod metrics;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{DepthMap, Mask};

pub use loss::{depth_loss, LossTerms};
pub use metrics::{metrics, metrics_f64, write_metrics_csv, MetricValues, MetricsAccumulator, MetricsReport, Scope, METRICS_HEADER};

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("invalid loss config: {0}")]
    Config(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("no ground-truth pixel inside the valid depth range; cannot form a loss")]
    NoValidPixels,
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = ObjectiveError> = std::result::Result<T, E>;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    /// Weight of the normal term.
    pub beta: f64,
    /// Ground truth outside `[lo, hi]` meters is ignored.
    pub lo: f64,
    pub hi: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { beta: 0.001, lo: 0.3, hi: 1.5 }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(ObjectiveError::Config(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if !(self.lo > 0.0 && self.lo < self.hi && self.hi.is_finite()) {
            return Err(ObjectiveError::Config(format!("need 0 < lo < hi, got [{}, {}]", self.lo, self.hi)));
        }
        Ok(())
    }

    /// Closed interval test.
    pub fn is_valid(&self, gt: f64) -> bool {
        self.lo <= gt && gt <= self.hi
    }
}

/// Pixels whose ground truth lies in `[lo, hi]`.
pub fn valid_mask(gt: &DepthMap, config: &LossConfig) -> Mask {
    gt.map(|&d| config.is_valid(d as f64))
}
