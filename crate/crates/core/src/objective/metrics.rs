use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{LossConfig, ObjectiveError, Result};
use crate::geometry::{DepthMap, Mask};

pub const METRICS_HEADER: [&str; 8] = ["scope", "pixel_count", "rmse", "rel", "mae", "d105", "d110", "d125"];

/// Which pixels a report covers.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    /// Transparent mask intersected with the valid depth range.
    #[default]
    Masked,
    /// Every pixel in the valid depth range.
    Global,
}

impl Scope {
    pub fn as_str(self) -> &'static str {
        match self {
            Scope::Masked => "masked",
            Scope::Global => "global",
        }
    }
}

impl std::str::FromStr for Scope {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "masked" => Ok(Scope::Masked),
            "global" => Ok(Scope::Global),
            other => Err(format!("unknown scope {other:?}, expected masked or global")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricValues {
    pub rmse: f64,
    pub rel: f64,
    pub mae: f64,
    /// Percentages of pixels with `max(d/d*, d*/d)` strictly below 1.05, 1.10, 1.25.
    pub d105: f64,
    pub d110: f64,
    pub d125: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scope: Scope,
    pub pixel_count: u64,
    /// `None` when no pixel was evaluated.
    pub values: Option<MetricValues>,
}

/// Pooled sums; merging accumulators weights samples by pixel count.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MetricsAccumulator {
    pub count: u64,
    pub sum_sq: f64,
    pub sum_abs: f64,
    pub sum_rel: f64,
    pub within: [u64; 3],
}

const THRESHOLDS: [f64; 3] = [1.05, 1.10, 1.25];

impl MetricsAccumulator {
    pub fn add(&mut self, pred: f64, gt: f64) {
        let e = pred - gt;
        self.count += 1;
        self.sum_sq += e * e;
        self.sum_abs += e.abs();
        self.sum_rel += e.abs() / gt;
        let ratio = if pred > 0.0 { (pred / gt).max(gt / pred) } else { f64::INFINITY };
        for (hits, t) in self.within.iter_mut().zip(THRESHOLDS) {
            if ratio < t {
                *hits += 1;
            }
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.count += other.count;
        self.sum_sq += other.sum_sq;
        self.sum_abs += other.sum_abs;
        self.sum_rel += other.sum_rel;
        for (a, b) in self.within.iter_mut().zip(other.within) {
            *a += b;
        }
    }

    pub fn report(&self, scope: Scope) -> MetricsReport {
        let values = (self.count > 0).then(|| {
            let n = self.count as f64;
            let pct = |k: usize| 100.0 * self.within[k] as f64 / n;
            MetricValues {
                rmse: (self.sum_sq / n).sqrt(),
                rel: self.sum_rel / n,
                mae: self.sum_abs / n,
                d105: pct(0),
                d110: pct(1),
                d125: pct(2),
            }
        });
        MetricsReport { scope, pixel_count: self.count, values }
    }
}

/// Accumulates the evaluated pixels of one prediction (slices in matching order).
pub fn metrics_f64(
    pred: &[f64],
    gt: &[f64],
    mask: &[bool],
    config: &LossConfig,
    scope: Scope,
) -> Result<MetricsAccumulator> {
    if pred.len() != gt.len() || gt.len() != mask.len() {
        return Err(ObjectiveError::Shape(format!(
            "pred {} / gt {} / mask {} pixels",
            pred.len(),
            gt.len(),
            mask.len()
        )));
    }
    let mut acc = MetricsAccumulator::default();
    for i in 0..gt.len() {
        if config.is_valid(gt[i]) && (scope == Scope::Global || mask[i]) {
            acc.add(pred[i], gt[i]);
        }
    }
    Ok(acc)
}

pub fn metrics(
    pred: &DepthMap,
    gt: &DepthMap,
    mask: &Mask,
    config: &LossConfig,
    scope: Scope,
) -> Result<MetricsAccumulator> {
    if pred.dims() != gt.dims() || gt.dims() != mask.dims() {
        return Err(ObjectiveError::Shape(format!(
            "pred {:?} / gt {:?} / mask {:?}",
            pred.dims(),
            gt.dims(),
            mask.dims()
        )));
    }
    let to64 = |d: &DepthMap| d.data().iter().map(|&x| x as f64).collect::<Vec<_>>();
    metrics_f64(&to64(pred), &to64(gt), mask.data(), config, scope)
}

/// Writes `METRICS_HEADER` followed by one row per `(label, report)`; the
/// label is prepended as an extra leading column when `label_column` is set.
/// Undefined metrics are written as empty fields.
pub fn write_metrics_csv<W: Write>(
    out: W,
    label_column: Option<&str>,
    rows: &[(String, MetricsReport)],
) -> Result<()> {
    let mut csv = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = label_column.into_iter().collect();
    header.extend(METRICS_HEADER);
    csv.write_record(&header)?;
    for (label, r) in rows {
        let mut rec: Vec<String> = label_column.map(|_| label.clone()).into_iter().collect();
        rec.push(r.scope.as_str().into());
        rec.push(r.pixel_count.to_string());
        match &r.values {
            Some(v) => rec.extend([v.rmse, v.rel, v.mae, v.d105, v.d110, v.d125].map(|x| x.to_string())),
            None => rec.extend(std::iter::repeat_n(String::new(), 6)),
        }
        csv.write_record(&rec)?;
    }
    csv.flush().map_err(|e| ObjectiveError::Csv(e.into()))?;
    Ok(())
}
