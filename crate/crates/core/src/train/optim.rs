use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{Result, TrainError};
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 1e-2 }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        let unit = |b: f64| (0.0..1.0).contains(&b);
        if !unit(self.beta1) || !unit(self.beta2) {
            return Err(TrainError::Config(format!("betas must lie in [0, 1), got {} / {}", self.beta1, self.beta2)));
        }
        if !(self.eps > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(TrainError::Config("eps must be > 0 and weight_decay >= 0".into()));
        }
        Ok(())
    }
}

/// One parameter handed to [`AdamW::step`].
pub struct ParamUpdate<'a, T: Real> {
    pub name: &'a str,
    pub value: &'a mut Tensor<T>,
    pub grad: &'a Tensor<T>,
    /// Whether weight decay applies.
    pub decay: bool,
}

/// Adam with decoupled weight decay. Moments are kept per parameter name.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW<T: Real = f32> {
    pub config: AdamWConfig,
    step: u64,
    first: BTreeMap<String, Tensor<T>>,
    second: BTreeMap<String, Tensor<T>>,
}

impl<T: Real> AdamW<T> {
    pub fn new(config: AdamWConfig) -> Self {
        Self { config, step: 0, first: BTreeMap::new(), second: BTreeMap::new() }
    }

    /// Number of completed steps.
    pub fn steps(&self) -> u64 {
        self.step
    }

    /// For each parameter:
    /// `p -= lr * wd * p` (if decayed), then
    /// `m = b1 m + (1 - b1) g`, `v = b2 v + (1 - b2) g^2`,
    /// `p -= lr * m_hat / (sqrt(v_hat) + eps)` with bias-corrected moments.
    ///
    /// Every gradient is checked before any parameter is touched.
    pub fn step<'a>(&mut self, lr: f64, params: impl IntoIterator<Item = ParamUpdate<'a, T>>) -> Result<()>
    where
        T: 'a,
    {
        let params: Vec<_> = params.into_iter().collect();
        for p in &params {
            if p.value.shape() != p.grad.shape() {
                return Err(TrainError::Config(format!(
                    "gradient of {} has shape {:?}, parameter {:?}",
                    p.name,
                    p.grad.shape(),
                    p.value.shape()
                )));
            }
            if !p.grad.all_finite() {
                return Err(TrainError::NonFinite(format!("gradient of parameter {}", p.name)));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for p in params {
            let shape = p.value.shape().to_vec();
            let m = self.first.entry(p.name.to_string()).or_insert_with(|| Tensor::zeros(shape.clone()));
            let v = self.second.entry(p.name.to_string()).or_insert_with(|| Tensor::zeros(shape));
            if m.shape() != p.value.shape() || v.shape() != p.value.shape() {
                return Err(TrainError::Config(format!("optimizer state of {} does not match its shape", p.name)));
            }
            let decay = if p.decay { lr * c.weight_decay } else { 0.0 };
            let (m, v) = (m.data_mut(), v.data_mut());
            for (i, x) in p.value.data_mut().iter_mut().enumerate() {
                let g = p.grad.data()[i].as_f64();
                let mi = c.beta1 * m[i].as_f64() + (1.0 - c.beta1) * g;
                let vi = c.beta2 * v[i].as_f64() + (1.0 - c.beta2) * g * g;
                m[i] = T::from_f64(mi);
                v[i] = T::from_f64(vi);
                let mut p = x.as_f64();
                p -= decay * p;
                p -= lr * (mi / bc1) / ((vi / bc2).sqrt() + c.eps);
                *x = T::from_f64(p);
            }
        }
        Ok(())
    }

    /// Moments as `first.<param>` / `second.<param>`.
    pub fn to_tensors(&self) -> BTreeMap<String, Tensor<T>> {
        let first = self.first.iter().map(|(k, v)| (format!("first.{k}"), v.clone()));
        let second = self.second.iter().map(|(k, v)| (format!("second.{k}"), v.clone()));
        first.chain(second).collect()
    }

    pub fn from_tensors(config: AdamWConfig, step: u64, tensors: BTreeMap<String, Tensor<T>>) -> Result<Self> {
        let mut opt = Self::new(config);
        opt.step = step;
        for (name, t) in tensors {
            if let Some(k) = name.strip_prefix("first.") {
                opt.first.insert(k.to_string(), t);
            } else if let Some(k) = name.strip_prefix("second.") {
                opt.second.insert(k.to_string(), t);
            } else {
                return Err(TrainError::Config(format!("unexpected optimizer tensor {name}")));
            }
        }
        if opt.first.keys().ne(opt.second.keys()) {
            return Err(TrainError::Config("optimizer moments are incomplete".into()));
        }
        Ok(opt)
    }

    /// Shape of the stored moments of `name`, if any.
    pub fn moment_shape(&self, name: &str) -> Option<&[usize]> {
        self.first.get(name).map(Tensor::shape)
    }
}
