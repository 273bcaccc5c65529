//! DFNet: a U-Net of dense-block composites that refines raw depth from an
//! RGB-D pair. The raw depth plane, average-pooled to each scale, is
//! concatenated onto the input of every block; upsampling uses sub-pixel
//! convolution (DUC).
//!
//! Block layout for hidden width `h`, dense layers `L`, growth `k`:
//!
//! - stem: `conv(rgb ++ depth -> h)`
//! - CDCD (one per level): `conv(x ++ depth -> h)`, dense block, `conv(-> h)` gives the
//!   skip; 2x2 average pooling gives the next level input
//! - CDC (bottleneck): CDCD without pooling
//! - CDCU (one per level, deepest first): `conv(x ++ depth -> h)`, dense block,
//!   `conv(-> 4h)`, pixel shuffle by 2, `conv(up ++ skip -> h)`
//! - head: `conv(h -> 1)` with bias, the only conv without batch norm and ReLU
//!
//! All convs are 3x3, stride 1, padding 1.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::{avg_pool2_values, BatchNormMode, BatchNormState, Real, Result, Tape, Tensor, TensorError, Var, BN_EPSILON};

/// Input depth is clamped to `[0, MAX_INPUT_DEPTH]` meters.
pub const MAX_INPUT_DEPTH: f64 = 3.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DfnetConfig {
    pub hidden: usize,
    pub dense_layers: usize,
    pub growth: usize,
    pub levels: usize,
    pub height: usize,
    pub width: usize,
    /// Add the clamped raw depth to the head output instead of predicting depth directly.
    pub residual: bool,
}

impl Default for DfnetConfig {
    fn default() -> Self {
        Self { hidden: 64, dense_layers: 5, growth: 12, levels: 4, height: 240, width: 320, residual: false }
    }
}

fn config_err(detail: String) -> TensorError {
    TensorError::InvalidArgument { op: "dfnet", detail }
}

impl DfnetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden == 0 || self.growth == 0 && self.dense_layers > 0 {
            return Err(config_err("hidden and growth must be positive".into()));
        }
        let div = 1usize << self.levels;
        if self.height == 0 || self.width == 0 || !self.height.is_multiple_of(div) || !self.width.is_multiple_of(div) {
            return Err(config_err(format!(
                "input {}x{} must be divisible by 2^levels = {div}",
                self.width, self.height
            )));
        }
        Ok(())
    }

    fn dense_out(&self, c: usize) -> usize {
        c + self.dense_layers * self.growth
    }
}

/// One parameter tensor of the layer plan.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub kind: ParamKind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamKind {
    ConvWeight,
    Bias,
    BnGamma,
    BnBeta,
}

impl ParamKind {
    /// Biases and normalization affine terms are exempt from weight decay.
    pub fn decays(self) -> bool {
        self == ParamKind::ConvWeight
    }
}

struct Plan<'a> {
    config: &'a DfnetConfig,
    params: Vec<ParamSpec>,
    bns: Vec<(String, usize)>,
}

impl Plan<'_> {
    fn conv_bn(&mut self, name: &str, cin: usize, cout: usize) {
        self.params.push(ParamSpec { name: format!("{name}.weight"), shape: vec![cout, cin, 3, 3], kind: ParamKind::ConvWeight });
        self.params.push(ParamSpec { name: format!("{name}.bn.gamma"), shape: vec![cout], kind: ParamKind::BnGamma });
        self.params.push(ParamSpec { name: format!("{name}.bn.beta"), shape: vec![cout], kind: ParamKind::BnBeta });
        self.bns.push((format!("{name}.bn"), cout));
    }

    fn dense(&mut self, name: &str, cin: usize) {
        let (l, k) = (self.config.dense_layers, self.config.growth);
        for j in 0..l {
            self.conv_bn(&format!("{name}.dense.layer{j}"), cin + j * k, k);
        }
    }

    fn cdc(&mut self, name: &str, cin: usize) {
        let h = self.config.hidden;
        self.conv_bn(&format!("{name}.conv_in"), cin + 1, h);
        self.dense(name, h);
        self.conv_bn(&format!("{name}.conv_out"), self.config.dense_out(h), h);
    }

    fn cdcu(&mut self, name: &str) {
        let h = self.config.hidden;
        self.conv_bn(&format!("{name}.conv_in"), h + 1, h);
        self.dense(name, h);
        self.conv_bn(&format!("{name}.conv_up"), self.config.dense_out(h), 4 * h);
        self.conv_bn(&format!("{name}.conv_fuse"), 2 * h, h);
    }
}

/// Every learnable tensor and batch-norm layer, in construction order.
pub fn layer_plan(config: &DfnetConfig) -> (Vec<ParamSpec>, Vec<(String, usize)>) {
    let mut plan = Plan { config, params: Vec::new(), bns: Vec::new() };
    let h = config.hidden;
    plan.conv_bn("stem.conv", 4, h);
    for i in 0..config.levels {
        plan.cdc(&format!("enc{i}"), h);
    }
    plan.cdc("bottleneck", h);
    for i in (0..config.levels).rev() {
        plan.cdcu(&format!("dec{i}"));
    }
    plan.params.push(ParamSpec { name: "head.conv.weight".into(), shape: vec![1, h, 3, 3], kind: ParamKind::ConvWeight });
    plan.params.push(ParamSpec { name: "head.conv.bias".into(), shape: vec![1], kind: ParamKind::Bias });
    (plan.params, plan.bns)
}

/// Parameter values bound on a tape, by name.
pub type Bound<T> = BTreeMap<String, Var<T>>;

/// Network parameters and batch-norm running statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct DfNet<T: Real = f32> {
    config: DfnetConfig,
    specs: Vec<ParamSpec>,
    params: BTreeMap<String, Tensor<T>>,
    bn: BTreeMap<String, BatchNormState<T>>,
}

impl<T: Real> DfNet<T> {
    /// Kaiming-uniform conv weights (`bound = sqrt(6 / fan_in)`), zero biases,
    /// unit gamma, zero beta; deterministic in `seed`.
    pub fn new(config: DfnetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let (specs, bns) = layer_plan(&config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = BTreeMap::new();
        for spec in &specs {
            let t = match spec.kind {
                ParamKind::ConvWeight => {
                    let fan_in: usize = spec.shape[1..].iter().product();
                    let bound = (6.0 / fan_in as f64).sqrt();
                    Tensor::from_fn(spec.shape.clone(), |_| T::from_f64(rng.random_range(-bound..bound)))
                }
                ParamKind::Bias | ParamKind::BnBeta => Tensor::zeros(spec.shape.clone()),
                ParamKind::BnGamma => Tensor::full(spec.shape.clone(), T::one()),
            };
            params.insert(spec.name.clone(), t);
        }
        let bn = bns.into_iter().map(|(name, c)| (name, BatchNormState::new(c))).collect();
        Ok(Self { config, specs, params, bn })
    }

    pub fn config(&self) -> &DfnetConfig {
        &self.config
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.get(name)
    }

    pub fn param_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.params.get_mut(name)
    }

    pub fn bn_state(&self, name: &str) -> Option<&BatchNormState<T>> {
        self.bn.get(name)
    }

    /// Number of learnable scalars (running statistics excluded).
    pub fn param_count(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// Same network at another precision.
    pub fn cast<U: Real>(&self) -> DfNet<U> {
        DfNet {
            config: self.config,
            specs: self.specs.clone(),
            params: self.params.iter().map(|(k, v)| (k.clone(), v.cast())).collect(),
            bn: self
                .bn
                .iter()
                .map(|(k, s)| {
                    let cast = |v: &[T]| v.iter().map(|x| U::from_f64(x.as_f64())).collect();
                    (k.clone(), BatchNormState { running_mean: cast(&s.running_mean), running_var: cast(&s.running_var) })
                })
                .collect(),
        }
    }

    /// Puts every parameter on `tape`, tracked (`param`) or not (`constant`).
    pub fn bind(&self, tape: &mut Tape<T>, track: bool) -> Bound<T> {
        self.params
            .iter()
            .map(|(k, v)| (k.clone(), if track { tape.param(v.clone()) } else { tape.constant(v.clone()) }))
            .collect()
    }

    /// Flat name -> tensor map including running statistics
    /// (`<layer>.bn.running_mean` / `.running_var`).
    pub fn to_tensors(&self) -> BTreeMap<String, Tensor<T>> {
        let mut out = self.params.clone();
        for (name, s) in &self.bn {
            let c = s.running_mean.len();
            out.insert(format!("{name}.running_mean"), Tensor::new([c], s.running_mean.clone()).expect("len c"));
            out.insert(format!("{name}.running_var"), Tensor::new([c], s.running_var.clone()).expect("len c"));
        }
        out
    }

    /// Inverse of [`DfNet::to_tensors`]; every expected tensor must be present
    /// with the planned shape and no extra tensors are allowed.
    pub fn from_tensors(config: DfnetConfig, mut tensors: BTreeMap<String, Tensor<T>>) -> Result<Self> {
        config.validate()?;
        let (specs, bns) = layer_plan(&config);
        let mut take = |name: &str, shape: &[usize]| -> Result<Tensor<T>> {
            let t = tensors.remove(name).ok_or_else(|| config_err(format!("missing tensor {name}")))?;
            if t.shape() != shape {
                return Err(config_err(format!("tensor {name} has shape {:?}, expected {shape:?}", t.shape())));
            }
            if !t.all_finite() {
                return Err(config_err(format!("tensor {name} contains non-finite values")));
            }
            Ok(t)
        };
        let mut params = BTreeMap::new();
        for spec in &specs {
            params.insert(spec.name.clone(), take(&spec.name, &spec.shape)?);
        }
        let mut bn = BTreeMap::new();
        for (name, c) in bns {
            let running_mean = take(&format!("{name}.running_mean"), &[c])?.into_data();
            let running_var = take(&format!("{name}.running_var"), &[c])?.into_data();
            bn.insert(name, BatchNormState { running_mean, running_var });
        }
        if let Some(extra) = tensors.keys().next() {
            return Err(config_err(format!("unexpected tensor {extra}")));
        }
        Ok(Self { config, specs, params, bn })
    }

    /// `rgb: [N, 3, H, W]` in `[0, 1]`, `raw_depth: [N, 1, H, W]` in meters
    /// (0 = missing); returns predicted depth `[N, 1, H, W]`. Train mode
    /// normalizes with batch statistics and updates the running estimates.
    pub fn forward(
        &mut self,
        tape: &mut Tape<T>,
        vars: &Bound<T>,
        rgb: &Tensor<T>,
        raw_depth: &Tensor<T>,
        mode: BatchNormMode,
    ) -> Result<Var<T>> {
        let [n, c, h, w] = rgb.dims4("dfnet")?;
        let [dn, dc, dh, dw] = raw_depth.dims4("dfnet")?;
        if c != 3 || dc != 1 || (n, h, w) != (dn, dh, dw) {
            return Err(TensorError::Shape {
                op: "dfnet",
                detail: format!("rgb {:?} and depth {:?} must be [N, 3, H, W] and [N, 1, H, W]", rgb.shape(), raw_depth.shape()),
            });
        }
        if (h, w) != (self.config.height, self.config.width) {
            return Err(TensorError::Shape {
                op: "dfnet",
                detail: format!("input is {w}x{h}, network expects {}x{}", self.config.width, self.config.height),
            });
        }
        let clamped = raw_depth.map(|d| d.max(T::zero()).min(T::from_f64(MAX_INPUT_DEPTH)));
        let mut pyramid = vec![tape.constant(clamped.clone())];
        for _ in 0..self.config.levels {
            let next = avg_pool2_values(pyramid.last().expect("non-empty").value())?;
            pyramid.push(tape.constant(next));
        }
        let mut fwd = Forward { net: self, vars, mode };
        let rgb = tape.constant(rgb.clone());
        let input = tape.concat_channels(&[&rgb, &pyramid[0]])?;
        let mut x = fwd.conv_bn_relu(tape, "stem.conv", &input)?;

        let mut skips = Vec::with_capacity(fwd.net.config.levels);
        for (i, depth) in pyramid.iter().enumerate().take(fwd.net.config.levels) {
            let skip = fwd.cdc(tape, &format!("enc{i}"), &x, depth)?;
            x = tape.avg_pool2(&skip)?;
            skips.push(skip);
        }
        x = fwd.cdc(tape, "bottleneck", &x, &pyramid[fwd.net.config.levels])?;
        for i in (0..fwd.net.config.levels).rev() {
            x = fwd.cdcu(tape, &format!("dec{i}"), &x, &skips[i], &pyramid[i + 1])?;
        }
        let out = tape.conv2d(&x, fwd.var("head.conv.weight")?, Some(fwd.var("head.conv.bias")?), 1, 1)?;
        if fwd.net.config.residual {
            tape.add(&out, &pyramid[0])
        } else {
            Ok(out)
        }
    }

    /// Eval-mode prediction without gradient tracking.
    pub fn predict(&mut self, rgb: &Tensor<T>, raw_depth: &Tensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let out = self.forward(&mut tape, &vars, rgb, raw_depth, BatchNormMode::Eval)?;
        Ok(out.value().clone())
    }
}

struct Forward<'a, T: Real> {
    net: &'a mut DfNet<T>,
    vars: &'a Bound<T>,
    mode: BatchNormMode,
}

impl<T: Real> Forward<'_, T> {
    fn var(&self, name: &str) -> Result<&Var<T>> {
        self.vars.get(name).ok_or_else(|| config_err(format!("parameter {name} not bound")))
    }

    fn conv_bn_relu(&mut self, tape: &mut Tape<T>, name: &str, x: &Var<T>) -> Result<Var<T>> {
        let y = tape.conv2d(x, self.var(&format!("{name}.weight"))?, None, 1, 1)?;
        let gamma = self.var(&format!("{name}.bn.gamma"))?.clone();
        let beta = self.var(&format!("{name}.bn.beta"))?.clone();
        let state = self
            .net
            .bn
            .get_mut(&format!("{name}.bn"))
            .ok_or_else(|| config_err(format!("batch-norm state {name}.bn missing")))?;
        let y = tape.batch_norm(&y, &gamma, &beta, state, self.mode, BN_EPSILON)?;
        Ok(tape.relu(&y))
    }

    fn dense(&mut self, tape: &mut Tape<T>, name: &str, x: &Var<T>) -> Result<Var<T>> {
        let mut feats = vec![x.clone()];
        for j in 0..self.net.config.dense_layers {
            let input = if feats.len() == 1 { feats[0].clone() } else { tape.concat_channels(&feats.iter().collect::<Vec<_>>())? };
            let y = self.conv_bn_relu(tape, &format!("{name}.dense.layer{j}"), &input)?;
            feats.push(y);
        }
        if feats.len() == 1 {
            Ok(feats.pop().expect("one element"))
        } else {
            tape.concat_channels(&feats.iter().collect::<Vec<_>>())
        }
    }

    fn cdc(&mut self, tape: &mut Tape<T>, name: &str, x: &Var<T>, depth: &Var<T>) -> Result<Var<T>> {
        let input = tape.concat_channels(&[x, depth])?;
        let y = self.conv_bn_relu(tape, &format!("{name}.conv_in"), &input)?;
        let y = self.dense(tape, name, &y)?;
        self.conv_bn_relu(tape, &format!("{name}.conv_out"), &y)
    }

    fn cdcu(&mut self, tape: &mut Tape<T>, name: &str, x: &Var<T>, skip: &Var<T>, depth: &Var<T>) -> Result<Var<T>> {
        let (xs, ss) = (x.shape(), skip.shape());
        if ss[2] != 2 * xs[2] || ss[3] != 2 * xs[3] {
            return Err(TensorError::Shape { op: "cdcu", detail: format!("skip {ss:?} is not twice the size of {xs:?}") });
        }
        let input = tape.concat_channels(&[x, depth])?;
        let y = self.conv_bn_relu(tape, &format!("{name}.conv_in"), &input)?;
        let y = self.dense(tape, name, &y)?;
        let y = self.conv_bn_relu(tape, &format!("{name}.conv_up"), &y)?;
        let up = tape.pixel_shuffle(&y, 2)?;
        let fused = tape.concat_channels(&[&up, skip])?;
        self.conv_bn_relu(tape, &format!("{name}.conv_fuse"), &fused)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_indivisible_input() {
        let config = DfnetConfig { height: 60, width: 80, ..Default::default() };
        assert!(DfNet::<f32>::new(config, 0).is_err());
    }

    #[test]
    fn tensors_round_trip() {
        let config = DfnetConfig { hidden: 4, dense_layers: 2, growth: 2, levels: 2, height: 8, width: 8, residual: false };
        let net = DfNet::<f32>::new(config, 1).unwrap();
        let back = DfNet::from_tensors(config, net.to_tensors()).unwrap();
        assert_eq!(back, net);
        let mut extra = net.to_tensors();
        extra.insert("stray".into(), Tensor::zeros([1]));
        assert!(DfNet::from_tensors(config, extra).is_err());
    }
}
