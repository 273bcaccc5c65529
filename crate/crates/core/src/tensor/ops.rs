use rayon::prelude::*;

use super::gemm::{gemm, Mat};
use super::{Backward, BackwardCtx, Real, Result, Tape, Tensor, TensorError, Var};

pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchNormMode {
    /// Normalize with batch statistics and update the running estimates.
    Train,
    /// Normalize with the running estimates.
    Eval,
}

/// Running per-channel statistics of a batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNormState<T: Real = f32> {
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

impl<T: Real> BatchNormState<T> {
    pub fn new(channels: usize) -> Self {
        Self { running_mean: vec![T::zero(); channels], running_var: vec![T::one(); channels] }
    }
}

fn shape_err(op: &'static str, detail: String) -> TensorError {
    TensorError::Shape { op, detail }
}

#[derive(Clone, Copy)]
struct ConvGeom {
    cin: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl ConvGeom {
    fn k(&self) -> usize {
        self.cin * self.kh * self.kw
    }
    fn p(&self) -> usize {
        self.ho * self.wo
    }
}

/// Unfolds one image `[Cin, H, W]` into a `[Cin*kh*kw, Ho*Wo]` matrix.
fn im2col<T: Real>(x: &[T], g: &ConvGeom, col: &mut [T]) {
    let p = g.p();
    for ci in 0..g.cin {
        let plane = &x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = &mut col[((ci * g.kh + ki) * g.kw + kj) * p..][..p];
                for oh in 0..g.ho {
                    let ih = (oh * g.stride + ki) as isize - g.pad as isize;
                    let dst = &mut row[oh * g.wo..(oh + 1) * g.wo];
                    if ih < 0 || ih >= g.h as isize {
                        dst.fill(T::zero());
                        continue;
                    }
                    let src = &plane[ih as usize * g.w..(ih as usize + 1) * g.w];
                    for (ow, d) in dst.iter_mut().enumerate() {
                        let iw = (ow * g.stride + kj) as isize - g.pad as isize;
                        *d = if iw < 0 || iw >= g.w as isize { T::zero() } else { src[iw as usize] };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatters-adds columns back into an image.
fn col2im<T: Real>(col: &[T], g: &ConvGeom, x: &mut [T]) {
    let p = g.p();
    for ci in 0..g.cin {
        let plane = &mut x[ci * g.h * g.w..(ci + 1) * g.h * g.w];
        for ki in 0..g.kh {
            for kj in 0..g.kw {
                let row = &col[((ci * g.kh + ki) * g.kw + kj) * p..][..p];
                for oh in 0..g.ho {
                    let ih = (oh * g.stride + ki) as isize - g.pad as isize;
                    if ih < 0 || ih >= g.h as isize {
                        continue;
                    }
                    let dst = &mut plane[ih as usize * g.w..(ih as usize + 1) * g.w];
                    for (ow, &v) in row[oh * g.wo..(oh + 1) * g.wo].iter().enumerate() {
                        let iw = (ow * g.stride + kj) as isize - g.pad as isize;
                        if iw >= 0 && iw < g.w as isize {
                            dst[iw as usize] = dst[iw as usize] + v;
                        }
                    }
                }
            }
        }
    }
}

struct Conv2dBack {
    geom: ConvGeom,
    cout: usize,
    has_bias: bool,
}

impl<T: Real> Backward<T> for Conv2dBack {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Vec<T>>> {
        let g = self.geom;
        let (x, w) = (ctx.inputs[0], ctx.inputs[1]);
        let n = x.shape()[0];
        let (k, p, cout) = (g.k(), g.p(), self.cout);
        let in_item = g.cin * g.h * g.w;
        let dy = ctx.grad_output;

        let dx = ctx.needs_grad[0].then(|| {
            let mut dx = vec![T::zero(); x.len()];
            dx.par_chunks_mut(in_item).enumerate().for_each(|(b, dxb)| {
                let mut dcol = vec![T::zero(); k * p];
                let dyb = Mat::row_major(&dy[b * cout * p..(b + 1) * cout * p], cout, p);
                gemm(T::one(), Mat::row_major(w.data(), cout, k).t(), dyb, T::zero(), &mut dcol);
                col2im(&dcol, &g, dxb);
            });
            dx
        });

        let dw = ctx.needs_grad[1].then(|| {
            // Per-item partials reduced in batch order keep the result
            // independent of the thread count.
            let partials: Vec<Vec<T>> = (0..n)
                .into_par_iter()
                .map(|b| {
                    let mut col = vec![T::zero(); k * p];
                    im2col(&x.data()[b * in_item..(b + 1) * in_item], &g, &mut col);
                    let mut part = vec![T::zero(); cout * k];
                    let dyb = Mat::row_major(&dy[b * cout * p..(b + 1) * cout * p], cout, p);
                    gemm(T::one(), dyb, Mat::row_major(&col, k, p).t(), T::zero(), &mut part);
                    part
                })
                .collect();
            let mut dw = vec![T::zero(); cout * k];
            for part in &partials {
                dw.iter_mut().zip(part).for_each(|(a, b)| *a = *a + *b);
            }
            dw
        });

        let mut out = vec![dx, dw];
        if self.has_bias {
            let db = ctx.needs_grad[2].then(|| {
                let mut db = vec![T::zero(); cout];
                for b in 0..n {
                    for (co, acc) in db.iter_mut().enumerate() {
                        let s = &dy[(b * cout + co) * p..(b * cout + co + 1) * p];
                        *acc = *acc + s.iter().copied().sum::<T>();
                    }
                }
                db
            });
            out.push(db);
        }
        out
    }
}

struct BatchNormBack<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
    mode: BatchNormMode,
    n: usize,
    c: usize,
    plane: usize,
}

impl<T: Real> Backward<T> for BatchNormBack<T> {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Vec<T>>> {
        let (n, c, plane) = (self.n, self.c, self.plane);
        let gamma = ctx.inputs[1].data();
        let dy = ctx.grad_output;
        let m = (n * plane) as f64;
        let mut dgamma = vec![T::zero(); c];
        let mut dbeta = vec![T::zero(); c];
        for ch in 0..c {
            let (mut sg, mut sb) = (0.0f64, 0.0f64);
            for b in 0..n {
                let off = (b * c + ch) * plane;
                for i in off..off + plane {
                    sg += (dy[i] * self.xhat[i]).as_f64();
                    sb += dy[i].as_f64();
                }
            }
            dgamma[ch] = T::from_f64(sg);
            dbeta[ch] = T::from_f64(sb);
        }
        let dx = ctx.needs_grad[0].then(|| {
            let mut dx = vec![T::zero(); dy.len()];
            for ch in 0..c {
                let scale = gamma[ch] * self.inv_std[ch];
                match self.mode {
                    BatchNormMode::Eval => {
                        for b in 0..n {
                            let off = (b * c + ch) * plane;
                            for i in off..off + plane {
                                dx[i] = dy[i] * scale;
                            }
                        }
                    }
                    BatchNormMode::Train => {
                        // dx = scale * (dy - mean(dy) - xhat * mean(dy * xhat))
                        let mean_dy = T::from_f64(dbeta[ch].as_f64() / m);
                        let mean_dyx = T::from_f64(dgamma[ch].as_f64() / m);
                        for b in 0..n {
                            let off = (b * c + ch) * plane;
                            for i in off..off + plane {
                                dx[i] = scale * (dy[i] - mean_dy - self.xhat[i] * mean_dyx);
                            }
                        }
                    }
                }
            }
            dx
        });
        vec![dx, ctx.needs_grad[1].then_some(dgamma), ctx.needs_grad[2].then_some(dbeta)]
    }
}

struct ReluBack;

impl<T: Real> Backward<T> for ReluBack {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Vec<T>>> {
        let y = ctx.output.data();
        let dx = ctx
            .grad_output
            .iter()
            .zip(y)
            .map(|(&g, &v)| if v > T::zero() { g } else { T::zero() })
            .collect();
        vec![Some(dx)]
    }
}

struct ConcatBack {
    channels: Vec<usize>,
    n: usize,
    plane: usize,
}

impl<T: Real> Backward<T> for ConcatBack {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Vec<T>>> {
        let total: usize = self.channels.iter().sum();
        let mut start = 0;
        let mut out = Vec::with_capacity(self.channels.len());
        for (i, &ci) in self.channels.iter().enumerate() {
            if ctx.needs_grad[i] {
                let mut g = Vec::with_capacity(self.n * ci * self.plane);
                for b in 0..self.n {
                    let off = (b * total + start) * self.plane;
                    g.extend_from_slice(&ctx.grad_output[off..off + ci * self.plane]);
                }
                out.push(Some(g));
            } else {
                out.push(None);
            }
            start += ci;
        }
        out
    }
}

struct SliceBack {
    start: usize,
    c: usize,
}

impl<T: Real> Backward<T> for SliceBack {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Vec<T>>> {
        let x = ctx.inputs[0];
        let [n, _, h, w] = x.dims4("slice").expect("recorded shape");
        let plane = h * w;
        let len = ctx.grad_output.len() / (n * plane);
        let mut dx = vec![T::zero(); x.len()];
        for b in 0..n {
            let src = &ctx.grad_output[b * len * plane..(b + 1) * len * plane];
            dx[(b * self.c + self.start) * plane..][..len * plane].copy_from_slice(src);
        }
        vec![Some(dx)]
    }
}

struct AvgPoolBack;

impl<T: Real> Backward<T> for AvgPoolBack {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Vec<T>>> {
        let [n, c, h, w] = ctx.inputs[0].dims4("avg_pool2").expect("recorded shape");
        let (ho, wo) = (h / 2, w / 2);
        let quarter = T::from_f64(0.25);
        let mut dx = vec![T::zero(); n * c * h * w];
        for nc in 0..n * c {
            for oh in 0..ho {
                for ow in 0..wo {
                    let g = ctx.grad_output[(nc * ho + oh) * wo + ow] * quarter;
                    let base = (nc * h + 2 * oh) * w + 2 * ow;
                    dx[base] = g;
                    dx[base + 1] = g;
                    dx[base + w] = g;
                    dx[base + w + 1] = g;
                }
            }
        }
        vec![Some(dx)]
    }
}

/// Index map of the sub-pixel rearrangement for an input of `[n, c*r*r, h, w]`:
/// `map[output_index] = input_index`.
fn shuffle_map(n: usize, c: usize, h: usize, w: usize, r: usize) -> Vec<usize> {
    let (oh, ow) = (h * r, w * r);
    let mut map = vec![0; n * c * oh * ow];
    for b in 0..n {
        for ch in 0..c {
            for y in 0..oh {
                for x in 0..ow {
                    let (hh, i, ww, j) = (y / r, y % r, x / r, x % r);
                    let src_c = ch * r * r + i * r + j;
                    map[((b * c + ch) * oh + y) * ow + x] = ((b * c * r * r + src_c) * h + hh) * w + ww;
                }
            }
        }
    }
    map
}

/// A differentiable fixed permutation: `out[k] = in[map[k]]`.
struct GatherBack {
    map: Vec<usize>,
}

impl<T: Real> Backward<T> for GatherBack {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Vec<T>>> {
        let mut dx = vec![T::zero(); ctx.inputs[0].len()];
        for (k, &src) in self.map.iter().enumerate() {
            dx[src] = dx[src] + ctx.grad_output[k];
        }
        vec![Some(dx)]
    }
}

struct ScatterBack {
    map: Vec<usize>,
}

impl<T: Real> Backward<T> for ScatterBack {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Vec<T>>> {
        // out[map[k]] = in[k]
        let dx = self.map.iter().map(|&dst| ctx.grad_output[dst]).collect();
        vec![Some(dx)]
    }
}

#[derive(Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
}

struct BinaryBack(Binary);

impl<T: Real> Backward<T> for BinaryBack {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Vec<T>>> {
        let g = ctx.grad_output;
        let (a, b) = (ctx.inputs[0].data(), ctx.inputs[1].data());
        match self.0 {
            Binary::Add => vec![Some(g.to_vec()), Some(g.to_vec())],
            Binary::Sub => vec![Some(g.to_vec()), Some(g.iter().map(|&v| -v).collect())],
            Binary::Mul => vec![
                ctx.needs_grad[0].then(|| g.iter().zip(b).map(|(&g, &b)| g * b).collect()),
                ctx.needs_grad[1].then(|| g.iter().zip(a).map(|(&g, &a)| g * a).collect()),
            ],
        }
    }
}

struct ScaleBack<T>(T);

impl<T: Real> Backward<T> for ScaleBack<T> {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Vec<T>>> {
        vec![Some(ctx.grad_output.iter().map(|&g| g * self.0).collect())]
    }
}

struct SquareBack;

impl<T: Real> Backward<T> for SquareBack {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Vec<T>>> {
        let two = T::from_f64(2.0);
        let x = ctx.inputs[0].data();
        vec![Some(ctx.grad_output.iter().zip(x).map(|(&g, &x)| two * g * x).collect())]
    }
}

struct SumBack {
    scale: f64,
}

impl<T: Real> Backward<T> for SumBack {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Vec<T>>> {
        let g = ctx.grad_output[0] * T::from_f64(self.scale);
        vec![Some(vec![g; ctx.inputs[0].len()])]
    }
}

impl<T: Real> Tape<T> {
    /// 2-d cross-correlation (no kernel flip) with zero padding.
    ///
    /// `x: [N, Cin, H, W]`, `weight: [Cout, Cin, kh, kw]`, `bias: [Cout]`;
    /// output spatial size is `(H + 2*padding - kh) / stride + 1` (floor).
    pub fn conv2d(
        &mut self,
        x: &Var<T>,
        weight: &Var<T>,
        bias: Option<&Var<T>>,
        stride: usize,
        padding: usize,
    ) -> Result<Var<T>> {
        const OP: &str = "conv2d";
        let [n, cin, h, w] = x.value.dims4(OP)?;
        let [cout, wcin, kh, kw] = weight.value.dims4(OP)?;
        if wcin != cin {
            return Err(shape_err(
                OP,
                format!("weight {:?} expects {wcin} input channels, input {:?} has {cin}", weight.shape(), x.shape()),
            ));
        }
        if stride == 0 {
            return Err(TensorError::InvalidArgument { op: OP, detail: "stride must be positive".into() });
        }
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(TensorError::InvalidArgument {
                op: OP,
                detail: format!("kernel {kh}x{kw} must have odd sides"),
            });
        }
        if h + 2 * padding < kh || w + 2 * padding < kw {
            return Err(shape_err(OP, format!("kernel {kh}x{kw} larger than padded input {:?}", x.shape())));
        }
        if let Some(b) = bias {
            if b.shape() != [cout] {
                return Err(shape_err(OP, format!("bias {:?} does not match {cout} output channels", b.shape())));
            }
        }
        let ho = (h + 2 * padding - kh) / stride + 1;
        let wo = (w + 2 * padding - kw) / stride + 1;
        let g = ConvGeom { cin, h, w, kh, kw, stride, pad: padding, ho, wo };
        let (k, p) = (g.k(), g.p());
        let in_item = cin * h * w;
        let xd = x.value.data();
        let wd = weight.value.data();
        let bd = bias.map(|b| b.value.data());

        let mut out = vec![T::zero(); n * cout * p];
        out.par_chunks_mut(cout * p).enumerate().for_each(|(b, ob)| {
            let mut col = vec![T::zero(); k * p];
            im2col(&xd[b * in_item..(b + 1) * in_item], &g, &mut col);
            gemm(T::one(), Mat::row_major(wd, cout, k), Mat::row_major(&col, k, p), T::zero(), ob);
            if let Some(bd) = bd {
                for (co, plane) in ob.chunks_mut(p).enumerate() {
                    plane.iter_mut().for_each(|v| *v = *v + bd[co]);
                }
            }
        });
        let out = Tensor::new([n, cout, ho, wo], out)?;
        let back = Conv2dBack { geom: g, cout, has_bias: bias.is_some() };
        Ok(match bias {
            Some(b) => self.record(&[x, weight, b], out, back),
            None => self.record(&[x, weight], out, back),
        })
    }

    /// Per-channel batch normalization over `(N, H, W)`.
    ///
    /// Train mode normalizes with the biased batch variance and folds the
    /// batch mean and unbiased variance into `state` with [`BN_MOMENTUM`].
    pub fn batch_norm(
        &mut self,
        x: &Var<T>,
        gamma: &Var<T>,
        beta: &Var<T>,
        state: &mut BatchNormState<T>,
        mode: BatchNormMode,
        epsilon: f64,
    ) -> Result<Var<T>> {
        const OP: &str = "batch_norm";
        let [n, c, h, w] = x.value.dims4(OP)?;
        if gamma.shape() != [c] || beta.shape() != [c] {
            return Err(shape_err(
                OP,
                format!("gamma {:?} / beta {:?} must be [{c}] for input {:?}", gamma.shape(), beta.shape(), x.shape()),
            ));
        }
        if state.running_mean.len() != c || state.running_var.len() != c {
            return Err(shape_err(OP, format!("running statistics have {} channels, input has {c}", state.running_mean.len())));
        }
        let plane = h * w;
        let m = n * plane;
        if mode == BatchNormMode::Train && m < 2 {
            return Err(TensorError::InvalidArgument {
                op: OP,
                detail: format!("train mode needs at least 2 values per channel, input {:?} has {m}", x.shape()),
            });
        }
        let xd = x.value.data();
        let (gd, bd) = (gamma.value.data(), beta.value.data());
        let mut xhat = vec![T::zero(); xd.len()];
        let mut out = vec![T::zero(); xd.len()];
        let mut inv_stds = vec![T::zero(); c];
        for ch in 0..c {
            let (mean, var) = match mode {
                BatchNormMode::Train => {
                    let mut sum = 0.0f64;
                    for b in 0..n {
                        let off = (b * c + ch) * plane;
                        sum += xd[off..off + plane].iter().map(|v| v.as_f64()).sum::<f64>();
                    }
                    let mean = sum / m as f64;
                    let mut sq = 0.0f64;
                    for b in 0..n {
                        let off = (b * c + ch) * plane;
                        sq += xd[off..off + plane].iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>();
                    }
                    let var = sq / m as f64;
                    let unbiased = sq / (m - 1) as f64;
                    let rm = state.running_mean[ch].as_f64();
                    let rv = state.running_var[ch].as_f64();
                    state.running_mean[ch] = T::from_f64((1.0 - BN_MOMENTUM) * rm + BN_MOMENTUM * mean);
                    state.running_var[ch] = T::from_f64((1.0 - BN_MOMENTUM) * rv + BN_MOMENTUM * unbiased);
                    (mean, var)
                }
                BatchNormMode::Eval => (state.running_mean[ch].as_f64(), state.running_var[ch].as_f64()),
            };
            let inv_std = 1.0 / (var + epsilon).sqrt();
            inv_stds[ch] = T::from_f64(inv_std);
            let (mean_t, inv_t) = (T::from_f64(mean), T::from_f64(inv_std));
            for b in 0..n {
                let off = (b * c + ch) * plane;
                for i in off..off + plane {
                    let xh = (xd[i] - mean_t) * inv_t;
                    xhat[i] = xh;
                    out[i] = gd[ch] * xh + bd[ch];
                }
            }
        }
        let out = Tensor::new(x.shape().to_vec(), out)?;
        let back = BatchNormBack { xhat, inv_std: inv_stds, mode, n, c, plane };
        Ok(self.record(&[x, gamma, beta], out, back))
    }

    pub fn relu(&mut self, x: &Var<T>) -> Var<T> {
        let out = x.value.map(|v| if v > T::zero() { v } else { T::zero() });
        self.record(&[x], out, ReluBack)
    }

    /// Concatenates `[N, Ci, H, W]` tensors along the channel axis in order.
    pub fn concat_channels(&mut self, inputs: &[&Var<T>]) -> Result<Var<T>> {
        const OP: &str = "concat_channels";
        let first = inputs
            .first()
            .ok_or_else(|| TensorError::InvalidArgument { op: OP, detail: "no inputs".into() })?;
        let [n, _, h, w] = first.value.dims4(OP)?;
        let mut channels = Vec::with_capacity(inputs.len());
        for v in inputs {
            let [vn, vc, vh, vw] = v.value.dims4(OP)?;
            if (vn, vh, vw) != (n, h, w) {
                return Err(shape_err(OP, format!("{:?} vs {:?}", first.shape(), v.shape())));
            }
            channels.push(vc);
        }
        let total: usize = channels.iter().sum();
        let plane = h * w;
        let mut out = Vec::with_capacity(n * total * plane);
        for b in 0..n {
            for (v, &ci) in inputs.iter().zip(&channels) {
                out.extend_from_slice(&v.value.data()[b * ci * plane..(b + 1) * ci * plane]);
            }
        }
        let out = Tensor::new([n, total, h, w], out)?;
        Ok(self.record(inputs, out, ConcatBack { channels, n, plane }))
    }

    /// Differentiable channel slice `[start, start + len)`.
    pub fn slice_channels(&mut self, x: &Var<T>, start: usize, len: usize) -> Result<Var<T>> {
        let out = x.value.slice_channels(start, len)?;
        let c = x.shape()[1];
        Ok(self.record(&[x], out, SliceBack { start, c }))
    }

    /// Non-overlapping 2x2 mean pooling; `H` and `W` must be even.
    pub fn avg_pool2(&mut self, x: &Var<T>) -> Result<Var<T>> {
        Ok(self.record(&[x], avg_pool2_values(&x.value)?, AvgPoolBack))
    }

    /// Sub-pixel rearrangement `[N, C*r*r, H, W] -> [N, C, r*H, r*W]` with
    /// `out(n, c, r*h + i, r*w + j) = in(n, c*r*r + i*r + j, h, w)`.
    pub fn pixel_shuffle(&mut self, x: &Var<T>, r: usize) -> Result<Var<T>> {
        const OP: &str = "pixel_shuffle";
        let [n, crr, h, w] = x.value.dims4(OP)?;
        if r == 0 || crr % (r * r) != 0 {
            return Err(shape_err(OP, format!("{crr} channels not divisible by r^2 = {}", r * r)));
        }
        let c = crr / (r * r);
        let map = shuffle_map(n, c, h, w, r);
        let data = map.iter().map(|&i| x.value.data()[i]).collect();
        let out = Tensor::new([n, c, h * r, w * r], data)?;
        Ok(self.record(&[x], out, GatherBack { map }))
    }

    /// Exact inverse of [`Tape::pixel_shuffle`].
    pub fn pixel_unshuffle(&mut self, x: &Var<T>, r: usize) -> Result<Var<T>> {
        const OP: &str = "pixel_unshuffle";
        let [n, c, oh, ow] = x.value.dims4(OP)?;
        if r == 0 || oh % r != 0 || ow % r != 0 {
            return Err(shape_err(OP, format!("spatial dims of {:?} not divisible by {r}", x.shape())));
        }
        let (h, w) = (oh / r, ow / r);
        // shuffle_map sends shuffled index -> unshuffled index
        let map = shuffle_map(n, c, h, w, r);
        let mut data = vec![T::zero(); x.value.len()];
        for (k, &dst) in map.iter().enumerate() {
            data[dst] = x.value.data()[k];
        }
        let out = Tensor::new([n, c * r * r, h, w], data)?;
        Ok(self.record(&[x], out, ScatterBack { map }))
    }

    fn binary(&mut self, a: &Var<T>, b: &Var<T>, kind: Binary, op: &'static str) -> Result<Var<T>> {
        if a.shape() != b.shape() {
            return Err(shape_err(op, format!("{:?} vs {:?}", a.shape(), b.shape())));
        }
        let data = a
            .value
            .data()
            .iter()
            .zip(b.value.data())
            .map(|(&x, &y)| match kind {
                Binary::Add => x + y,
                Binary::Sub => x - y,
                Binary::Mul => x * y,
            })
            .collect();
        let out = Tensor::new(a.shape().to_vec(), data)?;
        Ok(self.record(&[a, b], out, BinaryBack(kind)))
    }

    pub fn add(&mut self, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        self.binary(a, b, Binary::Add, "add")
    }

    pub fn sub(&mut self, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        self.binary(a, b, Binary::Sub, "sub")
    }

    pub fn mul(&mut self, a: &Var<T>, b: &Var<T>) -> Result<Var<T>> {
        self.binary(a, b, Binary::Mul, "mul")
    }

    pub fn scale(&mut self, x: &Var<T>, factor: T) -> Var<T> {
        let out = x.value.map(|v| v * factor);
        self.record(&[x], out, ScaleBack(factor))
    }

    pub fn square(&mut self, x: &Var<T>) -> Var<T> {
        let out = x.value.map(|v| v * v);
        self.record(&[x], out, SquareBack)
    }

    pub fn sum(&mut self, x: &Var<T>) -> Var<T> {
        let s = x.value.data().iter().map(|v| v.as_f64()).sum::<f64>();
        self.record(&[x], Tensor::scalar(T::from_f64(s)), SumBack { scale: 1.0 })
    }

    pub fn mean(&mut self, x: &Var<T>) -> Var<T> {
        let n = x.value.len().max(1) as f64;
        let s = x.value.data().iter().map(|v| v.as_f64()).sum::<f64>() / n;
        self.record(&[x], Tensor::scalar(T::from_f64(s)), SumBack { scale: 1.0 / n })
    }
}

/// Non-differentiable 2x2 average pooling, used for depth pyramids.
pub fn avg_pool2_values<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let [n, c, h, w] = x.dims4("avg_pool2")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(shape_err("avg_pool2", format!("spatial dims of {:?} must be even", x.shape())));
    }
    let (ho, wo) = (h / 2, w / 2);
    let quarter = T::from_f64(0.25);
    let d = x.data();
    let mut out = vec![T::zero(); n * c * ho * wo];
    for nc in 0..n * c {
        for oh in 0..ho {
            for ow in 0..wo {
                let base = (nc * h + 2 * oh) * w + 2 * ow;
                out[(nc * ho + oh) * wo + ow] = (d[base] + d[base + 1] + d[base + w] + d[base + w + 1]) * quarter;
            }
        }
    }
    Tensor::new([n, c, ho, wo], out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_fn(shape.to_vec(), |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn conv_delta_kernel_is_identity() {
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::full([1, 1, 3, 3], 1.0));
        let mut k = Tensor::zeros([1, 1, 3, 3]);
        k.data_mut()[4] = 1.0;
        let w = tape.constant(k);
        let b = tape.constant(Tensor::zeros([1]));
        let y = tape.conv2d(&x, &w, Some(&b), 1, 1).unwrap();
        assert_eq!(y.value(), x.value());
    }

    #[test]
    fn conv_zero_weight_gives_bias() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(random(&[2, 3, 5, 4], 1));
        let w = tape.constant(Tensor::zeros([2, 3, 3, 3]));
        let b = tape.constant(Tensor::new([2], vec![0.5, -1.25]).unwrap());
        let y = tape.conv2d(&x, &w, Some(&b), 1, 1).unwrap();
        assert_eq!(y.shape(), &[2, 2, 5, 4]);
        for (i, v) in y.value().data().iter().enumerate() {
            let co = (i / 20) % 2;
            assert_eq!(*v, [0.5, -1.25][co]);
        }
    }

    #[test]
    fn conv_rejects_channel_mismatch_naming_shapes() {
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::zeros([1, 2, 4, 4]));
        let w = tape.constant(Tensor::zeros([4, 3, 3, 3]));
        let err = tape.conv2d(&x, &w, None, 1, 1).unwrap_err().to_string();
        assert!(err.contains("[4, 3, 3, 3]") && err.contains("[1, 2, 4, 4]"), "{err}");
    }

    #[test]
    fn batch_norm_gamma_zero_gives_beta() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(random(&[2, 2, 3, 3], 3));
        let g = tape.constant(Tensor::zeros([2]));
        let b = tape.constant(Tensor::new([2], vec![0.3, -0.7]).unwrap());
        let mut st = BatchNormState::new(2);
        let y = tape.batch_norm(&x, &g, &b, &mut st, BatchNormMode::Train, BN_EPSILON).unwrap();
        for (i, v) in y.value().data().iter().enumerate() {
            assert_eq!(*v, [0.3, -0.7][(i / 9) % 2]);
        }
    }

    #[test]
    fn batch_norm_train_rejects_single_value() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::zeros([1, 1, 1, 1]));
        let g = tape.constant(Tensor::full([1], 1.0));
        let b = tape.constant(Tensor::zeros([1]));
        let mut st = BatchNormState::new(1);
        assert!(tape.batch_norm(&x, &g, &b, &mut st, BatchNormMode::Train, BN_EPSILON).is_err());
        assert!(tape.batch_norm(&x, &g, &b, &mut st, BatchNormMode::Eval, BN_EPSILON).is_ok());
    }

    #[test]
    fn batch_norm_updates_running_stats_with_momentum() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::new([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let g = tape.constant(Tensor::full([1], 1.0));
        let b = tape.constant(Tensor::zeros([1]));
        let mut st = BatchNormState::new(1);
        tape.batch_norm(&x, &g, &b, &mut st, BatchNormMode::Train, BN_EPSILON).unwrap();
        assert!((st.running_mean[0] - 0.25).abs() < 1e-15);
        // unbiased variance of 1..4 is 5/3
        assert!((st.running_var[0] - (0.9 + 0.1 * 5.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn relu_values() {
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::new([4], vec![-1.0, 2.5, 0.0, -0.1]).unwrap());
        assert_eq!(tape.relu(&x).value().data(), &[0.0, 2.5, 0.0, 0.0]);
    }

    #[test]
    fn concat_layout_and_gradients() {
        let mut tape = Tape::<f64>::new();
        let a = tape.param(Tensor::from_fn([1, 2, 2, 2], |i| i as f64));
        let b = tape.param(Tensor::from_fn([1, 2, 2, 2], |i| 10.0 + i as f64));
        let y = tape.concat_channels(&[&a, &b]).unwrap();
        assert_eq!(y.shape(), &[1, 4, 2, 2]);
        assert_eq!(&y.value().data()[..8], a.value().data());
        assert_eq!(&y.value().data()[8..], b.value().data());
        let single = tape.concat_channels(&[&a]).unwrap();
        assert_eq!(single.value(), a.value());
        let s = tape.sum(&y);
        tape.backward(&s).unwrap();
        assert!(tape.grad(&a).unwrap().iter().all(|&g| g == 1.0));
        assert!(tape.grad(&b).unwrap().iter().all(|&g| g == 1.0));
    }

    #[test]
    fn concat_rejects_spatial_mismatch() {
        let mut tape = Tape::<f32>::new();
        let a = tape.constant(Tensor::zeros([1, 1, 2, 2]));
        let b = tape.constant(Tensor::zeros([1, 1, 2, 3]));
        assert!(tape.concat_channels(&[&a, &b]).is_err());
    }

    #[test]
    fn avg_pool_values_and_errors() {
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::new([1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        assert_eq!(tape.avg_pool2(&x).unwrap().value().data(), &[2.5]);
        let c = tape.constant(Tensor::full([2, 3, 4, 6], 0.75));
        let p = tape.avg_pool2(&c).unwrap();
        assert_eq!(p.shape(), &[2, 3, 2, 3]);
        assert!(p.value().data().iter().all(|&v| v == 0.75));
        let odd = tape.constant(Tensor::zeros([1, 1, 3, 2]));
        assert!(tape.avg_pool2(&odd).is_err());
    }

    #[test]
    fn pixel_shuffle_layout() {
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::new([1, 4, 1, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let y = tape.pixel_shuffle(&x, 2).unwrap();
        assert_eq!(y.shape(), &[1, 1, 2, 2]);
        assert_eq!(y.value().data(), &[1.0, 2.0, 3.0, 4.0]);
        let same = tape.pixel_shuffle(&x, 1).unwrap();
        assert_eq!(same.value(), x.value());
        let bad = tape.constant(Tensor::zeros([1, 3, 2, 2]));
        assert!(tape.pixel_shuffle(&bad, 2).is_err());
    }

    #[test]
    fn sum_of_squares_gradient() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(Tensor::scalar(3.0));
        let sq = tape.square(&x);
        let loss = tape.sum(&sq);
        tape.backward(&loss).unwrap();
        assert_eq!(tape.grad(&x).unwrap(), &[6.0]);
        // a second pass accumulates
        tape.backward(&loss).unwrap();
        assert_eq!(tape.grad(&x).unwrap(), &[12.0]);
        tape.zero_grad();
        assert!(tape.grad(&x).is_none());
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::<f64>::new();
        let x = tape.param(Tensor::zeros([2]));
        let y = tape.square(&x);
        assert!(matches!(tape.backward(&y), Err(TensorError::NonScalarLoss(_))));
    }

    #[test]
    fn untracked_inputs_do_not_grow_the_tape() {
        let mut tape = Tape::<f32>::new();
        let x = tape.constant(Tensor::full([1, 1, 2, 2], 1.0));
        let y = tape.relu(&x);
        assert!(!y.is_tracked());
        assert!(tape.is_empty());
    }
}
