use super::{LossConfig, ObjectiveError, Result};
use crate::geometry::{axis_stencil, normal_from_gradients};
use crate::tensor::{Backward, BackwardCtx, Real, Tape, Tensor, Var};

/// Loss value split into its parts.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    pub total: f64,
    /// Mean squared depth error over valid pixels.
    pub depth: f64,
    /// Mean cosine distance of normals over pixels with a fully valid stencil.
    pub normal: f64,
    pub valid_pixels: usize,
    pub normal_pixels: usize,
}

struct PrecomputedGrad<T>(Vec<T>);

impl<T: Real> Backward<T> for PrecomputedGrad<T> {
    fn backward(&self, ctx: &BackwardCtx<'_, T>) -> Vec<Option<Vec<T>>> {
        let g = ctx.grad_output[0];
        vec![Some(self.0.iter().map(|&d| d * g).collect())]
    }
}

/// Gradient of the unnormalized normal `(a_w, a_h, -1)` at one pixel as
/// contributions to depth samples.
struct Stencil {
    w: Option<(usize, usize, f64)>,
    h: Option<(usize, usize, f64)>,
}

impl Stencil {
    fn at(width: usize, height: usize, u: usize, v: usize) -> Self {
        Self { w: axis_stencil(width, u), h: axis_stencil(height, v) }
    }

    /// Both slopes of `f` at `(u, v)` on one image plane.
    fn slopes(&self, f: impl Fn(usize, usize) -> f64, u: usize, v: usize) -> (f64, f64) {
        let aw = self.w.map_or(0.0, |(lo, hi, s)| s * (f(hi, v) - f(lo, v)));
        let ah = self.h.map_or(0.0, |(lo, hi, s)| s * (f(u, hi) - f(u, lo)));
        (aw, ah)
    }

    fn covers(&self, ok: impl Fn(usize, usize) -> bool, u: usize, v: usize) -> bool {
        ok(u, v)
            && self.w.is_none_or(|(lo, hi, _)| ok(lo, v) && ok(hi, v))
            && self.h.is_none_or(|(lo, hi, _)| ok(u, lo) && ok(u, hi))
    }
}

/// `L = L_d + beta * L_s` for `pred`, `gt` of shape `[N, 1, H, W]`.
///
/// `L_d` is the squared depth error averaged over every valid pixel of the
/// batch. `L_s` averages `1 - cos(n_pred, n_gt)` with `n = D_h x D_w` over
/// pixels whose whole difference stencil is valid; it is 0 when no such pixel
/// exists. Only `pred` receives a gradient.
pub fn depth_loss<T: Real>(
    tape: &mut Tape<T>,
    pred: &Var<T>,
    gt: &Tensor<T>,
    config: &LossConfig,
) -> Result<(Var<T>, LossTerms)> {
    config.validate()?;
    if pred.shape() != gt.shape() {
        return Err(ObjectiveError::Shape(format!("prediction {:?} vs ground truth {:?}", pred.shape(), gt.shape())));
    }
    let [n, c, h, w] = gt.dims4("loss").map_err(|e| ObjectiveError::Shape(e.to_string()))?;
    if c != 1 {
        return Err(ObjectiveError::Shape(format!("expected one depth channel, got {c}")));
    }
    let p = pred.value().data();
    let g = gt.data();
    let valid: Vec<bool> = g.iter().map(|d| config.is_valid(d.as_f64())).collect();
    let n_valid = valid.iter().filter(|&&v| v).count();
    if n_valid == 0 {
        return Err(ObjectiveError::NoValidPixels);
    }

    let mut grad = vec![0.0f64; p.len()];
    let mut depth_sum = 0.0;
    for i in 0..p.len() {
        if valid[i] {
            let e = p[i].as_f64() - g[i].as_f64();
            depth_sum += e * e;
            grad[i] = 2.0 * e / n_valid as f64;
        }
    }

    // (plane offset, u, v) of every pixel with a fully valid stencil
    let mut normal_px = Vec::new();
    for b in 0..n {
        let off = b * h * w;
        for v in 0..h {
            for u in 0..w {
                if Stencil::at(w, h, u, v).covers(|x, y| valid[off + y * w + x], u, v) {
                    normal_px.push((off, u, v));
                }
            }
        }
    }
    let n_normal = normal_px.len();
    let mut normal_sum = 0.0;
    for &(off, u, v) in &normal_px {
        let st = Stencil::at(w, h, u, v);
        let (pw, ph) = st.slopes(|x, y| p[off + y * w + x].as_f64(), u, v);
        let (gw, gh) = st.slopes(|x, y| g[off + y * w + x].as_f64(), u, v);
        let np = [pw, ph, -1.0];
        let ng = normal_from_gradients(gw, gh);
        let np_len = (pw * pw + ph * ph + 1.0).sqrt();
        let cos = (np[0] * ng[0] + np[1] * ng[1] + np[2] * ng[2]) / np_len;
        normal_sum += 1.0 - cos;

        // d(1 - cos)/d np = -(ng / |np| - cos * np / |np|^2)
        let scale = config.beta / n_normal as f64;
        let d_pw = -(ng[0] / np_len - cos * pw / (np_len * np_len)) * scale;
        let d_ph = -(ng[1] / np_len - cos * ph / (np_len * np_len)) * scale;
        if let Some((lo, hi, s)) = st.w {
            grad[off + v * w + hi] += d_pw * s;
            grad[off + v * w + lo] -= d_pw * s;
        }
        if let Some((lo, hi, s)) = st.h {
            grad[off + hi * w + u] += d_ph * s;
            grad[off + lo * w + u] -= d_ph * s;
        }
    }

    let depth = depth_sum / n_valid as f64;
    let normal = if n_normal > 0 { normal_sum / n_normal as f64 } else { 0.0 };
    let terms = LossTerms {
        total: depth + config.beta * normal,
        depth,
        normal,
        valid_pixels: n_valid,
        normal_pixels: n_normal,
    };
    let out = Tensor::scalar(T::from_f64(terms.total));
    let grad = grad.into_iter().map(T::from_f64).collect();
    Ok((tape.record(&[pred], out, PrecomputedGrad(grad)), terms))
}
