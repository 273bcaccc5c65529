use super::{DepthMap, Mask, NormalMap};

/// Finite-difference stencil along one axis of length `len` at index `i`:
/// `(lo, hi, scale)` with derivative `scale * (f[hi] - f[lo])`. Central in the
/// interior, one-sided at the borders; `None` when the axis has one sample.
pub fn axis_stencil(len: usize, i: usize) -> Option<(usize, usize, f64)> {
    match (len, i) {
        (0 | 1, _) => None,
        (_, 0) => Some((0, 1, 1.0)),
        (l, i) if i == l - 1 => Some((l - 2, l - 1, 1.0)),
        (_, i) => Some((i - 1, i + 1, 0.5)),
    }
}

/// Unit normal `normalize(D_h x D_w)` for `D_w = (1, 0, dw)`, `D_h = (0, 1, dh)`,
/// which simplifies to `normalize((dw, dh, -1))`.
pub fn normal_from_gradients(dw: f64, dh: f64) -> [f64; 3] {
    let n = (dw * dw + dh * dh + 1.0).sqrt();
    [dw / n, dh / n, -1.0 / n]
}

/// Pixel-space surface normals of a depth map plus a validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalField {
    /// Unit vectors; `[0, 0, 0]` where invalid.
    pub normals: NormalMap,
    /// False where the pixel or any pixel of its difference stencil lacks depth.
    pub valid: Mask,
}

/// Normals from depth gradients along the width and height axes. A flat
/// surface facing the camera yields `(0, 0, -1)`.
pub fn normals_from_depth(depth: &DepthMap) -> NormalField {
    let (w, h) = depth.dims();
    let at = |u: usize, v: usize| *depth.get(u, v) as f64;
    let mut normals = NormalMap::new(w, h, [0.0; 3]);
    let mut valid = Mask::new(w, h, false);
    for v in 0..h {
        for u in 0..w {
            let mut ok = at(u, v) > 0.0;
            let dw = match axis_stencil(w, u) {
                Some((lo, hi, s)) => {
                    ok &= at(lo, v) > 0.0 && at(hi, v) > 0.0;
                    s * (at(hi, v) - at(lo, v))
                }
                None => 0.0,
            };
            let dh = match axis_stencil(h, v) {
                Some((lo, hi, s)) => {
                    ok &= at(u, lo) > 0.0 && at(u, hi) > 0.0;
                    s * (at(u, hi) - at(u, lo))
                }
                None => 0.0,
            };
            if ok {
                let n = normal_from_gradients(dw, dh);
                normals.set(u, v, [n[0] as f32, n[1] as f32, n[2] as f32]);
                valid.set(u, v, true);
            }
        }
    }
    NormalField { normals, valid }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stencils() {
        assert_eq!(axis_stencil(1, 0), None);
        assert_eq!(axis_stencil(5, 0), Some((0, 1, 1.0)));
        assert_eq!(axis_stencil(5, 4), Some((3, 4, 1.0)));
        assert_eq!(axis_stencil(5, 2), Some((1, 3, 0.5)));
    }

    #[test]
    fn constant_plane_faces_camera() {
        let f = normals_from_depth(&DepthMap::new(5, 4, 0.8));
        assert!(f.valid.data().iter().all(|&v| v));
        assert!(f.normals.data().iter().all(|n| *n == [0.0, 0.0, -1.0]));
    }

    #[test]
    fn ramp_along_width() {
        let a = 0.01;
        let d = DepthMap::from_fn(6, 3, |u, _| (0.5 + a * u as f64) as f32);
        let f = normals_from_depth(&d);
        let s = (a * a + 1.0).sqrt();
        for n in f.normals.data() {
            assert!((n[0] as f64 - a / s).abs() < 1e-5);
            assert!(n[1].abs() < 1e-6);
            assert!((n[2] as f64 + 1.0 / s).abs() < 1e-6);
        }
    }

    #[test]
    fn missing_depth_invalidates_neighbors() {
        let mut d = DepthMap::new(5, 5, 1.0);
        d.set(2, 2, 0.0);
        let f = normals_from_depth(&d);
        for (u, v) in [(2, 2), (1, 2), (3, 2), (2, 1), (2, 3)] {
            assert!(!*f.valid.get(u, v), "({u},{v})");
        }
        assert!(*f.valid.get(1, 1));
        assert!(*f.valid.get(0, 2));
    }
}
