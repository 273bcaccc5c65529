use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::{DepthMap, GeometryError, Mask, Result, RgbImage};

/// Pinhole intrinsics in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    /// Square pixels and the principal point at the image center for a
    /// horizontal field of view in degrees.
    pub fn from_fov(width: usize, height: usize, hfov_deg: f64) -> Self {
        let f = width as f64 / 2.0 / (hfov_deg.to_radians() / 2.0).tan();
        let (cx, cy) = ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0);
        Self { fx: f, fy: f, cx, cy, width, height }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(GeometryError::InvalidIntrinsics(m));
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return bad(format!("focal lengths must be positive, got fx={} fy={}", self.fx, self.fy));
        }
        if !(0.0..self.width as f64).contains(&self.cx) || !(0.0..self.height as f64).contains(&self.cy) {
            return bad(format!(
                "principal point ({}, {}) outside the {}x{} image",
                self.cx, self.cy, self.width, self.height
            ));
        }
        Ok(())
    }

    /// Intrinsics of the same camera after resampling the image to `width x height`.
    pub fn rescaled(&self, width: usize, height: usize) -> Self {
        let (sx, sy) = (width as f64 / self.width as f64, height as f64 / self.height as f64);
        Self {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            width,
            height,
        }
    }

    /// Ray direction through pixel `(u, v)` scaled to unit z.
    pub fn pixel_ray(&self, u: f64, v: f64) -> [f64; 3] {
        [(u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0]
    }
}

/// Projects a camera-frame point to pixel coordinates; `None` behind the camera.
pub fn project(intr: &CameraIntrinsics, p: [f64; 3]) -> Option<(f64, f64)> {
    (p[2] > 0.0).then(|| (intr.fx * p[0] / p[2] + intr.cx, intr.fy * p[1] / p[2] + intr.cy))
}

/// Camera-frame points with optional colors and the pixel each came from.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f64; 3]>,
    pub colors: Option<Vec<[u8; 3]>>,
    pub pixels: Vec<(usize, usize)>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Lifts every pixel with positive depth (and inside `mask`, when given) to
/// `((u - cx) d / fx, (v - cy) d / fy, d)`.
pub fn deproject(depth: &DepthMap, intr: &CameraIntrinsics, mask: Option<&Mask>) -> Result<PointCloud> {
    if depth.dims() != (intr.width, intr.height) {
        return Err(GeometryError::DimensionMismatch {
            expected: (intr.width, intr.height),
            found: depth.dims(),
        });
    }
    if let Some(m) = mask {
        depth.ensure_dims(m)?;
    }
    let mut cloud = PointCloud::default();
    for v in 0..depth.height() {
        for u in 0..depth.width() {
            let d = *depth.get(u, v) as f64;
            if !(d > 0.0) || mask.is_some_and(|m| !*m.get(u, v)) {
                continue;
            }
            let r = intr.pixel_ray(u as f64, v as f64);
            cloud.points.push([r[0] * d, r[1] * d, d]);
            cloud.pixels.push((u, v));
        }
    }
    Ok(cloud)
}

/// [`deproject`] with per-point colors sampled from `rgb`.
pub fn deproject_colored(
    depth: &DepthMap,
    intr: &CameraIntrinsics,
    mask: Option<&Mask>,
    rgb: &RgbImage,
) -> Result<PointCloud> {
    depth.ensure_dims(rgb)?;
    let mut cloud = deproject(depth, intr, mask)?;
    cloud.colors = Some(cloud.pixels.iter().map(|&(u, v)| *rgb.get(u, v)).collect());
    Ok(cloud)
}

/// ASCII PLY with `float x y z` and, when colored, `uchar red green blue`.
pub fn write_ply<W: Write>(out: &mut W, cloud: &PointCloud) -> Result<()> {
    writeln!(out, "ply")?;
    writeln!(out, "format ascii 1.0")?;
    writeln!(out, "element vertex {}", cloud.points.len())?;
    for axis in ["x", "y", "z"] {
        writeln!(out, "property float {axis}")?;
    }
    if cloud.colors.is_some() {
        for ch in ["red", "green", "blue"] {
            writeln!(out, "property uchar {ch}")?;
        }
    }
    writeln!(out, "end_header")?;
    for (i, p) in cloud.points.iter().enumerate() {
        write!(out, "{} {} {}", p[0] as f32, p[1] as f32, p[2] as f32)?;
        if let Some(c) = &cloud.colors {
            write!(out, " {} {} {}", c[i][0], c[i][1], c[i][2])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Reads the ASCII PLY written by [`write_ply`] (pixel provenance is not stored).
pub fn read_ply<R: BufRead>(input: R) -> Result<PointCloud> {
    let bad = |m: &str| GeometryError::Ply(m.to_string());
    let mut lines = input.lines();
    let mut count = None;
    let mut props = Vec::new();
    loop {
        let line = lines.next().ok_or_else(|| bad("missing end_header"))??;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["ply"] | ["format", "ascii", "1.0"] | ["comment", ..] => {}
            ["element", "vertex", n] => count = Some(n.parse::<usize>().map_err(|_| bad("bad vertex count"))?),
            ["property", _, name] => props.push(name.to_string()),
            ["end_header"] => break,
            _ => return Err(GeometryError::Ply(format!("unexpected header line {line:?}"))),
        }
    }
    let count = count.ok_or_else(|| bad("no vertex element"))?;
    let colored = match props.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["x", "y", "z"] => false,
        ["x", "y", "z", "red", "green", "blue"] => true,
        _ => return Err(GeometryError::Ply(format!("unsupported vertex properties {props:?}"))),
    };
    let mut cloud = PointCloud { colors: colored.then(Vec::new), ..Default::default() };
    for _ in 0..count {
        let line = lines.next().ok_or_else(|| bad("fewer vertices than declared"))??;
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.len() != props.len() {
            return Err(GeometryError::Ply(format!("vertex line {line:?} has {} fields", vals.len())));
        }
        let f = |s: &str| s.parse::<f64>().map_err(|_| bad("bad coordinate"));
        cloud.points.push([f(vals[0])?, f(vals[1])?, f(vals[2])?]);
        if let Some(c) = &mut cloud.colors {
            let b = |s: &str| s.parse::<u8>().map_err(|_| bad("bad color"));
            c.push([b(vals[3])?, b(vals[4])?, b(vals[5])?]);
        }
    }
    Ok(cloud)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn principal_point_maps_to_axis() {
        let intr = CameraIntrinsics { fx: 50.0, fy: 50.0, cx: 2.0, cy: 1.0, width: 4, height: 3 };
        let mut d = DepthMap::new(4, 3, 0.0);
        d.set(2, 1, 1.0);
        let cloud = deproject(&d, &intr, None).unwrap();
        assert_eq!(cloud.points, vec![[0.0, 0.0, 1.0]]);
    }

    #[test]
    fn direct_substitution() {
        let intr = CameraIntrinsics { fx: 100.0, fy: 100.0, cx: 0.0, cy: 0.0, width: 101, height: 1 };
        let mut d = DepthMap::new(101, 1, 0.0);
        d.set(100, 0, 2.0);
        let cloud = deproject(&d, &intr, None).unwrap();
        assert_eq!(cloud.points, vec![[2.0, 0.0, 2.0]]);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let intr = CameraIntrinsics::from_fov(8, 6, 60.0);
        assert!(deproject(&DepthMap::new(6, 8, 1.0), &intr, None).is_err());
    }

    #[test]
    fn mask_restricts_points() {
        let intr = CameraIntrinsics::from_fov(4, 4, 60.0);
        let d = DepthMap::new(4, 4, 1.0);
        let m = Mask::from_fn(4, 4, |u, _| u < 2);
        assert_eq!(deproject(&d, &intr, Some(&m)).unwrap().len(), 8);
    }

    #[test]
    fn validate_intrinsics() {
        assert!(CameraIntrinsics::from_fov(320, 240, 60.0).validate().is_ok());
        let mut bad = CameraIntrinsics::from_fov(320, 240, 60.0);
        bad.cx = 320.0;
        assert!(bad.validate().is_err());
        bad = CameraIntrinsics::from_fov(320, 240, 60.0);
        bad.fy = 0.0;
        assert!(bad.validate().is_err());
    }
}
