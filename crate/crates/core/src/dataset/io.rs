use std::fs;
use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};

use super::{DatasetError, Result, Sample, SampleMeta, SplitSpec};
use crate::geometry::{DepthMap, Grid, Mask, NormalMap, RgbImage};

/// Stored depth units per meter.
pub const DEPTH_SCALE: f64 = 10_000.0;
/// Largest depth a 16-bit plane can hold.
pub const MAX_DEPTH: f64 = u16::MAX as f64 / DEPTH_SCALE;

const RGB_FILE: &str = "rgb.png";
const RAW_FILE: &str = "depth_raw.png";
const GT_FILE: &str = "depth_gt.png";
const MASK_FILE: &str = "mask.png";
const NORMALS_FILE: &str = "normals.bin";
const META_FILE: &str = "meta.json";
const SPLIT_FILE: &str = "split.json";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

fn format_err(path: &Path, detail: impl ToString) -> DatasetError {
    DatasetError::Format { path: path.to_path_buf(), detail: detail.to_string() }
}

/// Quantizes meters to `round(d * 10000)`; rejects values outside the 16-bit range.
pub fn encode_depth_png(depth: &DepthMap) -> Result<Vec<u16>> {
    let w = depth.width();
    depth
        .data()
        .iter()
        .enumerate()
        .map(|(i, &d)| {
            let q = (d as f64 * DEPTH_SCALE).round();
            if !d.is_finite() || d < 0.0 || q > u16::MAX as f64 {
                return Err(DatasetError::DepthRange { value: d, u: i % w, v: i / w, max: MAX_DEPTH });
            }
            Ok(q as u16)
        })
        .collect()
}

pub fn decode_depth_png(width: usize, height: usize, raw: &[u16]) -> DepthMap {
    let data = raw.iter().map(|&q| (q as f64 / DEPTH_SCALE) as f32).collect();
    DepthMap::from_vec(width, height, data).expect("caller passes a full plane")
}

pub fn write_depth_png(path: &Path, depth: &DepthMap) -> Result<()> {
    let raw = encode_depth_png(depth)?;
    let img = ImageBuffer::<Luma<u16>, _>::from_raw(depth.width() as u32, depth.height() as u32, raw)
        .expect("plane sized from depth map");
    img.save_with_format(path, ImageFormat::Png).map_err(|e| format_err(path, e))
}

pub fn write_rgb_png(path: &Path, rgb: &RgbImage) -> Result<()> {
    let raw: Vec<u8> = rgb.data().iter().flatten().copied().collect();
    let img = ImageBuffer::<Rgb<u8>, _>::from_raw(rgb.width() as u32, rgb.height() as u32, raw)
        .expect("plane sized from image");
    img.save_with_format(path, ImageFormat::Png).map_err(|e| format_err(path, e))
}

pub fn write_gray_png(path: &Path, width: usize, height: usize, raw: Vec<u8>) -> Result<()> {
    let img = ImageBuffer::<Luma<u8>, _>::from_raw(width as u32, height as u32, raw).expect("plane sized by caller");
    img.save_with_format(path, ImageFormat::Png).map_err(|e| format_err(path, e))
}

fn open_image(path: &Path) -> Result<DynamicImage> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    image::load_from_memory_with_format(&bytes, ImageFormat::Png).map_err(|e| format_err(path, e))
}

pub fn read_rgb_png(path: &Path) -> Result<RgbImage> {
    let img = match open_image(path)? {
        DynamicImage::ImageRgb8(img) => img,
        DynamicImage::ImageRgba8(img) => DynamicImage::ImageRgba8(img).to_rgb8(),
        DynamicImage::ImageLuma8(img) => DynamicImage::ImageLuma8(img).to_rgb8(),
        other => return Err(format_err(path, format!("expected 8-bit color PNG, found {:?}", other.color()))),
    };
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img.pixels().map(|p| p.0).collect();
    Ok(Grid::from_vec(w, h, data)?)
}

pub fn read_depth_png(path: &Path) -> Result<DepthMap> {
    let img = match open_image(path)? {
        DynamicImage::ImageLuma16(img) => img,
        other => return Err(format_err(path, format!("expected 16-bit grayscale PNG, found {:?}", other.color()))),
    };
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(decode_depth_png(w, h, img.as_raw()))
}

fn read_mask(path: &Path) -> Result<Mask> {
    let img = match open_image(path)? {
        DynamicImage::ImageLuma8(img) => img,
        other => return Err(format_err(path, format!("expected 8-bit grayscale PNG, found {:?}", other.color()))),
    };
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = img
        .as_raw()
        .iter()
        .map(|&b| match b {
            0 => Ok(false),
            255 => Ok(true),
            other => Err(format_err(path, format!("mask value {other}, expected 0 or 255"))),
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Grid::from_vec(w, h, data)?)
}

fn check_dims<T: Clone>(path: &Path, expected: (usize, usize), plane: &Grid<T>) -> Result<()> {
    if plane.dims() != expected {
        return Err(format_err(
            path,
            format!("plane is {}x{}, expected {}x{}", plane.width(), plane.height(), expected.0, expected.1),
        ));
    }
    Ok(())
}

/// Writes one sample directory; creates `dir` if needed.
pub fn save_sample(sample: &Sample, dir: &Path) -> Result<()> {
    sample.validate()?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let (w, h) = sample.dims();
    write_rgb_png(&dir.join(RGB_FILE), &sample.rgb)?;
    write_depth_png(&dir.join(RAW_FILE), &sample.raw_depth)?;
    write_depth_png(&dir.join(GT_FILE), &sample.gt_depth)?;
    write_gray_png(&dir.join(MASK_FILE), w, h, sample.mask.data().iter().map(|&m| if m { 255 } else { 0 }).collect())?;
    let mut normals = Vec::with_capacity(w * h * 12);
    for n in sample.normals.data() {
        for c in n {
            normals.extend_from_slice(&c.to_le_bytes());
        }
    }
    let path = dir.join(NORMALS_FILE);
    fs::write(&path, normals).map_err(io_err(&path))?;
    let path = dir.join(META_FILE);
    let json = serde_json::to_string_pretty(&sample.meta).map_err(|e| format_err(&path, e))?;
    fs::write(&path, json + "\n").map_err(io_err(&path))
}

pub fn load_sample(dir: &Path) -> Result<Sample> {
    let path = dir.join(META_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let meta: SampleMeta = serde_json::from_str(&text).map_err(|e| format_err(&path, e))?;

    let rgb = read_rgb_png(&dir.join(RGB_FILE))?;
    let dims = rgb.dims();
    if (meta.intrinsics.width, meta.intrinsics.height) != dims {
        return Err(format_err(
            &path,
            format!(
                "intrinsics are {}x{} but rgb.png is {}x{}",
                meta.intrinsics.width, meta.intrinsics.height, dims.0, dims.1
            ),
        ));
    }
    let raw_path = dir.join(RAW_FILE);
    let raw_depth = read_depth_png(&raw_path)?;
    check_dims(&raw_path, dims, &raw_depth)?;
    let gt_path = dir.join(GT_FILE);
    let gt_depth = read_depth_png(&gt_path)?;
    check_dims(&gt_path, dims, &gt_depth)?;
    let mask_path = dir.join(MASK_FILE);
    let mask = read_mask(&mask_path)?;
    check_dims(&mask_path, dims, &mask)?;

    let path = dir.join(NORMALS_FILE);
    let bytes = fs::read(&path).map_err(io_err(&path))?;
    let expected = dims.0 * dims.1 * 3 * 4;
    if bytes.len() != expected {
        return Err(format_err(&path, format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let floats: Vec<f32> = bytes.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
    let normals = NormalMap::from_vec(dims.0, dims.1, floats.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect())?;

    let sample = Sample { rgb, raw_depth, gt_depth, mask, normals, meta };
    sample.validate()?;
    Ok(sample)
}

/// Sample directories `root/scene_*/view_*`, sorted by path.
pub fn list_samples(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let subdirs = |dir: &Path, prefix: &str| -> Result<Vec<PathBuf>> {
        let mut v = Vec::new();
        for entry in fs::read_dir(dir).map_err(io_err(dir))? {
            let entry = entry.map_err(io_err(dir))?;
            let name = entry.file_name();
            if name.to_string_lossy().starts_with(prefix) && entry.path().is_dir() {
                v.push(entry.path());
            }
        }
        v.sort();
        Ok(v)
    };
    for scene in subdirs(root, "scene_")? {
        out.extend(subdirs(&scene, "view_")?);
    }
    Ok(out)
}

pub fn write_split(root: &Path, split: &SplitSpec) -> Result<()> {
    let path = root.join(SPLIT_FILE);
    let json = serde_json::to_string_pretty(split).map_err(|e| format_err(&path, e))?;
    fs::write(&path, json + "\n").map_err(io_err(&path))
}

pub fn read_split(root: &Path) -> Result<SplitSpec> {
    let path = root.join(SPLIT_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| format_err(&path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantization() {
        let d = DepthMap::from_vec(4, 1, vec![1.0, 0.0, 1.2345, 6.5535]).unwrap();
        assert_eq!(encode_depth_png(&d).unwrap(), vec![10000, 0, 12345, 65535]);
        let too_far = DepthMap::from_vec(1, 1, vec![6.6]).unwrap();
        assert!(matches!(encode_depth_png(&too_far), Err(DatasetError::DepthRange { .. })));
        let negative = DepthMap::from_vec(1, 1, vec![-0.1]).unwrap();
        assert!(encode_depth_png(&negative).is_err());
    }
}
