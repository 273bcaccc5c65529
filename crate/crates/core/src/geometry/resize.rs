//! Image resampling with pixel-center alignment: destination pixel `x` samples
//! source coordinate `(x + 0.5) * src / dst - 0.5`.

use super::Grid;

fn source_coord(x: usize, src: usize, dst: usize) -> f64 {
    ((x as f64 + 0.5) * src as f64 / dst as f64 - 0.5).clamp(0.0, (src - 1) as f64)
}

/// Bilinear interpolation of each of `N` channels.
pub fn resize_bilinear<const N: usize>(img: &Grid<[f32; N]>, width: usize, height: usize) -> Grid<[f32; N]> {
    let (sw, sh) = img.dims();
    Grid::from_fn(width, height, |u, v| {
        let x = source_coord(u, sw, width);
        let y = source_coord(v, sh, height);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(sw - 1), (y0 + 1).min(sh - 1));
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let mut out = [0f32; N];
        for (c, o) in out.iter_mut().enumerate() {
            let top = img.get(x0, y0)[c] as f64 * (1.0 - fx) + img.get(x1, y0)[c] as f64 * fx;
            let bottom = img.get(x0, y1)[c] as f64 * (1.0 - fx) + img.get(x1, y1)[c] as f64 * fx;
            *o = (top * (1.0 - fy) + bottom * fy) as f32;
        }
        out
    })
}

/// Nearest-neighbour resampling; never invents values.
pub fn resize_nearest<T: Clone>(img: &Grid<T>, width: usize, height: usize) -> Grid<T> {
    let (sw, sh) = img.dims();
    Grid::from_fn(width, height, |u, v| {
        let x = ((u as f64 + 0.5) * sw as f64 / width as f64).floor() as usize;
        let y = ((v as f64 + 0.5) * sh as f64 / height as f64).floor() as usize;
        img.get(x.min(sw - 1), y.min(sh - 1)).clone()
    })
}
