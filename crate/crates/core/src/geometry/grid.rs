use super::{GeometryError, Result};

/// A row-major `height x width` raster indexed by pixel `(u, v)` = (column, row).
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// Depth in meters, `0` marks a missing measurement.
pub type DepthMap = Grid<f32>;
pub type Mask = Grid<bool>;
pub type NormalMap = Grid<[f32; 3]>;
/// Per-pixel primitive id, [`BACKGROUND_ID`](super::BACKGROUND_ID) where nothing was hit.
pub type IdMap = Grid<u32>;
pub type RgbImage = Grid<[u8; 3]>;

impl<T: Clone> Grid<T> {
    pub fn new(width: usize, height: usize, fill: T) -> Self {
        Self { width, height, data: vec![fill; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(GeometryError::DimensionMismatch {
                expected: (width, height),
                found: (data.len(), 1),
            });
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, u: usize, v: usize) -> &T {
        &self.data[v * self.width + u]
    }

    pub fn set(&mut self, u: usize, v: usize, value: T) {
        self.data[v * self.width + u] = value;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn map<U: Clone>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid { width: self.width, height: self.height, data: self.data.iter().map(f).collect() }
    }

    pub fn ensure_dims<U>(&self, other: &Grid<U>) -> Result<()> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(GeometryError::DimensionMismatch {
                expected: (self.width, self.height),
                found: (other.width, other.height),
            });
        }
        Ok(())
    }

    /// Mirror left-right.
    pub fn flip_horizontal(&self) -> Self {
        Self::from_fn(self.width, self.height, |u, v| self.get(self.width - 1 - u, v).clone())
    }

    /// Rotate the image content 90 degrees counter-clockwise; width and height swap.
    pub fn rotate90_ccw(&self) -> Self {
        // new (u', v') samples old (u = W-1-v', v = u')
        Self::from_fn(self.height, self.width, |u, v| self.get(self.width - 1 - v, u).clone())
    }
}
