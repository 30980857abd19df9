//! Dense row-major 2D grids shared by every per-pixel quantity.

use crate::error::{Error, Result};

/// A `height × width` grid stored row-major. Pixel `(u, v)` is column `u`,
/// row `v`.
#[derive(Debug, Clone, PartialEq)]
pub struct Raster<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

/// Binary pixel mask.
pub type Mask = Raster<bool>;

/// Integer label map (0 = unlabeled).
pub type LabelMap = Raster<u32>;

impl<T: Clone> Raster<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }
}

impl<T> Raster<T> {
    pub fn from_vec(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "raster {width}x{height} needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for v in 0..height {
            for u in 0..width {
                data.push(f(u, v));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn same_size<U>(&self, other: &Raster<U>) -> bool {
        self.width == other.width && self.height == other.height
    }

    #[inline]
    pub fn index(&self, u: usize, v: usize) -> usize {
        v * self.width + u
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> &T {
        &self.data[v * self.width + u]
    }

    #[inline]
    pub fn get_mut(&mut self, u: usize, v: usize) -> &mut T {
        &mut self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, value: T) {
        self.data[v * self.width + u] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Raster<U> {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(f).collect(),
        }
    }
}

impl Mask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn any(&self) -> bool {
        self.data.iter().any(|&b| b)
    }

    pub fn intersection_count(&self, other: &Mask) -> usize {
        self.data
            .iter()
            .zip(&other.data)
            .filter(|(&a, &b)| a && b)
            .count()
    }

    pub fn union_count(&self, other: &Mask) -> usize {
        self.data
            .iter()
            .zip(&other.data)
            .filter(|(&a, &b)| a || b)
            .count()
    }

    /// IoU of two masks; two empty masks have IoU 0.
    pub fn iou(&self, other: &Mask) -> f64 {
        let union = self.union_count(other);
        if union == 0 {
            0.0
        } else {
            self.intersection_count(other) as f64 / union as f64
        }
    }

    pub fn or_assign(&mut self, other: &Mask) {
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a |= b;
        }
    }

    pub fn and(&self, other: &Mask) -> Mask {
        Raster {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a && b)
                .collect(),
        }
    }

    pub fn not(&self) -> Mask {
        self.map(|&b| !b)
    }

    /// Morphological erosion with a `(2r+1)²` square element; out-of-image
    /// neighbours count as background.
    pub fn eroded(&self, radius: usize) -> Mask {
        self.morph(radius, true)
    }

    /// Morphological dilation with a `(2r+1)²` square element.
    pub fn dilated(&self, radius: usize) -> Mask {
        self.morph(radius, false)
    }

    fn morph(&self, radius: usize, erode: bool) -> Mask {
        if radius == 0 {
            return self.clone();
        }
        let r = radius as isize;
        let (w, h) = (self.width as isize, self.height as isize);
        Raster::from_fn(self.width, self.height, |u, v| {
            let (u, v) = (u as isize, v as isize);
            let mut acc = erode;
            'outer: for dv in -r..=r {
                for du in -r..=r {
                    let (x, y) = (u + du, v + dv);
                    let inside = x >= 0 && y >= 0 && x < w && y < h;
                    let val = inside && self.data[(y * w + x) as usize];
                    if erode && !val {
                        acc = false;
                        break 'outer;
                    }
                    if !erode && val {
                        acc = true;
                        break 'outer;
                    }
                }
            }
            acc
        })
    }
}

impl LabelMap {
    /// Binary mask of pixels carrying `label`.
    pub fn mask_of(&self, label: u32) -> Mask {
        self.map(|&l| l == label)
    }

    /// Sorted distinct nonzero labels.
    pub fn labels(&self) -> Vec<u32> {
        let mut set: Vec<u32> = self.data.iter().copied().filter(|&l| l != 0).collect();
        set.sort_unstable();
        set.dedup();
        set
    }
}
