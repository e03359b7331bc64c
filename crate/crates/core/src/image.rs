//! Raster containers shared by every stage of a pipeline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Single-channel 8-bit image, row-major.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Image2D {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl Image2D {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0)
    }

    pub fn filled(width: usize, height: usize, value: u8) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Input(format!(
                "image buffer has {} bytes, expected {}x{}={}",
                data.len(),
                width,
                height,
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u8) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
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
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
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
    pub fn get(&self, x: usize, y: usize) -> u8 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: u8) {
        self.data[y * self.width + x] = v;
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.data
    }

    pub fn map(&self, f: impl Fn(u8) -> u8) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Pixelwise combination of two images of equal size.
    pub fn zip_map(&self, other: &Self, f: impl Fn(u8, u8) -> u8) -> Result<Self> {
        ensure_same_dims(self.dims(), other.dims())?;
        Ok(Self {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    /// Foreground indicator: `true` where the pixel is non-zero.
    pub fn foreground(&self) -> Vec<bool> {
        self.data.iter().map(|&v| v > 0).collect()
    }

    pub fn count_nonzero(&self) -> usize {
        self.data.iter().filter(|&&v| v > 0).count()
    }
}

pub(crate) fn ensure_same_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::Input(format!(
            "dimension mismatch: {}x{} vs {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}

/// Instance label map. Label 0 is background; foreground labels are always
/// the contiguous range `1..=count`, numbered by the raster position of the
/// first pixel of each instance.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    width: usize,
    height: usize,
    data: Vec<u32>,
    count: u32,
}

impl LabelMap {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
            count: 0,
        }
    }

    /// Builds a label map from arbitrary non-negative labels, relabeling them
    /// to `1..=L` in raster order of first appearance.
    pub fn from_raw(width: usize, height: usize, raw: Vec<u32>) -> Result<Self> {
        if raw.len() != width * height {
            return Err(Error::Input(format!(
                "label buffer has {} entries, expected {}",
                raw.len(),
                width * height
            )));
        }
        Ok(Self::relabel(width, height, raw))
    }

    fn relabel(width: usize, height: usize, mut raw: Vec<u32>) -> Self {
        let mut remap = std::collections::HashMap::new();
        let mut next = 0u32;
        for v in raw.iter_mut() {
            if *v == 0 {
                continue;
            }
            let id = *remap.entry(*v).or_insert_with(|| {
                next += 1;
                next
            });
            *v = id;
        }
        Self {
            width,
            height,
            data: raw,
            count: next,
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
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Number of instances.
    #[inline]
    pub fn count(&self) -> usize {
        self.count as usize
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> u32 {
        self.data[y * self.width + x]
    }

    pub fn as_slice(&self) -> &[u32] {
        &self.data
    }

    /// Pixel count per label; index 0 holds the background area.
    pub fn areas(&self) -> Vec<usize> {
        let mut areas = vec![0usize; self.count as usize + 1];
        for &v in &self.data {
            areas[v as usize] += 1;
        }
        areas
    }

    /// Binary mask of one instance.
    pub fn instance_mask(&self, label: u32) -> Vec<bool> {
        self.data.iter().map(|&v| v == label).collect()
    }

    /// Union of all instances as an 8-bit mask (255 = foreground).
    pub fn to_mask(&self) -> Image2D {
        Image2D {
            width: self.width,
            height: self.height,
            data: self
                .data
                .iter()
                .map(|&v| if v > 0 { 255 } else { 0 })
                .collect(),
        }
    }

    /// Keeps only labels accepted by `keep`, relabeling contiguously.
    pub fn retain(&self, mut keep: impl FnMut(u32) -> bool) -> Self {
        let mut decision = vec![false; self.count as usize + 1];
        for (l, d) in decision.iter_mut().enumerate().skip(1) {
            *d = keep(l as u32);
        }
        let raw = self
            .data
            .iter()
            .map(|&v| if decision[v as usize] { v } else { 0 })
            .collect();
        Self::relabel(self.width, self.height, raw)
    }

    /// Centroid `(x, y)` per label, indexed by `label - 1`.
    pub fn centroids(&self) -> Vec<(f64, f64)> {
        let n = self.count as usize;
        let mut acc = vec![(0.0f64, 0.0f64, 0usize); n];
        for y in 0..self.height {
            for x in 0..self.width {
                let l = self.data[y * self.width + x] as usize;
                if l > 0 {
                    let a = &mut acc[l - 1];
                    a.0 += x as f64;
                    a.1 += y as f64;
                    a.2 += 1;
                }
            }
        }
        acc.into_iter()
            .map(|(sx, sy, c)| (sx / c as f64, sy / c as f64))
            .collect()
    }
}

/// Interleaved 8-bit RGB raster.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }
}

/// Real-valued map with values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Heatmap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    /// Foreground where the value is at least `t`.
    pub fn binarize(&self, t: f64) -> Vec<bool> {
        self.data.iter().map(|&v| v as f64 >= t).collect()
    }
}
