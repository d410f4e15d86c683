//! Rank-3 tensors, strided patch extraction, and overlap-averaged stitching.
//!
//! Feature maps and images are dense `height x width x channels` arrays in
//! row-major `(row, col, channel)` order. Patches are taken with *valid*
//! padding only: a `p x p` window slides with stride `s` and windows that
//! would cross the edge are dropped, so an `n`-wide input yields
//! `(n - p) / s + 1` windows.

use crate::error::{Error, Result};
use crate::scalar::{real, Real};

/// Dense rank-3 array in row-major `(row, col, channel)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Real> Tensor3<T> {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Tensor3 {
            height,
            width,
            channels,
            data: vec![T::zero(); height * width * channels],
        }
    }

    pub fn filled(height: usize, width: usize, channels: usize, value: T) -> Self {
        Tensor3 {
            height,
            width,
            channels,
            data: vec![value; height * width * channels],
        }
    }

    /// Wrap an existing row-major buffer. Errors if the length is off.
    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != height * width * channels {
            return Err(Error::ShapeMismatch {
                expected: format!("{} elements ({height}x{width}x{channels})", height * width * channels),
                got: format!("{} elements", data.len()),
            });
        }
        Ok(Tensor3 { height, width, channels, data })
    }

    /// A 1x1xN tensor holding one channel vector.
    pub fn from_channel_vector(v: Vec<T>) -> Self {
        Tensor3 { height: 1, width: 1, channels: v.len(), data: v }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    fn index(&self, row: usize, col: usize, channel: usize) -> usize {
        (row * self.width + col) * self.channels + channel
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> T {
        self.data[self.index(row, col, channel)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, channel: usize, value: T) {
        let i = self.index(row, col, channel);
        self.data[i] = value;
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

    /// The channel vector at one spatial cell, contiguous in memory.
    #[inline]
    pub fn channel_vector(&self, row: usize, col: usize) -> &[T] {
        let start = (row * self.width + col) * self.channels;
        &self.data[start..start + self.channels]
    }

    /// Copy out the `h x w` sub-tensor with top-left corner `(row0, col0)`.
    pub fn sub_tensor(&self, row0: usize, col0: usize, h: usize, w: usize) -> Tensor3<T> {
        debug_assert!(row0 + h <= self.height && col0 + w <= self.width);
        let mut data = Vec::with_capacity(h * w * self.channels);
        for r in 0..h {
            let base = ((row0 + r) * self.width + col0) * self.channels;
            data.extend_from_slice(&self.data[base..base + w * self.channels]);
        }
        Tensor3 { height: h, width: w, channels: self.channels, data }
    }

    pub fn map(&self, mut f: impl FnMut(T) -> T) -> Tensor3<T> {
        Tensor3 {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Squared L2 distance to another tensor of the same shape.
    #[inline]
    pub fn squared_distance(&self, other: &Tensor3<T>) -> T {
        debug_assert_eq!(self.shape(), other.shape());
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| {
                let d = a - b;
                d * d
            })
            .sum()
    }
}

/// Number of windows along one axis under valid padding, or `None` when the
/// patch does not fit.
pub fn grid_len(extent: usize, patch: usize, stride: usize) -> Option<usize> {
    if patch == 0 || stride == 0 || patch > extent {
        None
    } else {
        Some((extent - patch) / stride + 1)
    }
}

/// Patches extracted from one tensor, with the geometry needed to stitch
/// them back.
#[derive(Debug, Clone)]
pub struct PatchGrid<T> {
    pub rows: usize,
    pub cols: usize,
    pub patch_h: usize,
    pub patch_w: usize,
    pub stride: usize,
    pub channels: usize,
    /// Row-major `rows x cols`, each `patch_h x patch_w x channels`.
    pub patches: Vec<Tensor3<T>>,
}

impl<T: Real> PatchGrid<T> {
    #[inline]
    pub fn patch(&self, row: usize, col: usize) -> &Tensor3<T> {
        &self.patches[row * self.cols + col]
    }
}

/// Slide a `patch_h x patch_w` window over `t` with the given stride and
/// collect every full window (valid padding, no zero fill).
pub fn extract_patches<T: Real>(
    t: &Tensor3<T>,
    patch_h: usize,
    patch_w: usize,
    stride: usize,
) -> Result<PatchGrid<T>> {
    if stride == 0 {
        return Err(Error::InvalidStride(stride));
    }
    let (rows, cols) = match (
        grid_len(t.height(), patch_h, stride),
        grid_len(t.width(), patch_w, stride),
    ) {
        (Some(r), Some(c)) => (r, c),
        _ => {
            return Err(Error::PatchTooLarge {
                patch_h,
                patch_w,
                height: t.height(),
                width: t.width(),
            })
        }
    };

    let mut patches = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            patches.push(t.sub_tensor(r * stride, c * stride, patch_h, patch_w));
        }
    }
    Ok(PatchGrid {
        rows,
        cols,
        patch_h,
        patch_w,
        stride,
        channels: t.channels(),
        patches,
    })
}

/// Inverse of [`extract_patches`]: place every patch back at its origin and
/// average where patches overlap. Every output position must be covered by
/// at least one patch.
pub fn stitch_patches<T: Real>(grid: &PatchGrid<T>, out_h: usize, out_w: usize) -> Result<Tensor3<T>> {
    if grid_len(out_h, grid.patch_h, grid.stride) != Some(grid.rows)
        || grid_len(out_w, grid.patch_w, grid.stride) != Some(grid.cols)
    {
        return Err(Error::StitchGeometry { out_h, out_w });
    }

    let channels = grid.channels;
    let mut sum = Tensor3::<T>::zeros(out_h, out_w, channels);
    let mut coverage = vec![0u32; out_h * out_w];

    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let patch = grid.patch(r, c);
            let (row0, col0) = (r * grid.stride, c * grid.stride);
            for pr in 0..grid.patch_h {
                for pc in 0..grid.patch_w {
                    coverage[(row0 + pr) * out_w + (col0 + pc)] += 1;
                    for ch in 0..channels {
                        let v = sum.get(row0 + pr, col0 + pc, ch) + patch.get(pr, pc, ch);
                        sum.set(row0 + pr, col0 + pc, ch, v);
                    }
                }
            }
        }
    }

    for row in 0..out_h {
        for col in 0..out_w {
            let n = coverage[row * out_w + col];
            if n == 0 {
                return Err(Error::UncoveredPosition { row, col });
            }
            let inv = T::one() / real::<T>(n as f64);
            for ch in 0..channels {
                let v = sum.get(row, col, ch) * inv;
                sum.set(row, col, ch, v);
            }
        }
    }
    Ok(sum)
}

/// Elementwise logistic sigmoid, `1 / (1 + exp(-x))`.
pub fn sigmoid_map<T: Real>(t: &Tensor3<T>) -> Tensor3<T> {
    t.map(sigmoid)
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}
