//! Channel-wise ZCA whitening.
//!
//! Each color channel is whitened independently: an image's channel plane is
//! flattened to a vector, and the transform decorrelates those vectors over
//! the dataset while staying as close as possible to the pixel basis.
//! With eigendecomposition `C = U diag(lambda) U^T` of the plane covariance,
//!
//! ```text
//! whitening   = U (diag(lambda) + eps*I)^(-1/2) U^T
//! dewhitening = U (diag(lambda) + eps*I)^(+1/2) U^T
//! ```
//!
//! The eigendecomposition always runs in `f64`; the resulting matrices are
//! cast to the working scalar type afterwards.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::scalar::{real, Real};
use crate::tensor::Tensor3;

/// One fitted channel-wise whitening transform.
#[derive(Debug, Clone, PartialEq)]
pub struct ZcaTransform<T> {
    plane_h: usize,
    plane_w: usize,
    channels: usize,
    epsilon: f64,
    /// Per channel: plane mean vector, length `plane_h * plane_w`.
    mean: Vec<Vec<T>>,
    /// Per channel: row-major `dim x dim` whitening matrix.
    whitening: Vec<Vec<T>>,
    /// Per channel: row-major `dim x dim` dewhitening matrix.
    dewhitening: Vec<Vec<T>>,
}

impl<T: Real> ZcaTransform<T> {
    pub fn plane_shape(&self) -> (usize, usize) {
        (self.plane_h, self.plane_w)
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dim(&self) -> usize {
        self.plane_h * self.plane_w
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn mean(&self, channel: usize) -> &[T] {
        &self.mean[channel]
    }

    pub fn whitening(&self, channel: usize) -> &[T] {
        &self.whitening[channel]
    }

    pub fn dewhitening(&self, channel: usize) -> &[T] {
        &self.dewhitening[channel]
    }

    /// Rebuild from raw parts (model deserialization).
    pub fn from_parts(
        plane_h: usize,
        plane_w: usize,
        channels: usize,
        epsilon: f64,
        mean: Vec<Vec<T>>,
        whitening: Vec<Vec<T>>,
        dewhitening: Vec<Vec<T>>,
    ) -> Result<Self> {
        let dim = plane_h * plane_w;
        let ok = mean.len() == channels
            && whitening.len() == channels
            && dewhitening.len() == channels
            && mean.iter().all(|v| v.len() == dim)
            && whitening.iter().all(|v| v.len() == dim * dim)
            && dewhitening.iter().all(|v| v.len() == dim * dim);
        if !ok {
            return Err(Error::Format("inconsistent whitening transform parts".into()));
        }
        Ok(ZcaTransform { plane_h, plane_w, channels, epsilon, mean, whitening, dewhitening })
    }

    fn check_shape(&self, t: &Tensor3<T>) -> Result<()> {
        if t.shape() != (self.plane_h, self.plane_w, self.channels) {
            return Err(Error::ShapeMismatch {
                expected: format!("{}x{}x{}", self.plane_h, self.plane_w, self.channels),
                got: format!("{}x{}x{}", t.height(), t.width(), t.channels()),
            });
        }
        Ok(())
    }

    /// Forward transform: per channel, `whitening * (x - mean)`.
    pub fn apply(&self, t: &Tensor3<T>) -> Result<Tensor3<T>> {
        self.check_shape(t)?;
        Ok(self.transform(t, true))
    }

    /// Inverse transform: per channel, `dewhitening * x + mean`.
    pub fn invert(&self, t: &Tensor3<T>) -> Result<Tensor3<T>> {
        self.check_shape(t)?;
        Ok(self.transform(t, false))
    }

    fn transform(&self, t: &Tensor3<T>, forward: bool) -> Tensor3<T> {
        let dim = self.dim();
        let mut out = Tensor3::zeros(self.plane_h, self.plane_w, self.channels);
        let mut plane = vec![T::zero(); dim];
        for c in 0..self.channels {
            for r in 0..self.plane_h {
                for col in 0..self.plane_w {
                    let v = t.get(r, col, c);
                    plane[r * self.plane_w + col] = if forward { v - self.mean[c][r * self.plane_w + col] } else { v };
                }
            }
            let matrix = if forward { &self.whitening[c] } else { &self.dewhitening[c] };
            for i in 0..dim {
                let row = &matrix[i * dim..(i + 1) * dim];
                let mut acc = T::zero();
                for (m, x) in row.iter().zip(plane.iter()) {
                    acc += *m * *x;
                }
                if !forward {
                    acc += self.mean[c][i];
                }
                out.set(i / self.plane_w, i % self.plane_w, c, acc);
            }
        }
        out
    }
}

/// Fit a channel-wise ZCA transform on up to `max_images` images
/// (`0` = use all). Requires at least two images.
pub fn fit_zca<T: Real>(images: &[Tensor3<T>], epsilon: f64, max_images: usize) -> Result<ZcaTransform<T>> {
    let used = if max_images == 0 { images.len() } else { images.len().min(max_images) };
    if used < 2 {
        return Err(Error::DegenerateZca(used));
    }
    let (h, w, channels) = images[0].shape();
    if images.iter().any(|im| im.shape() != (h, w, channels)) {
        return Err(Error::NonUniformDataset);
    }
    let dim = h * w;
    let n = used;

    let mut mean = Vec::with_capacity(channels);
    let mut whitening = Vec::with_capacity(channels);
    let mut dewhitening = Vec::with_capacity(channels);

    for c in 0..channels {
        // Rows = flattened channel planes, in f64 for the decomposition.
        let mut data = DMatrix::<f64>::zeros(n, dim);
        for (i, im) in images.iter().take(n).enumerate() {
            for r in 0..h {
                for col in 0..w {
                    data[(i, r * w + col)] = im.get(r, col, c).to_f64().unwrap();
                }
            }
        }
        let mu: DVector<f64> = data.row_mean().transpose();
        for mut row in data.row_iter_mut() {
            row -= mu.transpose();
        }
        let mut cov = data.transpose() * &data / (n as f64 - 1.0);
        // Kill the tiny asymmetry from floating accumulation before eigen.
        symmetrize(&mut cov);

        let eig = cov.symmetric_eigen();
        let mut white = DMatrix::<f64>::zeros(dim, dim);
        let mut dewhite = DMatrix::<f64>::zeros(dim, dim);
        // U f(L) U^T built column by column: sum_k f(l_k) u_k u_k^T
        for k in 0..dim {
            let lambda = eig.eigenvalues[k].max(0.0) + epsilon;
            let u = eig.eigenvectors.column(k);
            let outer = u * u.transpose();
            white += &outer * lambda.powf(-0.5);
            dewhite += &outer * lambda.sqrt();
        }
        symmetrize(&mut white);
        symmetrize(&mut dewhite);

        mean.push(mu.iter().map(|&v| real::<T>(v)).collect());
        whitening.push(row_major(&white));
        dewhitening.push(row_major(&dewhite));
    }

    Ok(ZcaTransform {
        plane_h: h,
        plane_w: w,
        channels,
        epsilon,
        mean,
        whitening,
        dewhitening,
    })
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

fn row_major<T: Real>(m: &DMatrix<f64>) -> Vec<T> {
    let (rows, cols) = m.shape();
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            out.push(real::<T>(m[(r, c)]));
        }
    }
    out
}
