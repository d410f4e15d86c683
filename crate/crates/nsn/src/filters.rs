//! Isotropic Gaussian filters over patch space and banks of them.
//!
//! A filter is a mean tensor `mu` with one scalar deviation `sigma`. Its
//! similarity to a patch `x` is the log-density
//!
//! ```text
//! sim(x, g) = -ln(sqrt(2*pi) * sigma) - ||x - mu||^2 / (2 * sigma^2)
//! ```
//!
//! with `||.||` the L2 norm over all patch elements. Scores stay in log
//! space everywhere; they are only exponentiated inside the generation
//! softmax.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::{ln_sqrt_2pi, real, Real};
use crate::tensor::Tensor3;

/// Smallest admissible sigma. A singleton cluster has zero spread, which
/// would put a division by zero into the score; clamping keeps such filters
/// merely very sharp.
pub const SIGMA_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianFilter<T> {
    pub mean: Tensor3<T>,
    pub sigma: T,
}

impl<T: Real> GaussianFilter<T> {
    pub fn new(mean: Tensor3<T>, sigma: T) -> Self {
        debug_assert!(sigma > T::zero());
        GaussianFilter { mean, sigma }
    }

    /// Log-density similarity of a patch to this filter.
    #[inline]
    pub fn similarity(&self, x: &Tensor3<T>) -> T {
        debug_assert_eq!(x.shape(), self.mean.shape());
        let d2 = x.squared_distance(&self.mean);
        -(ln_sqrt_2pi::<T>() + self.sigma.ln()) - d2 / (real::<T>(2.0) * self.sigma * self.sigma)
    }

    /// Draw `mu + delta2 * sigma * M` with `M` elementwise standard normal.
    pub fn sample<R: Rng + ?Sized>(&self, delta2: T, rng: &mut R) -> Tensor3<T> {
        let scale = delta2 * self.sigma;
        if scale == T::zero() {
            return self.mean.clone();
        }
        let (h, w, c) = self.mean.shape();
        let data = self
            .mean
            .as_slice()
            .iter()
            .map(|&m| {
                let z: f64 = rng.sample(StandardNormal);
                m + scale * real::<T>(z)
            })
            .collect();
        Tensor3::from_vec(h, w, c, data).expect("sample preserves shape")
    }
}

/// The ordered filters of one layer. All means share one patch shape.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterBank<T> {
    patch_shape: (usize, usize, usize),
    filters: Vec<GaussianFilter<T>>,
}

impl<T: Real> FilterBank<T> {
    pub fn new(patch_h: usize, patch_w: usize, channels: usize) -> Self {
        FilterBank {
            patch_shape: (patch_h, patch_w, channels),
            filters: Vec::new(),
        }
    }

    pub fn patch_shape(&self) -> (usize, usize, usize) {
        self.patch_shape
    }

    pub fn len(&self) -> usize {
        self.filters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.filters.is_empty()
    }

    pub fn filters(&self) -> &[GaussianFilter<T>] {
        &self.filters
    }

    pub fn filter(&self, index: usize) -> &GaussianFilter<T> {
        &self.filters[index]
    }

    pub fn push(&mut self, filter: GaussianFilter<T>) {
        debug_assert_eq!(filter.mean.shape(), self.patch_shape);
        self.filters.push(filter);
    }

    /// Drop the filters at the given (sorted, deduplicated) indices.
    pub fn retain_by_index(&mut self, keep: impl Fn(usize) -> bool) {
        let mut i = 0;
        self.filters.retain(|_| {
            let k = keep(i);
            i += 1;
            k
        });
    }

    /// Index and score of the highest-similarity filter. Ties break to the
    /// lowest index.
    pub fn best_filter(&self, x: &Tensor3<T>) -> Result<(usize, T)> {
        if self.filters.is_empty() {
            return Err(Error::EmptyBank);
        }
        let mut best = (0usize, self.filters[0].similarity(x));
        for (j, g) in self.filters.iter().enumerate().skip(1) {
            let s = g.similarity(x);
            if s > best.1 {
                best = (j, s);
            }
        }
        Ok(best)
    }
}
