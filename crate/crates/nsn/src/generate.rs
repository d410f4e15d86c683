//! Backward sampling: from a final-layer noise vector down to pixels.
//!
//! Given the feature map of layer `k`, the map below it is rebuilt patch by
//! patch. Each cell's channel vector `v` is sharpened with a softmax
//! (`softmax(delta1 * v)`), `n` filter indices are drawn from it with
//! replacement, and the normalized counts weight a sum of per-filter samples
//! `y_j = mu_j + delta2 * sigma_j * M`. The patch is `delta3 * w^T Y`;
//! overlapping patches are stitched by averaging. Repeating this down the
//! stack turns a `1x1xN_L` noise vector into an image.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::filters::FilterBank;
use crate::network::{LayerSpec, Network};
use crate::scalar::{real, Real};
use crate::tensor::{grid_len, stitch_patches, PatchGrid, Tensor3};

/// Hyperparameters for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    /// Softmax sharpening of channel vectors.
    pub delta1: f64,
    /// Scale of the per-filter sampling noise.
    pub delta2: f64,
    /// Contrast scale of generated patches.
    pub delta3: f64,
    /// Multinomial draws per cell.
    pub n: usize,
    /// RNG seed recorded for the run; callers derive their stream from it.
    pub seed: u64,
    /// Redraw filter samples for every cell instead of sharing one draw per
    /// layer. When set, fresh samples are drawn for the filters each cell
    /// actually uses.
    pub per_cell_redraw: bool,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            delta1: 1.0,
            delta2: 1.0,
            delta3: 1.0,
            n: 10,
            seed: 0,
            per_cell_redraw: false,
        }
    }
}

/// Per-cell weight vectors over a layer's filters.
#[derive(Debug, Clone)]
pub struct WeightMap<T> {
    rows: usize,
    cols: usize,
    filters: usize,
    weights: Vec<T>,
}

impl<T: Real> WeightMap<T> {
    fn zeros(rows: usize, cols: usize, filters: usize) -> Self {
        WeightMap { rows, cols, filters, weights: vec![T::zero(); rows * cols * filters] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn filters(&self) -> usize {
        self.filters
    }

    pub fn vector(&self, row: usize, col: usize) -> &[T] {
        let start = (row * self.cols + col) * self.filters;
        &self.weights[start..start + self.filters]
    }

    fn set_vector(&mut self, row: usize, col: usize, w: &[T]) {
        let start = (row * self.cols + col) * self.filters;
        self.weights[start..start + self.filters].copy_from_slice(w);
    }
}

/// Numerically stabilized `softmax(delta1 * v)`.
pub fn softmax_sharpened<T: Real>(v: &[T], delta1: f64) -> Vec<T> {
    let d1 = real::<T>(delta1);
    let scaled: Vec<T> = v.iter().map(|&x| d1 * x).collect();
    let max = scaled.iter().cloned().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = scaled.iter().map(|&x| (x - max).exp()).collect();
    let sum: T = exps.iter().cloned().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Sharpen a channel vector and draw `cfg.n` filter indices with
/// replacement; the normalized counts are the cell's weight vector.
pub fn weight_vector<T: Real, R: Rng + ?Sized>(v: &[T], cfg: &GenConfig, rng: &mut R) -> Vec<T> {
    assert!(cfg.n >= 1, "at least one multinomial draw is required");
    let probs = softmax_sharpened(v, cfg.delta1);
    let counts = multinomial_counts(&probs, cfg.n, rng);
    let inv_n = T::one() / real::<T>(cfg.n as f64);
    counts.into_iter().map(|c| real::<T>(c as f64) * inv_n).collect()
}

fn multinomial_counts<T: Real, R: Rng + ?Sized>(probs: &[T], n: usize, rng: &mut R) -> Vec<u32> {
    let mut cumulative = Vec::with_capacity(probs.len());
    let mut acc = T::zero();
    for &p in probs {
        acc += p;
        cumulative.push(acc);
    }
    let mut counts = vec![0u32; probs.len()];
    for _ in 0..n {
        let u = real::<T>(rng.gen::<f64>()) * acc;
        let idx = match cumulative.binary_search_by(|c| c.partial_cmp(&u).unwrap()) {
            Ok(i) => i + 1,
            Err(i) => i,
        };
        counts[idx.min(probs.len() - 1)] += 1;
    }
    counts
}

/// Rebuild the feature map below `f_k`: one weighted-sample patch per cell,
/// stitched with overlap averaging into `target` = `(height, width,
/// channels)`. Returns the map and the weight map used to build it.
pub fn generate_feature_map<T: Real, R: Rng + ?Sized>(
    f_k: &Tensor3<T>,
    bank: &FilterBank<T>,
    spec: LayerSpec,
    target: (usize, usize, usize),
    cfg: &GenConfig,
    rng: &mut R,
) -> Result<(Tensor3<T>, WeightMap<T>)> {
    let (rows, cols, n_filters) = f_k.shape();
    if n_filters != bank.len() {
        return Err(Error::ShapeMismatch {
            expected: format!("{} channels (bank size)", bank.len()),
            got: format!("{n_filters} channels"),
        });
    }
    let (th, tw, tc) = target;
    let consistent = grid_len(th, spec.patch_h, spec.stride) == Some(rows)
        && grid_len(tw, spec.patch_w, spec.stride) == Some(cols)
        && bank.patch_shape() == (spec.patch_h, spec.patch_w, tc);
    if !consistent {
        return Err(Error::StitchGeometry { out_h: th, out_w: tw });
    }

    let delta2 = real::<T>(cfg.delta2);
    let delta3 = real::<T>(cfg.delta3);
    let patch_len = spec.patch_h * spec.patch_w * tc;

    // One shared draw per layer unless per-cell redraw is requested.
    let shared: Option<Vec<Tensor3<T>>> = if cfg.per_cell_redraw {
        None
    } else {
        Some(bank.filters().iter().map(|g| g.sample(delta2, rng)).collect())
    };

    let mut weight_map = WeightMap::zeros(rows, cols, n_filters);
    let mut patches = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let w = weight_vector(f_k.channel_vector(r, c), cfg, rng);
            weight_map.set_vector(r, c, &w);

            let mut data = vec![T::zero(); patch_len];
            for (j, &wj) in w.iter().enumerate() {
                if wj == T::zero() {
                    continue;
                }
                let scale = delta3 * wj;
                match &shared {
                    Some(samples) => {
                        for (d, &y) in data.iter_mut().zip(samples[j].as_slice()) {
                            *d += scale * y;
                        }
                    }
                    None => {
                        let fresh = bank.filter(j).sample(delta2, rng);
                        for (d, &y) in data.iter_mut().zip(fresh.as_slice()) {
                            *d += scale * y;
                        }
                    }
                }
            }
            patches.push(Tensor3::from_vec(spec.patch_h, spec.patch_w, tc, data)?);
        }
    }

    let grid = PatchGrid {
        rows,
        cols,
        patch_h: spec.patch_h,
        patch_w: spec.patch_w,
        stride: spec.stride,
        channels: tc,
        patches,
    };
    Ok((stitch_patches(&grid, th, tw)?, weight_map))
}

/// Input shape of layer `index`: what its windows slide over.
fn layer_input_shape<T: Real>(net: &Network<T>, index: usize) -> (usize, usize, usize) {
    let chain = net.spatial_chain();
    let (h, w) = chain[index];
    let c = if index == 0 {
        net.input_shape().2
    } else {
        net.layer(index - 1).bank.len()
    };
    (h, w, c)
}

/// Walk from the output map of layer `start` down to image space,
/// collecting the weight map used at each level (top first).
fn descend<T: Real, R: Rng + ?Sized>(
    net: &Network<T>,
    start: usize,
    mut f: Tensor3<T>,
    cfg: &GenConfig,
    rng: &mut R,
) -> Result<(Tensor3<T>, Vec<WeightMap<T>>)> {
    let mut weight_maps = Vec::with_capacity(start + 1);
    for index in (0..=start).rev() {
        let layer = net.layer(index);
        let target = layer_input_shape(net, index);
        let (next, weights) = generate_feature_map(&f, &layer.bank, layer.spec, target, cfg, rng)?;
        weight_maps.push(weights);
        f = next;
    }
    Ok((f, weight_maps))
}

/// Reconstruct an image from the output map of layer `layer_index`,
/// inverting preprocessing and clamping pixels at the end.
pub fn reconstruct_image_from<T: Real, R: Rng + ?Sized>(
    net: &Network<T>,
    layer_index: usize,
    f: &Tensor3<T>,
    cfg: &GenConfig,
    rng: &mut R,
) -> Result<Tensor3<T>> {
    if layer_index >= net.num_layers() {
        return Err(Error::InvalidLayerIndex { index: layer_index, layers: net.num_layers() });
    }
    let (raw, _) = descend(net, layer_index, f.clone(), cfg, rng)?;
    net.postprocess(&raw)
}

/// Generate one image from a final-layer noise vector.
pub fn generate<T: Real, R: Rng + ?Sized>(
    net: &Network<T>,
    z: &[T],
    cfg: &GenConfig,
    rng: &mut R,
) -> Result<Tensor3<T>> {
    Ok(generate_traced(net, z, cfg, rng)?.0)
}

/// [`generate`], also returning the weight maps of every level (top first).
pub fn generate_traced<T: Real, R: Rng + ?Sized>(
    net: &Network<T>,
    z: &[T],
    cfg: &GenConfig,
    rng: &mut R,
) -> Result<(Tensor3<T>, Vec<WeightMap<T>>)> {
    let n_l = net.final_filter_count();
    if z.len() != n_l {
        return Err(Error::ShapeMismatch {
            expected: format!("noise of length {n_l}"),
            got: format!("length {}", z.len()),
        });
    }
    let f_top = Tensor3::from_channel_vector(z.to_vec());
    let (raw, weight_maps) = descend(net, net.num_layers() - 1, f_top, cfg, rng)?;
    Ok((net.postprocess(&raw)?, weight_maps))
}

/// Draw a standard-normal noise vector of the given length.
pub fn random_noise<T: Real, R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<T> {
    (0..len)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            real::<T>(z)
        })
        .collect()
}

/// Sample from hidden layer `k` (1-based): draw a `1x1xN_k` noise vector,
/// treat it as one cell of that layer's map, and expand it down to an
/// input-space patch of the layer's receptive-field size.
///
/// When the receptive field covers the whole input (always true for
/// `k = L`), recorded preprocessing is inverted like in [`generate`];
/// otherwise a partial patch cannot be un-whitened and is only clamped.
pub fn sample_hidden<T: Real, R: Rng + ?Sized>(
    net: &Network<T>,
    k: usize,
    cfg: &GenConfig,
    rng: &mut R,
) -> Result<Tensor3<T>> {
    if k == 0 || k > net.num_layers() {
        return Err(Error::InvalidLayerIndex { index: k, layers: net.num_layers() });
    }
    let start = k - 1;
    let z = random_noise::<T, _>(net.layer(start).bank.len(), rng);
    let mut f = Tensor3::from_channel_vector(z);
    for index in (0..=start).rev() {
        let layer = net.layer(index);
        let th = (f.height() - 1) * layer.spec.stride + layer.spec.patch_h;
        let tw = (f.width() - 1) * layer.spec.stride + layer.spec.patch_w;
        let tc = if index == 0 {
            net.input_shape().2
        } else {
            net.layer(index - 1).bank.len()
        };
        let (next, _) = generate_feature_map(&f, &layer.bank, layer.spec, (th, tw, tc), cfg, rng)?;
        f = next;
    }
    if f.shape() == net.input_shape() {
        net.postprocess(&f)
    } else {
        Ok(f.map(|v| v.max(T::zero()).min(T::one())))
    }
}

/// One-hot noise vector selecting final-layer filter `j`.
pub fn noise_from_filter<T: Real>(j: usize, n_filters: usize) -> Result<Vec<T>> {
    if j >= n_filters {
        return Err(Error::FilterIndexOutOfRange { index: j, count: n_filters });
    }
    let mut z = vec![T::zero(); n_filters];
    z[j] = T::one();
    Ok(z)
}

/// Linear interpolation `(1 - t) * a + t * b`.
pub fn interpolate_noise<T: Real>(a: &[T], b: &[T], t: f64) -> Vec<T> {
    assert_eq!(a.len(), b.len(), "noise vectors must share a length");
    let t = real::<T>(t);
    let s = T::one() - t;
    a.iter().zip(b).map(|(&x, &y)| s * x + t * y).collect()
}

/// Generate the map below the final layer once per noise vector, combine
/// the maps with the given coefficients, and reconstruct the image from
/// the combination.
pub fn feature_arithmetic<T: Real, R: Rng + ?Sized>(
    net: &Network<T>,
    noises: &[Vec<T>],
    coeffs: &[f64],
    cfg: &GenConfig,
    rng: &mut R,
) -> Result<Tensor3<T>> {
    if noises.len() != coeffs.len() || noises.is_empty() {
        return Err(Error::LengthMismatch { coeffs: coeffs.len(), noises: noises.len() });
    }
    let n_l = net.final_filter_count();
    let top = net.num_layers() - 1;
    let layer = net.layer(top);
    let target = layer_input_shape(net, top);

    let mut combined = Tensor3::<T>::zeros(target.0, target.1, target.2);
    for (z, &coeff) in noises.iter().zip(coeffs) {
        if z.len() != n_l {
            return Err(Error::ShapeMismatch {
                expected: format!("noise of length {n_l}"),
                got: format!("length {}", z.len()),
            });
        }
        let f_top = Tensor3::from_channel_vector(z.clone());
        let (f_below, _) = generate_feature_map(&f_top, &layer.bank, layer.spec, target, cfg, rng)?;
        let coeff = real::<T>(coeff);
        for (acc, &v) in combined.as_mut_slice().iter_mut().zip(f_below.as_slice()) {
            *acc += coeff * v;
        }
    }

    if top == 0 {
        return net.postprocess(&combined);
    }
    let (raw, _) = descend(net, top - 1, combined, cfg, rng)?;
    net.postprocess(&raw)
}

/// Re-style an image: run it forward to the first-layer map, then apply one
/// backward reconstruction step to pixels. With `delta2 > 0` repeated calls
/// give different renderings of the same structure.
pub fn stylize<T: Real, R: Rng + ?Sized>(
    net: &Network<T>,
    image: &Tensor3<T>,
    cfg: &GenConfig,
    rng: &mut R,
) -> Result<Tensor3<T>> {
    let maps = net.forward(image)?;
    reconstruct_image_from(net, 0, &maps[0], cfg, rng)
}
