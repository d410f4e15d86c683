//! Occluded-image reconstruction.
//!
//! The final-layer map of an occluded image still describes a plausible
//! image, so the occluded region is regenerated by conditioning on it: run
//! the occluded image forward, rebuild a first-layer map from the top by
//! backward sampling, splice the rebuilt cells into the original first-layer
//! map wherever the occlusion dominates, and reconstruct pixels from the
//! spliced map.

use rand::Rng;

use crate::error::{Error, Result};
use crate::generate::{generate_feature_map, GenConfig};
use crate::network::Network;
use crate::scalar::Real;
use crate::tensor::Tensor3;

/// Boolean occlusion grid at image resolution; `true` marks occluded pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct OcclusionMask {
    height: usize,
    width: usize,
    data: Vec<bool>,
}

impl OcclusionMask {
    pub fn new(height: usize, width: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::ShapeMismatch {
                expected: format!("{} mask entries", height * width),
                got: format!("{}", data.len()),
            });
        }
        Ok(OcclusionMask { height, width, data })
    }

    pub fn all_clear(height: usize, width: usize) -> Self {
        OcclusionMask { height, width, data: vec![false; height * width] }
    }

    pub fn all_occluded(height: usize, width: usize) -> Self {
        OcclusionMask { height, width, data: vec![true; height * width] }
    }

    /// Occlude the rectangle `[row0, row0+h) x [col0, col0+w)`.
    pub fn with_rectangle(mut self, row0: usize, col0: usize, h: usize, w: usize) -> Self {
        for r in row0..(row0 + h).min(self.height) {
            for c in col0..(col0 + w).min(self.width) {
                self.data[r * self.width + c] = true;
            }
        }
        self
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn is_occluded(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col]
    }

    pub fn occluded_count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Which first-layer cells count as occluded: those whose receptive field
/// (the layer-1 window) is more than half masked.
pub fn occluded_cells<T: Real>(net: &Network<T>, mask: &OcclusionMask) -> Result<Vec<Vec<bool>>> {
    let (h, w, _) = net.input_shape();
    if (mask.height, mask.width) != (h, w) {
        return Err(Error::ShapeMismatch {
            expected: format!("{h}x{w} mask"),
            got: format!("{}x{}", mask.height, mask.width),
        });
    }
    let spec = net.layer(0).spec;
    let chain = net.spatial_chain();
    let (rows, cols) = chain[1];
    let window = (spec.patch_h * spec.patch_w) as f64;

    let mut grid = vec![vec![false; cols]; rows];
    for (r, row) in grid.iter_mut().enumerate() {
        for (c, cell) in row.iter_mut().enumerate() {
            let mut masked = 0usize;
            for pr in 0..spec.patch_h {
                for pc in 0..spec.patch_w {
                    if mask.is_occluded(r * spec.stride + pr, c * spec.stride + pc) {
                        masked += 1;
                    }
                }
            }
            *cell = masked as f64 > 0.5 * window;
        }
    }
    Ok(grid)
}

/// Everything the reconstruction produced, kept for inspection.
#[derive(Debug, Clone)]
pub struct InpaintResult<T> {
    /// Final reconstructed image, pixels in `[0, 1]`.
    pub image: Tensor3<T>,
    /// First-layer map of the occluded input.
    pub original_f1: Tensor3<T>,
    /// First-layer map rebuilt from the top of the stack.
    pub regenerated_f1: Tensor3<T>,
    /// The spliced map the image was reconstructed from.
    pub modified_f1: Tensor3<T>,
    /// Cell-level occlusion grid used for the splice.
    pub occluded_cells: Vec<Vec<bool>>,
}

/// Reconstruct the occluded parts of `image`. With `full_replace` the
/// rebuilt first-layer map is used everywhere instead of only in occluded
/// cells.
pub fn inpaint<T: Real, R: Rng + ?Sized>(
    net: &Network<T>,
    image: &Tensor3<T>,
    mask: &OcclusionMask,
    cfg: &GenConfig,
    rng: &mut R,
    full_replace: bool,
) -> Result<InpaintResult<T>> {
    let cells = occluded_cells(net, mask)?;
    let maps = net.forward(image)?;
    let original_f1 = maps[0].clone();
    let f_top = maps.last().expect("network has layers").clone();

    // Rebuild down to the first-layer map (stop above layer 0).
    let mut f = f_top;
    for index in (1..net.num_layers()).rev() {
        let layer = net.layer(index);
        let chain = net.spatial_chain();
        let (th, tw) = chain[index];
        let tc = net.layer(index - 1).bank.len();
        let (next, _) = generate_feature_map(&f, &layer.bank, layer.spec, (th, tw, tc), cfg, rng)?;
        f = next;
    }
    let regenerated_f1 = f;

    let mut modified_f1 = original_f1.clone();
    let channels = modified_f1.channels();
    for (r, row) in cells.iter().enumerate() {
        for (c, &occluded) in row.iter().enumerate() {
            if full_replace || occluded {
                for ch in 0..channels {
                    modified_f1.set(r, c, ch, regenerated_f1.get(r, c, ch));
                }
            }
        }
    }

    let layer0 = net.layer(0);
    let (raw, _) = generate_feature_map(
        &modified_f1,
        &layer0.bank,
        layer0.spec,
        net.input_shape(),
        cfg,
        rng,
    )?;
    let image = net.postprocess(&raw)?;

    Ok(InpaintResult {
        image,
        original_f1,
        regenerated_f1,
        modified_f1,
        occluded_cells: cells,
    })
}

/// Mean squared pixel error restricted to the occluded region.
pub fn occluded_mse<T: Real>(a: &Tensor3<T>, b: &Tensor3<T>, mask: &OcclusionMask) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", a.shape()),
            got: format!("{:?}", b.shape()),
        });
    }
    let (h, w, c) = a.shape();
    if (mask.height, mask.width) != (h, w) {
        return Err(Error::ShapeMismatch {
            expected: format!("{h}x{w} mask"),
            got: format!("{}x{}", mask.height, mask.width),
        });
    }
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for r in 0..h {
        for col in 0..w {
            if !mask.is_occluded(r, col) {
                continue;
            }
            for ch in 0..c {
                let d = a.get(r, col, ch).to_f64().unwrap() - b.get(r, col, ch).to_f64().unwrap();
                sum += d * d;
                count += 1;
            }
        }
    }
    if count == 0 {
        return Ok(0.0);
    }
    Ok(sum / count as f64)
}
