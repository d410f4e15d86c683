//! Layer geometry, the trained network container, and the forward pass.
//!
//! A layer turns a feature map into a grid of sigmoid-activated similarity
//! scores: channel `j` at cell `(r, c)` is `sigmoid(sim(patch(r, c), g_j))`.
//! Stacking layers whose windows downsample the map, the spatial size must
//! shrink to `1x1` at the last layer, where the map is a single vector
//! describing the whole (downsampled) image.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::filters::FilterBank;
use crate::scalar::Real;
use crate::tensor::{extract_patches, grid_len, sigmoid, Tensor3};
use crate::zca::ZcaTransform;

/// Window geometry of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub patch_h: usize,
    pub patch_w: usize,
    pub stride: usize,
}

impl LayerSpec {
    pub fn new(patch_h: usize, patch_w: usize, stride: usize) -> Self {
        LayerSpec { patch_h, patch_w, stride }
    }

    /// Output grid size for an input of the given spatial size.
    pub fn output_size(&self, h: usize, w: usize) -> Option<(usize, usize)> {
        Some((
            grid_len(h, self.patch_h, self.stride)?,
            grid_len(w, self.patch_w, self.stride)?,
        ))
    }
}

/// The published 3-layer geometry for 28x28 inputs.
pub fn arch_28() -> Vec<LayerSpec> {
    vec![
        LayerSpec::new(4, 4, 2),
        LayerSpec::new(3, 3, 2),
        LayerSpec::new(6, 6, 2),
    ]
}

/// The published 5-layer geometry for 64x64 inputs.
pub fn arch_64() -> Vec<LayerSpec> {
    vec![
        LayerSpec::new(4, 4, 2),
        LayerSpec::new(3, 3, 2),
        LayerSpec::new(3, 3, 2),
        LayerSpec::new(3, 3, 2),
        LayerSpec::new(3, 3, 1),
    ]
}

/// Spatial sizes produced by an architecture, input first. Errors unless the
/// chain ends exactly at 1x1.
pub fn shape_chain(input_h: usize, input_w: usize, specs: &[LayerSpec]) -> Result<Vec<(usize, usize)>> {
    if specs.is_empty() {
        return Err(Error::BadArchitecture("no layers".into()));
    }
    let mut chain = vec![(input_h, input_w)];
    let (mut h, mut w) = (input_h, input_w);
    for (k, spec) in specs.iter().enumerate() {
        match spec.output_size(h, w) {
            Some((oh, ow)) => {
                h = oh;
                w = ow;
                chain.push((h, w));
            }
            None => {
                return Err(Error::BadArchitecture(format!(
                    "layer {k} window {}x{} stride {} does not fit {h}x{w}",
                    spec.patch_h, spec.patch_w, spec.stride
                )))
            }
        }
    }
    if (h, w) != (1, 1) {
        return Err(Error::BadArchitecture(format!("chain ends at {h}x{w}, not 1x1")));
    }
    Ok(chain)
}

/// One trained layer: geometry plus its filter bank.
///
/// `score_offset` is an optional additive shift applied to raw similarity
/// scores before the sigmoid. It defaults to zero (scores enter the sigmoid
/// unshifted) and is not persisted with the model.
#[derive(Debug, Clone)]
pub struct Layer<T> {
    pub spec: LayerSpec,
    pub bank: FilterBank<T>,
    pub score_offset: T,
}

impl<T: Real> Layer<T> {
    pub fn new(spec: LayerSpec, bank: FilterBank<T>) -> Self {
        Layer { spec, bank, score_offset: T::zero() }
    }
}

/// What was applied to pixels before training, recorded so generation can
/// invert it.
#[derive(Debug, Clone)]
pub enum Preprocessing<T> {
    /// Raw tensors as loaded.
    None,
    /// Pixels scaled to `[0, 1]` at load time; nothing further.
    Normalize,
    /// Channel-wise ZCA whitening on `[0, 1]` pixels.
    Zca(ZcaTransform<T>),
}

impl<T> Preprocessing<T> {
    pub fn tag(&self) -> u8 {
        match self {
            Preprocessing::None => 0,
            Preprocessing::Normalize => 1,
            Preprocessing::Zca(_) => 2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Preprocessing::None => "none",
            Preprocessing::Normalize => "normalize",
            Preprocessing::Zca(_) => "zca",
        }
    }
}

/// Training provenance kept with the model.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainMeta {
    /// Spawn threshold used per layer.
    pub alphas: Vec<f64>,
    /// Base RNG seed of the training run.
    pub seed: u64,
    /// Generation hyperparameters recorded as run defaults.
    pub gen_delta1: f64,
    pub gen_delta2: f64,
    pub gen_delta3: f64,
    pub gen_n: u32,
}

impl Default for TrainMeta {
    fn default() -> Self {
        TrainMeta {
            alphas: Vec::new(),
            seed: 0,
            gen_delta1: 1.0,
            gen_delta2: 1.0,
            gen_delta3: 1.0,
            gen_n: 10,
        }
    }
}

/// An ordered stack of trained layers plus preprocessing metadata.
#[derive(Debug, Clone)]
pub struct Network<T> {
    input_shape: (usize, usize, usize),
    layers: Vec<Layer<T>>,
    preprocessing: Preprocessing<T>,
    meta: TrainMeta,
}

impl<T: Real> Network<T> {
    /// Assemble a network, validating the spatial chain and the channel
    /// chaining between consecutive banks.
    pub fn new(
        input_shape: (usize, usize, usize),
        layers: Vec<Layer<T>>,
        preprocessing: Preprocessing<T>,
        meta: TrainMeta,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::UntrainedNetwork);
        }
        let specs: Vec<LayerSpec> = layers.iter().map(|l| l.spec).collect();
        shape_chain(input_shape.0, input_shape.1, &specs)?;
        let mut channels = input_shape.2;
        for (k, layer) in layers.iter().enumerate() {
            let expected = (layer.spec.patch_h, layer.spec.patch_w, channels);
            if layer.bank.patch_shape() != expected {
                return Err(Error::ShapeMismatch {
                    expected: format!("layer {k} bank patches {expected:?}"),
                    got: format!("{:?}", layer.bank.patch_shape()),
                });
            }
            if layer.bank.is_empty() {
                return Err(Error::EmptyBank);
            }
            channels = layer.bank.len();
        }
        Ok(Network { input_shape, layers, preprocessing, meta })
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.input_shape
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layer(&self, index: usize) -> &Layer<T> {
        &self.layers[index]
    }

    pub fn preprocessing(&self) -> &Preprocessing<T> {
        &self.preprocessing
    }

    pub fn meta(&self) -> &TrainMeta {
        &self.meta
    }

    pub fn meta_mut(&mut self) -> &mut TrainMeta {
        &mut self.meta
    }

    /// Filter count of the final layer (the noise dimensionality).
    pub fn final_filter_count(&self) -> usize {
        self.layers.last().map(|l| l.bank.len()).unwrap_or(0)
    }

    /// Spatial sizes along the stack, input first.
    pub fn spatial_chain(&self) -> Vec<(usize, usize)> {
        let specs: Vec<LayerSpec> = self.layers.iter().map(|l| l.spec).collect();
        shape_chain(self.input_shape.0, self.input_shape.1, &specs).expect("validated at construction")
    }

    /// Apply the recorded preprocessing to a raw `[0, 1]` image.
    pub fn preprocess(&self, image: &Tensor3<T>) -> Result<Tensor3<T>> {
        match &self.preprocessing {
            Preprocessing::None | Preprocessing::Normalize => Ok(image.clone()),
            Preprocessing::Zca(z) => z.apply(image),
        }
    }

    /// Undo preprocessing on a generated tensor and clamp pixels to `[0, 1]`.
    pub fn postprocess(&self, raw: &Tensor3<T>) -> Result<Tensor3<T>> {
        let restored = match &self.preprocessing {
            Preprocessing::None | Preprocessing::Normalize => raw.clone(),
            Preprocessing::Zca(z) => z.invert(raw)?,
        };
        Ok(restored.map(|v| v.max(T::zero()).min(T::one())))
    }

    /// Run the full forward pass, returning every layer's feature map
    /// (first layer first; the last map is `1x1xN_L`).
    pub fn forward(&self, image: &Tensor3<T>) -> Result<Vec<Tensor3<T>>> {
        if image.shape() != self.input_shape {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", self.input_shape),
                got: format!("{:?}", image.shape()),
            });
        }
        let mut current = self.preprocess(image)?;
        let mut maps = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            current = forward_layer_offset(&current, layer.spec, &layer.bank, layer.score_offset)?;
            maps.push(current.clone());
        }
        Ok(maps)
    }

    /// Forward a batch, fanning images out across threads.
    pub fn forward_batch(&self, images: &[Tensor3<T>]) -> Result<Vec<Vec<Tensor3<T>>>> {
        images.par_iter().map(|im| self.forward(im)).collect()
    }
}

/// One layer's forward map: sigmoid similarity scores of every window
/// against every filter.
pub fn forward_layer<T: Real>(t: &Tensor3<T>, spec: LayerSpec, bank: &FilterBank<T>) -> Result<Tensor3<T>> {
    forward_layer_offset(t, spec, bank, T::zero())
}

pub(crate) fn forward_layer_offset<T: Real>(
    t: &Tensor3<T>,
    spec: LayerSpec,
    bank: &FilterBank<T>,
    score_offset: T,
) -> Result<Tensor3<T>> {
    if bank.is_empty() {
        return Err(Error::EmptyBank);
    }
    if bank.patch_shape() != (spec.patch_h, spec.patch_w, t.channels()) {
        return Err(Error::ShapeMismatch {
            expected: format!("{:?}", bank.patch_shape()),
            got: format!("({}, {}, {})", spec.patch_h, spec.patch_w, t.channels()),
        });
    }
    let grid = extract_patches(t, spec.patch_h, spec.patch_w, spec.stride)?;
    let mut out = Tensor3::zeros(grid.rows, grid.cols, bank.len());
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let patch = grid.patch(r, c);
            for (j, g) in bank.filters().iter().enumerate() {
                out.set(r, c, j, sigmoid(g.similarity(patch) + score_offset));
            }
        }
    }
    Ok(out)
}

/// Spatial extent of the input-image region feeding one cell at layer
/// `layer_index` (0-based). This is the patch size a hidden-layer sample
/// expands to.
pub fn receptive_field(specs: &[LayerSpec], layer_index: usize) -> (usize, usize) {
    let mut rh = 1usize;
    let mut rw = 1usize;
    for spec in specs[..=layer_index].iter().rev() {
        rh = (rh - 1) * spec.stride + spec.patch_h;
        rw = (rw - 1) * spec.stride + spec.patch_w;
    }
    (rh, rw)
}

/// Largest sigmoid channel value a filter can produce, attained when the
/// window equals the filter mean.
pub fn peak_activation<T: Real>(sigma: T) -> T {
    sigmoid(-(crate::scalar::ln_sqrt_2pi::<T>() + sigma.ln()))
}
