//! Layered Gaussian filter-bank image models.
//!
//! A network is a stack of layers, each holding a bank of isotropic
//! Gaussian filters over image patches. Layers are trained bottom-up with a
//! non-parametric hard-EM that spawns filters on demand; the forward pass
//! turns an image into sigmoid similarity maps that shrink to a single
//! vector at the top. The backward pass ([`generate`]) inverts the stack:
//! starting from a noise vector it rebuilds every feature map by sampling
//! the filters and stitching weighted patches, ending in pixels. The same
//! machinery restyles images and reconstructs occluded regions.
//!
//! The numeric core is generic over the scalar type; `f32` is the model
//! storage precision, `f64` is convenient for tight-tolerance testing.

pub mod dataset;
pub mod error;
pub mod filters;
pub mod generate;
pub mod inpaint;
pub mod model_io;
pub mod network;
pub mod scalar;
pub mod tensor;
pub mod train;
pub mod zca;

pub use error::{Error, Result};
pub use scalar::Real;

pub use dataset::Dataset;
pub use filters::{FilterBank, GaussianFilter, SIGMA_FLOOR};
pub use generate::{GenConfig, WeightMap};
pub use inpaint::{InpaintResult, OcclusionMask};
pub use network::{Layer, LayerSpec, Network, Preprocessing, TrainMeta};
pub use tensor::{PatchGrid, Tensor3};
pub use train::{AlphaChoice, Assignment, EmConfig, IterationRecord, LayerReport};
pub use zca::ZcaTransform;

/// Storage-precision aliases: model files hold 32-bit floats, so this is
/// the type the CLI trains, saves, and loads.
pub type Tensor3F32 = Tensor3<f32>;
pub type NetworkF32 = Network<f32>;
pub type FilterBankF32 = FilterBank<f32>;
pub type DatasetF32 = Dataset<f32>;
pub type ZcaTransformF32 = ZcaTransform<f32>;

/// Double-precision aliases for numerical work.
pub type Tensor3F64 = Tensor3<f64>;
pub type NetworkF64 = Network<f64>;
pub type FilterBankF64 = FilterBank<f64>;
pub type DatasetF64 = Dataset<f64>;
pub type ZcaTransformF64 = ZcaTransform<f64>;
