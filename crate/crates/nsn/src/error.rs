use thiserror::Error;

/// Errors produced by tensor geometry, training, generation, and model I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("patch {patch_h}x{patch_w} does not fit in tensor {height}x{width}")]
    PatchTooLarge {
        patch_h: usize,
        patch_w: usize,
        height: usize,
        width: usize,
    },

    #[error("invalid stride {0}, must be >= 1")]
    InvalidStride(usize),

    #[error("stitch geometry leaves position ({row}, {col}) uncovered")]
    UncoveredPosition { row: usize, col: usize },

    #[error("stitch target {out_h}x{out_w} is inconsistent with grid geometry")]
    StitchGeometry { out_h: usize, out_w: usize },

    #[error("filter bank is empty")]
    EmptyBank,

    #[error("no patches to train on")]
    EmptyPatchSet,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("dataset images do not share one shape")]
    NonUniformDataset,

    #[error("layer index {index} out of range for a {layers}-layer network")]
    InvalidLayerIndex { index: usize, layers: usize },

    #[error("filter index {index} out of range for {count} filters")]
    FilterIndexOutOfRange { index: usize, count: usize },

    #[error("architecture does not reach 1x1 spatial size: {0}")]
    BadArchitecture(String),

    #[error("network has no trained layers")]
    UntrainedNetwork,

    #[error("coefficient/noise list length mismatch: {coeffs} coefficients, {noises} noises")]
    LengthMismatch { coeffs: usize, noises: usize },

    #[error("whitening requires at least 2 images, got {0}")]
    DegenerateZca(usize),

    #[error("{0}")]
    Format(String),

    #[error("model file version {got} unsupported (expected {expected})")]
    VersionMismatch { got: u32, expected: u32 },

    #[error("model file checksum mismatch")]
    ChecksumMismatch,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
