//! Command-line argument definitions.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(
    name = "nsn",
    version,
    about = "Train layered Gaussian filter-bank image models and generate, restyle, or inpaint images with them"
)]
pub struct Cli {
    /// Key-value config file; flags override its entries.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Cap the worker thread pool (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model on an image dataset.
    Train(TrainArgs),
    /// Sample images from noise and tile them into a grid.
    Generate(GenerateArgs),
    /// Re-render an input image with sampled styling.
    Style(StyleArgs),
    /// Reconstruct the occluded region of an image.
    Inpaint(InpaintArgs),
    /// Interpolate between two final-layer filters.
    Interpolate(InterpolateArgs),
    /// Combine final-layer filters with +/- arithmetic.
    Arith(ArithArgs),
    /// Sample patches from a hidden layer.
    SampleLayer(SampleLayerArgs),
    /// Print a model summary.
    Inspect(InspectArgs),
}

/// Generation hyperparameters shared by every sampling command.
/// Unset values fall back to the config file, then to the model's recorded
/// defaults.
#[derive(Args, Debug, Clone)]
pub struct GenFlags {
    /// Softmax sharpening of channel vectors.
    #[arg(long)]
    pub delta1: Option<f64>,
    /// Scale of per-filter sampling noise.
    #[arg(long)]
    pub delta2: Option<f64>,
    /// Contrast scale of generated patches.
    #[arg(long)]
    pub delta3: Option<f64>,
    /// Multinomial draws per cell.
    #[arg(long)]
    pub n: Option<usize>,
    /// RNG seed; identical seeds reproduce outputs byte for byte.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Redraw filter samples for every cell instead of once per layer.
    #[arg(long)]
    pub per_cell_redraw: bool,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Dataset: an IDX image file or a directory of rasters.
    #[arg(long)]
    pub data: PathBuf,

    /// Dataset format; `auto` picks `dir` for directories and `idx`
    /// otherwise.
    #[arg(long, default_value = "auto", value_parser = ["auto", "idx", "dir"])]
    pub data_format: String,

    /// Use only the first N images (0 = all).
    #[arg(long, default_value_t = 0)]
    pub limit: usize,

    /// Square size directory images are resized to.
    #[arg(long, default_value_t = 64)]
    pub image_size: usize,

    /// Channels for directory images (1 or 3).
    #[arg(long, default_value_t = 3)]
    pub channels: usize,

    /// Architecture: `auto`, or windows like `4x4s2,3x3s2,6x6s2`.
    #[arg(long, default_value = "auto")]
    pub arch: String,

    /// Fixed spawn threshold (log-density). When absent, each layer is
    /// calibrated at `--alpha-percentile`.
    #[arg(long)]
    pub alpha: Option<f64>,

    /// Percentile of single-filter scores proposed as the threshold.
    #[arg(long, default_value_t = 2.0)]
    pub alpha_percentile: f64,

    #[arg(long, default_value_t = 20)]
    pub max_iters: usize,

    #[arg(long, default_value_t = 1e-3)]
    pub convergence_frac: f64,

    #[arg(long, default_value_t = 1e-4)]
    pub sigma_floor: f64,

    #[arg(long, default_value_t = 1.0)]
    pub init_sigma: f64,

    #[arg(long, default_value_t = 1000)]
    pub max_filters: usize,

    /// Patches per image for the first layer (0 = all). Deeper layers use
    /// every patch.
    #[arg(long, default_value_t = 64)]
    pub patch_subsample: usize,

    #[arg(long)]
    pub seed: Option<u64>,

    /// Whiten pixels channel-wise before training.
    #[arg(long)]
    pub zca: bool,

    #[arg(long, default_value_t = 1e-2)]
    pub zca_epsilon: f64,

    /// Images used to fit the whitening transform (0 = all).
    #[arg(long, default_value_t = 10_000)]
    pub zca_max_images: usize,

    /// Output model path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub model: PathBuf,

    /// Number of images to sample.
    #[arg(long, default_value_t = 64)]
    pub count: usize,

    /// Tiles per grid row.
    #[arg(long)]
    pub grid_cols: Option<usize>,

    #[command(flatten)]
    pub gen: GenFlags,

    /// Output grid raster path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct StyleArgs {
    #[arg(long)]
    pub model: PathBuf,

    /// Input image (resized to the model's input size).
    #[arg(long)]
    pub input: PathBuf,

    /// Number of styled renderings.
    #[arg(long, default_value_t = 4)]
    pub variants: usize,

    #[arg(long)]
    pub grid_cols: Option<usize>,

    #[command(flatten)]
    pub gen: GenFlags,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct InpaintArgs {
    #[arg(long)]
    pub model: PathBuf,

    /// Occluded input image (resized to the model's input size).
    #[arg(long)]
    pub input: PathBuf,

    /// Mask raster: pixels brighter than 50% mark the occluded region.
    #[arg(long)]
    pub mask: Option<PathBuf>,

    /// Rectangle mask `row,col,height,width` as an alternative to --mask.
    #[arg(long, value_name = "R,C,H,W")]
    pub mask_rect: Option<String>,

    /// Splice the regenerated first-layer map everywhere, not only into
    /// occluded cells.
    #[arg(long)]
    pub full_replace: bool,

    /// Unoccluded original; enables error reporting in the manifest.
    #[arg(long)]
    pub reference: Option<PathBuf>,

    /// Baseline image (e.g. a training-set mean) compared against the same
    /// reference.
    #[arg(long)]
    pub baseline: Option<PathBuf>,

    #[command(flatten)]
    pub gen: GenFlags,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct InterpolateArgs {
    #[arg(long)]
    pub model: PathBuf,

    /// Final-layer filter index of the left endpoint.
    #[arg(long)]
    pub from: usize,

    /// Final-layer filter index of the right endpoint.
    #[arg(long)]
    pub to: usize,

    /// Number of interpolation steps (including both endpoints).
    #[arg(long, default_value_t = 8)]
    pub steps: usize,

    #[arg(long)]
    pub grid_cols: Option<usize>,

    #[command(flatten)]
    pub gen: GenFlags,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ArithArgs {
    #[arg(long)]
    pub model: PathBuf,

    /// Filter arithmetic over final-layer indices, e.g. `0+1-2`.
    #[arg(long)]
    pub expr: String,

    /// Samples per row (one row per operand plus one for the result).
    #[arg(long, default_value_t = 4)]
    pub count: usize,

    #[command(flatten)]
    pub gen: GenFlags,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SampleLayerArgs {
    #[arg(long)]
    pub model: PathBuf,

    /// Layer to sample from, 1-based up to the model depth.
    #[arg(long)]
    pub layer: usize,

    #[arg(long, default_value_t = 16)]
    pub count: usize,

    #[arg(long)]
    pub grid_cols: Option<usize>,

    #[command(flatten)]
    pub gen: GenFlags,

    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct InspectArgs {
    #[arg(long)]
    pub model: PathBuf,

    /// Write the summary to a file instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
