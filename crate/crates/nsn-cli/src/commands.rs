//! Implementations of the CLI subcommands.

use std::path::Path;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use image::imageops::FilterType;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nsn::dataset::{load_idx, load_image_dir, tensor_to_image, Dataset};
use nsn::generate::{
    feature_arithmetic, generate, interpolate_noise, noise_from_filter, random_noise,
    sample_hidden, stylize, GenConfig,
};
use nsn::inpaint::{inpaint, occluded_mse, OcclusionMask};
use nsn::model_io::{load_model, save_model};
use nsn::network::{arch_28, arch_64, shape_chain};
use nsn::train::{train_network_calibrated, AlphaChoice, EmConfig};
use nsn::zca::fit_zca;
use nsn::{LayerSpec, Preprocessing, Tensor3};

use crate::cli::{
    ArithArgs, GenFlags, GenerateArgs, InpaintArgs, InspectArgs, InterpolateArgs, SampleLayerArgs,
    StyleArgs, TrainArgs,
};
use crate::config::{resolve, FileConfig};
use crate::grid::tile_grid;
use crate::manifest::{fingerprint_dir, fingerprint_file, RunManifest};

type NetworkF32 = nsn::NetworkF32;

/// Errors that should exit with the usage code rather than the runtime one.
#[derive(Debug)]
pub struct UsageError(pub anyhow::Error);

pub fn usage(err: anyhow::Error) -> anyhow::Error {
    anyhow::Error::new(UsageError(err))
}

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

// ---------------------------------------------------------------- helpers

fn load_network(path: &Path) -> Result<NetworkF32> {
    load_model::<f32>(path).with_context(|| format!("cannot load model {}", path.display()))
}

/// Merge generation settings: flag, then config file, then the model's
/// recorded defaults.
fn resolve_gen(flags: &GenFlags, file: &FileConfig, net: &NetworkF32) -> Result<GenConfig> {
    let meta = net.meta();
    let cfg = GenConfig {
        delta1: resolve(flags.delta1, file, "delta1", meta.gen_delta1)?,
        delta2: resolve(flags.delta2, file, "delta2", meta.gen_delta2)?,
        delta3: resolve(flags.delta3, file, "delta3", meta.gen_delta3)?,
        n: resolve(flags.n, file, "n", meta.gen_n as usize)?,
        seed: resolve(flags.seed, file, "seed", 0)?,
        per_cell_redraw: if flags.per_cell_redraw {
            true
        } else {
            resolve(None, file, "per_cell_redraw", false)?
        },
    };
    if cfg.n == 0 {
        return Err(usage(anyhow!("--n must be at least 1")));
    }
    Ok(cfg)
}

fn echo_gen(manifest: &mut RunManifest, cfg: &GenConfig) {
    manifest.set("delta1", cfg.delta1);
    manifest.set("delta2", cfg.delta2);
    manifest.set("delta3", cfg.delta3);
    manifest.set("n", cfg.n);
    manifest.set("seed", cfg.seed);
    manifest.set("per_cell_redraw", cfg.per_cell_redraw);
}

/// Each grid tile uses its own stream so tiles are reproducible in
/// isolation: tile `i` of a run seeded `s` equals a single-image run seeded
/// `s + i`.
fn tile_rng(seed: u64, index: usize) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(index as u64))
}

/// Decode a raster and fit it to the model's input shape.
fn load_input_for(net: &NetworkF32, path: &Path) -> Result<Tensor3<f32>> {
    let (h, w, c) = net.input_shape();
    let decoded =
        image::open(path).with_context(|| format!("cannot decode {}", path.display()))?;
    let resized = decoded.resize_exact(w as u32, h as u32, FilterType::Triangle);
    let scale = 1.0f32 / 255.0;
    let data: Vec<f32> = match c {
        1 => resized.to_luma8().pixels().map(|p| p.0[0] as f32 * scale).collect(),
        3 => resized
            .to_rgb8()
            .pixels()
            .flat_map(|p| p.0.into_iter())
            .map(|v| v as f32 * scale)
            .collect(),
        other => bail!("model has unsupported channel count {other}"),
    };
    Ok(Tensor3::from_vec(h, w, c, data)?)
}

fn save_grid(tiles: &[Tensor3<f32>], cols: usize, out: &Path) -> Result<()> {
    let grid = tile_grid(tiles, cols)?;
    grid.save(out).with_context(|| format!("cannot write {}", out.display()))?;
    Ok(())
}

fn note_zca_color_loss(manifest: &mut RunManifest, net: &NetworkF32) {
    if matches!(net.preprocessing(), Preprocessing::Zca(_)) {
        manifest.note(
            "whitened-model reconstructions can lose color fidelity; \
             adjust delta settings to trade color against structure",
        );
    }
}

fn parse_arch(spec: &str, input: (usize, usize, usize)) -> Result<Vec<LayerSpec>> {
    let specs = if spec == "auto" {
        match (input.0, input.1) {
            (28, 28) => arch_28(),
            (64, 64) => arch_64(),
            (h, w) => {
                return Err(usage(anyhow!(
                    "no preset architecture for {h}x{w} inputs; pass --arch like 4x4s2,3x3s2,6x6s2"
                )))
            }
        }
    } else {
        spec.split(',')
            .map(parse_layer_spec)
            .collect::<Result<Vec<_>>>()?
    };
    shape_chain(input.0, input.1, &specs)
        .map_err(|e| usage(anyhow!("architecture does not fit {}x{} inputs: {e}", input.0, input.1)))?;
    Ok(specs)
}

fn parse_layer_spec(s: &str) -> Result<LayerSpec> {
    let err = || usage(anyhow!("bad layer spec `{s}`, expected like `4x4s2`"));
    let (patch, stride) = s.trim().split_once('s').ok_or_else(err)?;
    let (h, w) = patch.split_once('x').ok_or_else(err)?;
    let parse = |t: &str| t.trim().parse::<usize>().map_err(|_| err());
    let spec = LayerSpec::new(parse(h)?, parse(w)?, parse(stride)?);
    if spec.patch_h == 0 || spec.patch_w == 0 || spec.stride == 0 {
        return Err(err());
    }
    Ok(spec)
}

/// `j1+j2-j3` over final-layer filter indices -> (indices, coefficients).
pub fn parse_arith_expr(expr: &str) -> Result<(Vec<usize>, Vec<f64>)> {
    let err = |what: &str| usage(anyhow!("bad expression `{expr}`: {what}"));
    let compact: String = expr.chars().filter(|c| !c.is_whitespace()).collect();
    if compact.is_empty() {
        return Err(err("empty"));
    }
    let mut indices = Vec::new();
    let mut coeffs = Vec::new();
    let mut sign = 1.0f64;
    let mut digits = String::new();
    for (i, ch) in compact.chars().enumerate() {
        match ch {
            '0'..='9' => digits.push(ch),
            '+' | '-' => {
                if digits.is_empty() {
                    return Err(err("operator without a left operand"));
                }
                indices.push(digits.parse::<usize>().unwrap());
                coeffs.push(sign);
                digits.clear();
                sign = if ch == '+' { 1.0 } else { -1.0 };
            }
            other => {
                return Err(err(&format!("unexpected character `{other}` at position {i}")))
            }
        }
    }
    if digits.is_empty() {
        return Err(err("trailing operator"));
    }
    indices.push(digits.parse::<usize>().unwrap());
    coeffs.push(sign);
    Ok((indices, coeffs))
}

fn parse_mask_rect(s: &str) -> Result<(usize, usize, usize, usize)> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|t| t.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| usage(anyhow!("bad --mask-rect `{s}`, expected `row,col,height,width`")))?;
    if parts.len() != 4 {
        return Err(usage(anyhow!("bad --mask-rect `{s}`, expected four integers")));
    }
    Ok((parts[0], parts[1], parts[2], parts[3]))
}

// ---------------------------------------------------------------- commands

pub fn cmd_train(args: TrainArgs, file: &FileConfig) -> Result<()> {
    let seed = resolve(args.seed, file, "seed", 0)?;
    let mut manifest = RunManifest::new("train");

    let started = Instant::now();
    let format = if args.data_format == "auto" {
        if args.data.is_dir() {
            "dir"
        } else {
            "idx"
        }
    } else {
        args.data_format.as_str()
    };
    let mut dataset: Dataset<f32> = match format {
        "idx" => load_idx(&args.data, None)
            .with_context(|| format!("cannot load idx dataset {}", args.data.display()))?,
        "dir" => {
            if args.channels != 1 && args.channels != 3 {
                return Err(usage(anyhow!("--channels must be 1 or 3")));
            }
            load_image_dir(&args.data, args.image_size, args.channels)
                .with_context(|| format!("cannot load image directory {}", args.data.display()))?
        }
        other => return Err(usage(anyhow!("unknown data format `{other}`"))),
    };
    dataset.truncate(args.limit);
    manifest.timing("load", started.elapsed());
    manifest.dataset_fingerprint = Some(if args.data.is_dir() {
        fingerprint_dir(&args.data)?
    } else {
        fingerprint_file(&args.data)?
    });

    let shape = dataset.shape();
    println!(
        "dataset: {} images of {}x{}x{}",
        dataset.len(),
        shape.0,
        shape.1,
        shape.2
    );

    if args.max_iters == 0 || args.max_filters == 0 {
        return Err(usage(anyhow!("--max-iters and --max-filters must be at least 1")));
    }
    let arch = parse_arch(&args.arch, shape)?;

    let preprocessing = if args.zca {
        let started = Instant::now();
        let z = fit_zca(&dataset.images, args.zca_epsilon, args.zca_max_images)?;
        manifest.timing("zca_fit", started.elapsed());
        Preprocessing::Zca(z)
    } else {
        Preprocessing::Normalize
    };

    let cfgs: Vec<EmConfig> = arch
        .iter()
        .enumerate()
        .map(|(k, _)| EmConfig {
            alpha: args.alpha.unwrap_or(f64::NEG_INFINITY),
            max_iters: args.max_iters,
            convergence_frac: args.convergence_frac,
            sigma_floor: args.sigma_floor,
            init_sigma: args.init_sigma,
            max_filters: args.max_filters,
            patch_subsample: if k == 0 { args.patch_subsample } else { 0 },
            seed: seed.wrapping_add(k as u64),
        })
        .collect();
    let alpha_choice = match args.alpha {
        Some(_) => AlphaChoice::Fixed,
        None => AlphaChoice::Percentile(args.alpha_percentile),
    };

    let started = Instant::now();
    let (mut net, reports) =
        train_network_calibrated(&dataset.images, &arch, &cfgs, alpha_choice, preprocessing)?;
    manifest.timing("train", started.elapsed());

    for report in &reports {
        println!(
            "layer {}: {} filters from {} patches (alpha {:.4}, {} iterations)",
            report.layer,
            report.filters,
            report.patches,
            report.alpha,
            report.records.len()
        );
    }

    {
        let meta = net.meta_mut();
        meta.seed = seed;
        meta.gen_delta1 = resolve(None, file, "delta1", 1.0)?;
        meta.gen_delta2 = resolve(None, file, "delta2", 1.0)?;
        meta.gen_delta3 = resolve(None, file, "delta3", 1.0)?;
        meta.gen_n = resolve(None, file, "n", 10usize)? as u32;
    }

    let started = Instant::now();
    save_model(&net, &args.out)
        .with_context(|| format!("cannot write model {}", args.out.display()))?;
    manifest.timing("save", started.elapsed());
    manifest.model_fingerprint = Some(fingerprint_file(&args.out)?);

    manifest.set("data", args.data.display().to_string());
    manifest.set("data_format", format);
    manifest.set("limit", args.limit);
    manifest.set("images_used", dataset.len());
    manifest.set("input_shape", vec![shape.0, shape.1, shape.2]);
    manifest.set("arch", args.arch.clone());
    manifest.set(
        "layers",
        arch.iter()
            .map(|s| format!("{}x{}s{}", s.patch_h, s.patch_w, s.stride))
            .collect::<Vec<_>>(),
    );
    manifest.set("alphas", net.meta().alphas.clone());
    manifest.set(
        "alpha_mode",
        match alpha_choice {
            AlphaChoice::Fixed => "fixed".to_string(),
            AlphaChoice::Percentile(p) => format!("percentile {p}"),
        },
    );
    manifest.set("max_iters", args.max_iters);
    manifest.set("convergence_frac", args.convergence_frac);
    manifest.set("sigma_floor", args.sigma_floor);
    manifest.set("init_sigma", args.init_sigma);
    manifest.set("max_filters", args.max_filters);
    manifest.set("patch_subsample", args.patch_subsample);
    manifest.set("seed", seed);
    manifest.set("zca", args.zca);
    if args.zca {
        manifest.set("zca_epsilon", args.zca_epsilon);
        manifest.set("zca_max_images", args.zca_max_images);
    }
    manifest.layer_filters = Some(reports.iter().map(|r| r.filters).collect());
    for report in &reports {
        if let Some(last) = report.records.last() {
            manifest.metric(&format!("layer{}_objective", report.layer), last.objective);
        }
    }
    manifest.output(&args.out);
    manifest.write_alongside(&args.out)?;
    Ok(())
}

pub fn cmd_generate(args: GenerateArgs, file: &FileConfig) -> Result<()> {
    if args.count == 0 {
        return Err(usage(anyhow!("--count must be at least 1")));
    }
    let net = load_network(&args.model)?;
    let cfg = resolve_gen(&args.gen, file, &net)?;
    let cols = resolve(args.grid_cols, file, "grid_cols", 8)?;

    let started = Instant::now();
    let n_l = net.final_filter_count();
    let tiles: Vec<Tensor3<f32>> = (0..args.count)
        .map(|i| {
            let mut rng = tile_rng(cfg.seed, i);
            let z = random_noise::<f32, _>(n_l, &mut rng);
            generate(&net, &z, &cfg, &mut rng)
        })
        .collect::<nsn::Result<_>>()?;
    let elapsed = started.elapsed();
    save_grid(&tiles, cols, &args.out)?;

    let mut manifest = RunManifest::new("generate");
    manifest.model_fingerprint = Some(fingerprint_file(&args.model)?);
    echo_gen(&mut manifest, &cfg);
    manifest.set("count", args.count);
    manifest.set("grid_cols", cols);
    manifest.timing("generate", elapsed);
    manifest.output(&args.out);
    manifest.write_alongside(&args.out)?;
    Ok(())
}

pub fn cmd_style(args: StyleArgs, file: &FileConfig) -> Result<()> {
    if args.variants == 0 {
        return Err(usage(anyhow!("--variants must be at least 1")));
    }
    let net = load_network(&args.model)?;
    let cfg = resolve_gen(&args.gen, file, &net)?;
    let cols = resolve(args.grid_cols, file, "grid_cols", args.variants)?;
    let input = load_input_for(&net, &args.input)?;

    let started = Instant::now();
    let tiles: Vec<Tensor3<f32>> = (0..args.variants)
        .map(|i| stylize(&net, &input, &cfg, &mut tile_rng(cfg.seed, i)))
        .collect::<nsn::Result<_>>()?;
    let elapsed = started.elapsed();
    save_grid(&tiles, cols, &args.out)?;

    let mut manifest = RunManifest::new("style");
    manifest.model_fingerprint = Some(fingerprint_file(&args.model)?);
    echo_gen(&mut manifest, &cfg);
    manifest.set("input", args.input.display().to_string());
    manifest.set("variants", args.variants);
    manifest.set("grid_cols", cols);
    manifest.timing("style", elapsed);
    note_zca_color_loss(&mut manifest, &net);
    manifest.output(&args.out);
    manifest.write_alongside(&args.out)?;
    Ok(())
}

pub fn cmd_inpaint(args: InpaintArgs, file: &FileConfig) -> Result<()> {
    let net = load_network(&args.model)?;
    let cfg = resolve_gen(&args.gen, file, &net)?;
    let input = load_input_for(&net, &args.input)?;
    let (h, w, _) = net.input_shape();

    let mask = match (&args.mask, &args.mask_rect) {
        (Some(path), None) => {
            let decoded = image::open(path)
                .with_context(|| format!("cannot decode mask {}", path.display()))?;
            let resized = decoded.resize_exact(w as u32, h as u32, FilterType::Nearest);
            let luma = resized.to_luma8();
            let data = luma.pixels().map(|p| p.0[0] > 127).collect();
            OcclusionMask::new(h, w, data)?
        }
        (None, Some(rect)) => {
            let (r, c, rh, rw) = parse_mask_rect(rect)?;
            OcclusionMask::all_clear(h, w).with_rectangle(r, c, rh, rw)
        }
        _ => return Err(usage(anyhow!("pass exactly one of --mask or --mask-rect"))),
    };

    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let result = inpaint(&net, &input, &mask, &cfg, &mut rng, args.full_replace)?;
    let elapsed = started.elapsed();

    tensor_to_image(&result.image)?
        .save(&args.out)
        .with_context(|| format!("cannot write {}", args.out.display()))?;

    let mut manifest = RunManifest::new("inpaint");
    manifest.model_fingerprint = Some(fingerprint_file(&args.model)?);
    echo_gen(&mut manifest, &cfg);
    manifest.set("input", args.input.display().to_string());
    manifest.set("full_replace", args.full_replace);
    manifest.set("occluded_pixels", mask.occluded_count());
    let occluded_cell_count = result
        .occluded_cells
        .iter()
        .flatten()
        .filter(|&&b| b)
        .count();
    manifest.set("occluded_cells", occluded_cell_count);
    manifest.timing("inpaint", elapsed);

    if let Some(reference) = &args.reference {
        let reference = load_input_for(&net, reference)?;
        manifest.metric(
            "mse_occluded_reconstruction",
            occluded_mse(&result.image, &reference, &mask)?,
        );
        if let Some(baseline) = &args.baseline {
            let baseline = load_input_for(&net, baseline)?;
            manifest.metric(
                "mse_occluded_baseline",
                occluded_mse(&baseline, &reference, &mask)?,
            );
        }
    }
    note_zca_color_loss(&mut manifest, &net);
    manifest.output(&args.out);
    manifest.write_alongside(&args.out)?;
    Ok(())
}

pub fn cmd_interpolate(args: InterpolateArgs, file: &FileConfig) -> Result<()> {
    if args.steps < 2 {
        return Err(usage(anyhow!("--steps must be at least 2 (the two endpoints)")));
    }
    let net = load_network(&args.model)?;
    let n_l = net.final_filter_count();
    if args.from >= n_l || args.to >= n_l {
        return Err(usage(anyhow!(
            "filter indices {} and {} must be below the final-layer filter count {n_l}",
            args.from,
            args.to
        )));
    }
    let cfg = resolve_gen(&args.gen, file, &net)?;
    let cols = resolve(args.grid_cols, file, "grid_cols", args.steps)?;

    let a = noise_from_filter::<f32>(args.from, n_l)?;
    let b = noise_from_filter::<f32>(args.to, n_l)?;
    let started = Instant::now();
    let tiles: Vec<Tensor3<f32>> = (0..args.steps)
        .map(|i| {
            let t = i as f64 / (args.steps - 1) as f64;
            let z = interpolate_noise(&a, &b, t);
            generate(&net, &z, &cfg, &mut tile_rng(cfg.seed, i))
        })
        .collect::<nsn::Result<_>>()?;
    let elapsed = started.elapsed();
    save_grid(&tiles, cols, &args.out)?;

    let mut manifest = RunManifest::new("interpolate");
    manifest.model_fingerprint = Some(fingerprint_file(&args.model)?);
    echo_gen(&mut manifest, &cfg);
    manifest.set("from", args.from);
    manifest.set("to", args.to);
    manifest.set("steps", args.steps);
    manifest.set("grid_cols", cols);
    manifest.timing("interpolate", elapsed);
    manifest.output(&args.out);
    manifest.write_alongside(&args.out)?;
    Ok(())
}

pub fn cmd_arith(args: ArithArgs, file: &FileConfig) -> Result<()> {
    if args.count == 0 {
        return Err(usage(anyhow!("--count must be at least 1")));
    }
    let net = load_network(&args.model)?;
    let n_l = net.final_filter_count();
    let (indices, coeffs) = parse_arith_expr(&args.expr)?;
    if let Some(&bad) = indices.iter().find(|&&j| j >= n_l) {
        return Err(usage(anyhow!(
            "filter index {bad} out of range, the final layer has {n_l} filters"
        )));
    }
    let cfg = resolve_gen(&args.gen, file, &net)?;

    let noises: Vec<Vec<f32>> = indices
        .iter()
        .map(|&j| noise_from_filter(j, n_l))
        .collect::<nsn::Result<_>>()?;

    // One row of samples per operand, then a row of combined results.
    let started = Instant::now();
    let mut tiles = Vec::with_capacity((indices.len() + 1) * args.count);
    for (row, z) in noises.iter().enumerate() {
        for i in 0..args.count {
            let mut rng = tile_rng(cfg.seed, row * args.count + i);
            tiles.push(generate(&net, z, &cfg, &mut rng)?);
        }
    }
    for i in 0..args.count {
        let mut rng = tile_rng(cfg.seed, noises.len() * args.count + i);
        tiles.push(feature_arithmetic(&net, &noises, &coeffs, &cfg, &mut rng)?);
    }
    let elapsed = started.elapsed();
    save_grid(&tiles, args.count, &args.out)?;

    let mut manifest = RunManifest::new("arith");
    manifest.model_fingerprint = Some(fingerprint_file(&args.model)?);
    echo_gen(&mut manifest, &cfg);
    manifest.set("expr", args.expr.clone());
    manifest.set("indices", indices);
    manifest.set("coeffs", coeffs);
    manifest.set("count", args.count);
    manifest.timing("arith", elapsed);
    manifest.output(&args.out);
    manifest.write_alongside(&args.out)?;
    Ok(())
}

pub fn cmd_sample_layer(args: SampleLayerArgs, file: &FileConfig) -> Result<()> {
    if args.count == 0 {
        return Err(usage(anyhow!("--count must be at least 1")));
    }
    let net = load_network(&args.model)?;
    if args.layer == 0 || args.layer > net.num_layers() {
        return Err(usage(anyhow!(
            "--layer must be between 1 and {}",
            net.num_layers()
        )));
    }
    let cfg = resolve_gen(&args.gen, file, &net)?;
    let cols = resolve(args.grid_cols, file, "grid_cols", 8.min(args.count))?;

    let started = Instant::now();
    let tiles: Vec<Tensor3<f32>> = (0..args.count)
        .map(|i| sample_hidden(&net, args.layer, &cfg, &mut tile_rng(cfg.seed, i)))
        .collect::<nsn::Result<_>>()?;
    let elapsed = started.elapsed();
    save_grid(&tiles, cols, &args.out)?;

    let mut manifest = RunManifest::new("sample-layer");
    manifest.model_fingerprint = Some(fingerprint_file(&args.model)?);
    echo_gen(&mut manifest, &cfg);
    manifest.set("layer", args.layer);
    manifest.set("count", args.count);
    manifest.set("grid_cols", cols);
    manifest.set("patch_shape", vec![tiles[0].height(), tiles[0].width(), tiles[0].channels()]);
    manifest.timing("sample_layer", elapsed);
    manifest.output(&args.out);
    manifest.write_alongside(&args.out)?;
    Ok(())
}

pub fn cmd_inspect(args: InspectArgs, _file: &FileConfig) -> Result<()> {
    let net = load_network(&args.model)?;
    let mut text = String::new();
    let (h, w, c) = net.input_shape();
    text.push_str(&format!("input: {h}x{w}x{c}\n"));
    text.push_str(&format!("preprocessing: {}\n", net.preprocessing().name()));
    let chain = net.spatial_chain();
    text.push_str(&format!(
        "spatial chain: {}\n",
        chain
            .iter()
            .map(|(a, b)| format!("{a}x{b}"))
            .collect::<Vec<_>>()
            .join(" -> ")
    ));
    for (k, layer) in net.layers().iter().enumerate() {
        let sigmas: Vec<f32> = layer.bank.filters().iter().map(|g| g.sigma).collect();
        let (lo, hi) = sigmas.iter().fold((f32::MAX, f32::MIN), |(lo, hi), &s| {
            (lo.min(s), hi.max(s))
        });
        text.push_str(&format!(
            "layer {k}: window {}x{} stride {}, {} filters, sigma in [{lo:.4}, {hi:.4}]\n",
            layer.spec.patch_h,
            layer.spec.patch_w,
            layer.spec.stride,
            layer.bank.len()
        ));
    }
    let meta = net.meta();
    text.push_str(&format!(
        "training: seed {}, alphas {:?}\n",
        meta.seed, meta.alphas
    ));
    text.push_str(&format!(
        "generation defaults: delta1 {}, delta2 {}, delta3 {}, n {}\n",
        meta.gen_delta1, meta.gen_delta2, meta.gen_delta3, meta.gen_n
    ));

    let mut manifest = RunManifest::new("inspect");
    manifest.model_fingerprint = Some(fingerprint_file(&args.model)?);
    manifest.layer_filters = Some(net.layers().iter().map(|l| l.bank.len()).collect());
    manifest.set("model", args.model.display().to_string());

    match &args.out {
        Some(out) => {
            std::fs::write(out, &text)
                .with_context(|| format!("cannot write {}", out.display()))?;
            manifest.output(out);
            manifest.write_alongside(out)?;
        }
        None => {
            print!("{text}");
            // A distinct name so the model's own training manifest is
            // never overwritten.
            let mut name = args.model.file_name().unwrap_or_default().to_os_string();
            name.push(".inspect.manifest.json");
            manifest.write_to(args.model.with_file_name(name))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arith_expressions_parse() {
        assert_eq!(parse_arith_expr("0+1-2").unwrap(), (vec![0, 1, 2], vec![1.0, 1.0, -1.0]));
        assert_eq!(parse_arith_expr("5").unwrap(), (vec![5], vec![1.0]));
        assert_eq!(parse_arith_expr(" 3 + 4 ").unwrap(), (vec![3, 4], vec![1.0, 1.0]));
        assert!(parse_arith_expr("0+").is_err());
        assert!(parse_arith_expr("+1").is_err());
        assert!(parse_arith_expr("").is_err());
        assert!(parse_arith_expr("a+b").is_err());
    }

    #[test]
    fn layer_specs_parse() {
        let spec = parse_layer_spec("4x4s2").unwrap();
        assert_eq!((spec.patch_h, spec.patch_w, spec.stride), (4, 4, 2));
        assert!(parse_layer_spec("4x4").is_err());
        assert!(parse_layer_spec("0x4s2").is_err());
        assert!(parse_layer_spec("axbsc").is_err());
    }

    #[test]
    fn arch_presets_match_input_sizes() {
        assert_eq!(parse_arch("auto", (28, 28, 1)).unwrap().len(), 3);
        assert_eq!(parse_arch("auto", (64, 64, 3)).unwrap().len(), 5);
        assert!(parse_arch("auto", (32, 32, 3)).is_err());
        let custom = parse_arch("4x4s2,3x3s2,6x6s2", (28, 28, 1)).unwrap();
        assert_eq!(custom.len(), 3);
        // ends at 13x13, never reaches 1x1
        assert!(parse_arch("4x4s2", (28, 28, 1)).is_err());
    }

    #[test]
    fn mask_rectangles_parse() {
        assert_eq!(parse_mask_rect("1,2,3,4").unwrap(), (1, 2, 3, 4));
        assert!(parse_mask_rect("1,2,3").is_err());
        assert!(parse_mask_rect("1,2,3,x").is_err());
    }
}
