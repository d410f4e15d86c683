//! End-to-end command-line behavior: exit codes, manifests, reproducibility,
//! and the grid/tile contract, all against the compiled binary.

mod common;

use common::*;
use nsn::dataset::tensor_to_image;
use nsn::generate::{generate, noise_from_filter, GenConfig};
use nsn::model_io::load_model;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn train_small_model(dir: &std::path::Path, seed: &str) -> std::path::PathBuf {
    let data = dir.join("digits.idx");
    write_synthetic_idx(&data, 60, 41);
    let model = dir.join(format!("model_{seed}.nsn1"));
    run_ok(&[
        "train",
        "--data",
        path_str(&data),
        "--out",
        path_str(&model),
        "--seed",
        seed,
        "--max-iters",
        "4",
        "--max-filters",
        "64",
        "--alpha-percentile",
        "10",
    ]);
    model
}

#[test]
fn train_writes_model_and_manifest_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("digits.idx");
    write_synthetic_idx(&data, 60, 41);

    let out1 = dir.path().join("a.nsn1");
    let out2 = dir.path().join("b.nsn1");
    let mut stderrs = Vec::new();
    for out in [&out1, &out2] {
        let output = run_ok(&[
            "train",
            "--data",
            path_str(&data),
            "--out",
            path_str(out),
            "--seed",
            "7",
            "--max-iters",
            "4",
            "--max-filters",
            "64",
        ]);
        stderrs.push(String::from_utf8_lossy(&output.stderr).into_owned());
    }
    let a = std::fs::read(&out1).unwrap();
    let b = std::fs::read(&out2).unwrap();
    assert_eq!(a, b, "same seed must produce identical model bytes");

    // One progress record per EM iteration: iteration, bank size,
    // objective, changed fraction.
    assert!(stderrs[0].contains("em iter=1"), "missing progress lines:\n{}", stderrs[0]);
    assert!(stderrs[0].contains("objective="));
    assert!(stderrs[0].contains("changed="));

    let manifest = manifest_of(&out1);
    assert_eq!(manifest["command"], "train");
    assert!(manifest["dataset_fingerprint"].is_string());
    assert!(manifest["model_fingerprint"].is_string());
    assert!(manifest["layer_filters"].as_array().unwrap().len() == 3);
    assert!(manifest["timings_ms"]["train"].is_number());
    assert_eq!(manifest["config"]["seed"], 7);

    // Different seed, different model.
    let out3 = dir.path().join("c.nsn1");
    run_ok(&[
        "train",
        "--data",
        path_str(&data),
        "--out",
        path_str(&out3),
        "--seed",
        "8",
        "--max-iters",
        "4",
        "--max-filters",
        "64",
    ]);
    assert_ne!(a, std::fs::read(&out3).unwrap());
}

#[test]
fn missing_dataset_path_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.nsn1");
    run_expect(&["train", "--out", path_str(&out)], 2);
}

#[test]
fn thread_count_does_not_change_trained_parameters() {
    // Parallel scoring is per-patch pure, so models must match bit for bit
    // across pool sizes, not merely to a tolerance.
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("digits.idx");
    write_synthetic_idx(&data, 40, 91);
    let mut bytes = Vec::new();
    for (name, threads) in [("t1.nsn1", "1"), ("t2.nsn1", "2")] {
        let model = dir.path().join(name);
        run_ok(&[
            "--threads",
            threads,
            "train",
            "--data",
            path_str(&data),
            "--out",
            path_str(&model),
            "--seed",
            "6",
            "--max-iters",
            "3",
            "--max-filters",
            "32",
        ]);
        bytes.push(std::fs::read(&model).unwrap());
    }
    assert_eq!(bytes[0], bytes[1], "thread count changed the trained model");
}

#[test]
fn generate_grids_are_reproducible_and_tiled_from_substreams() {
    let dir = tempfile::tempdir().unwrap();
    let model = train_small_model(dir.path(), "3");

    let g1 = dir.path().join("g1.png");
    let g2 = dir.path().join("g2.png");
    for out in [&g1, &g2] {
        run_ok(&[
            "generate",
            "--model",
            path_str(&model),
            "--count",
            "4",
            "--grid-cols",
            "2",
            "--seed",
            "11",
            "--out",
            path_str(out),
        ]);
    }
    assert_eq!(std::fs::read(&g1).unwrap(), std::fs::read(&g2).unwrap());

    let grid = image::open(&g1).unwrap();
    assert_eq!(grid.width(), 56, "2 columns of 28px tiles");
    assert_eq!(grid.height(), 56);

    // A single-image run with the same seed reproduces tile 0 exactly:
    // tile i of a seed-s grid uses substream s + i.
    let single = dir.path().join("single.png");
    run_ok(&[
        "generate",
        "--model",
        path_str(&model),
        "--count",
        "1",
        "--seed",
        "11",
        "--out",
        path_str(&single),
    ]);
    let single_img = image::open(&single).unwrap().to_luma8();
    let tile0 = nsn_cli::grid::extract_tile(&grid, 28, 28, 2, 0).to_luma8();
    assert_eq!(tile0.as_raw(), single_img.as_raw());

    let manifest = manifest_of(&g1);
    assert_eq!(manifest["command"], "generate");
    assert_eq!(manifest["config"]["count"], 4);
    assert_eq!(manifest["config"]["seed"], 11);
}

#[test]
fn count_one_emits_a_single_tile() {
    let dir = tempfile::tempdir().unwrap();
    let model = train_small_model(dir.path(), "5");
    let out = dir.path().join("one.png");
    run_ok(&[
        "generate",
        "--model",
        path_str(&model),
        "--count",
        "1",
        "--seed",
        "0",
        "--out",
        path_str(&out),
    ]);
    let im = image::open(&out).unwrap();
    assert_eq!((im.width(), im.height()), (28, 28));
}

#[test]
fn style_produces_distinct_variants_of_input_size() {
    let dir = tempfile::tempdir().unwrap();
    let model = train_small_model(dir.path(), "9");

    // Any input raster works; it is resized to the model input.
    let input = dir.path().join("input.png");
    let digits = synthetic_digits(1, 77);
    let tensor = nsn::Tensor3::from_vec(
        28,
        28,
        1,
        digits[0].iter().map(|&b| b as f32 / 255.0).collect(),
    )
    .unwrap();
    tensor_to_image(&tensor).unwrap().save(&input).unwrap();

    let out = dir.path().join("styled.png");
    run_ok(&[
        "style",
        "--model",
        path_str(&model),
        "--input",
        path_str(&input),
        "--variants",
        "4",
        "--grid-cols",
        "4",
        "--seed",
        "2",
        "--delta2",
        "1.0",
        "--out",
        path_str(&out),
    ]);
    let grid = image::open(&out).unwrap();
    assert_eq!((grid.width(), grid.height()), (112, 28));

    // Variants must differ pairwise somewhere.
    let tiles: Vec<Vec<u8>> = (0..4)
        .map(|i| nsn_cli::grid::extract_tile(&grid, 28, 28, 4, i).to_luma8().into_raw())
        .collect();
    for i in 0..4 {
        for j in (i + 1)..4 {
            assert_ne!(tiles[i], tiles[j], "variants {i} and {j} identical");
        }
    }
}

#[test]
fn interpolate_endpoints_match_one_hot_generations() {
    let dir = tempfile::tempdir().unwrap();
    let model = train_small_model(dir.path(), "13");
    let net = load_model::<f32>(&model).unwrap();
    let n_l = net.final_filter_count();
    assert!(n_l >= 2, "need at least two final-layer filters");

    let out = dir.path().join("strip.png");
    run_ok(&[
        "interpolate",
        "--model",
        path_str(&model),
        "--from",
        "0",
        "--to",
        "1",
        "--steps",
        "2",
        "--seed",
        "21",
        "--out",
        path_str(&out),
    ]);
    let grid = image::open(&out).unwrap();
    assert_eq!((grid.width(), grid.height()), (56, 28));

    // Endpoint tiles equal direct one-hot generations under the same
    // per-tile substreams (seed + index).
    let meta = net.meta();
    let cfg = GenConfig {
        delta1: meta.gen_delta1,
        delta2: meta.gen_delta2,
        delta3: meta.gen_delta3,
        n: meta.gen_n as usize,
        seed: 21,
        per_cell_redraw: false,
    };
    for (idx, filter) in [(0usize, 0usize), (1, 1)] {
        let z = noise_from_filter::<f32>(filter, n_l).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21 + idx as u64);
        let direct = generate(&net, &z, &cfg, &mut rng).unwrap();
        let tile = nsn_cli::grid::extract_tile(&grid, 28, 28, 2, idx).to_luma8();
        assert_eq!(
            tile.as_raw(),
            tensor_to_image(&direct).unwrap().to_luma8().as_raw(),
            "endpoint {idx} does not match its one-hot generation"
        );
    }

    // An 8-step strip is 8 tiles wide.
    let strip = dir.path().join("strip8.png");
    run_ok(&[
        "interpolate",
        "--model",
        path_str(&model),
        "--from",
        "0",
        "--to",
        "1",
        "--steps",
        "8",
        "--seed",
        "21",
        "--out",
        path_str(&strip),
    ]);
    assert_eq!(image::open(&strip).unwrap().width(), 224);
}

#[test]
fn arith_emits_operand_rows_plus_result_row() {
    let dir = tempfile::tempdir().unwrap();
    let model = train_small_model(dir.path(), "17");
    let net = load_model::<f32>(&model).unwrap();
    if net.final_filter_count() < 3 {
        panic!("training produced fewer than 3 top filters; adjust the corpus");
    }
    let out = dir.path().join("arith.png");
    run_ok(&[
        "arith",
        "--model",
        path_str(&model),
        "--expr",
        "0+1-2",
        "--count",
        "3",
        "--seed",
        "4",
        "--out",
        path_str(&out),
    ]);
    let grid = image::open(&out).unwrap();
    // 3 operands + 1 result row, 3 samples per row.
    assert_eq!((grid.width(), grid.height()), (84, 112));
    let manifest = manifest_of(&out);
    assert_eq!(manifest["config"]["coeffs"][2], -1.0);

    run_expect(
        &["arith", "--model", path_str(&model), "--expr", "0+", "--out", path_str(&out)],
        2,
    );
    run_expect(
        &["arith", "--model", path_str(&model), "--expr", "999", "--out", path_str(&out)],
        2,
    );
}

#[test]
fn sample_layer_patch_sizes_follow_receptive_fields() {
    let dir = tempfile::tempdir().unwrap();
    let model = train_small_model(dir.path(), "19");
    let l1 = dir.path().join("l1.png");
    run_ok(&[
        "sample-layer",
        "--model",
        path_str(&model),
        "--layer",
        "1",
        "--count",
        "4",
        "--grid-cols",
        "4",
        "--seed",
        "1",
        "--out",
        path_str(&l1),
    ]);
    // Layer-1 receptive field on the 28x28 stack is 4x4.
    assert_eq!(image::open(&l1).unwrap().height(), 4);

    let l3 = dir.path().join("l3.png");
    run_ok(&[
        "sample-layer",
        "--model",
        path_str(&model),
        "--layer",
        "3",
        "--count",
        "1",
        "--seed",
        "1",
        "--out",
        path_str(&l3),
    ]);
    assert_eq!(image::open(&l3).unwrap().height(), 28);

    run_expect(
        &["sample-layer", "--model", path_str(&model), "--layer", "4", "--count", "1", "--out", path_str(&l1)],
        2,
    );
}

#[test]
fn inpaint_requires_exactly_one_mask_source() {
    let dir = tempfile::tempdir().unwrap();
    let model = train_small_model(dir.path(), "23");
    let input = dir.path().join("in.png");
    let digits = synthetic_digits(1, 5);
    let tensor = nsn::Tensor3::from_vec(
        28,
        28,
        1,
        digits[0].iter().map(|&b| b as f32 / 255.0).collect(),
    )
    .unwrap();
    tensor_to_image(&tensor).unwrap().save(&input).unwrap();
    let out = dir.path().join("recon.png");

    run_expect(
        &["inpaint", "--model", path_str(&model), "--input", path_str(&input), "--out", path_str(&out)],
        2,
    );

    run_ok(&[
        "inpaint",
        "--model",
        path_str(&model),
        "--input",
        path_str(&input),
        "--mask-rect",
        "8,8,10,10",
        "--seed",
        "3",
        "--out",
        path_str(&out),
    ]);
    let im = image::open(&out).unwrap();
    assert_eq!((im.width(), im.height()), (28, 28));
    let manifest = manifest_of(&out);
    assert_eq!(manifest["config"]["occluded_pixels"], 100);
}

#[test]
fn whitened_models_flow_end_to_end_and_flag_color_loss() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("digits.idx");
    write_synthetic_idx(&data, 40, 53);
    let model = dir.path().join("white.nsn1");
    run_ok(&[
        "train",
        "--data",
        path_str(&data),
        "--zca",
        "--seed",
        "2",
        "--max-iters",
        "3",
        "--max-filters",
        "32",
        "--alpha-percentile",
        "10",
        "--out",
        path_str(&model),
    ]);
    let manifest = manifest_of(&model);
    assert_eq!(manifest["config"]["zca"], true);
    assert!(manifest["timings_ms"]["zca_fit"].is_number());

    // Generation inverts the whitening and clamps; the grid must exist.
    let grid = dir.path().join("white_grid.png");
    run_ok(&[
        "generate",
        "--model",
        path_str(&model),
        "--count",
        "4",
        "--grid-cols",
        "2",
        "--seed",
        "1",
        "--out",
        path_str(&grid),
    ]);
    assert_eq!(image::open(&grid).unwrap().width(), 56);

    // Styling a whitened model surfaces the color-fidelity caveat.
    let input = dir.path().join("in.png");
    let digits = synthetic_digits(1, 9);
    let tensor = nsn::Tensor3::from_vec(
        28,
        28,
        1,
        digits[0].iter().map(|&b| b as f32 / 255.0).collect(),
    )
    .unwrap();
    tensor_to_image(&tensor).unwrap().save(&input).unwrap();
    let styled = dir.path().join("styled.png");
    run_ok(&[
        "style",
        "--model",
        path_str(&model),
        "--input",
        path_str(&input),
        "--variants",
        "2",
        "--seed",
        "0",
        "--out",
        path_str(&styled),
    ]);
    let manifest = manifest_of(&styled);
    let notes = manifest["notes"].as_array().unwrap();
    assert!(
        notes.iter().any(|n| n.as_str().unwrap().contains("color")),
        "whitened style run should note the color caveat"
    );
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let model = train_small_model(dir.path(), "29");
    let cfg = dir.path().join("run.conf");
    std::fs::write(&cfg, "seed = 33\ngrid-cols = 2\n").unwrap();

    let via_file = dir.path().join("via_file.png");
    run_ok(&[
        "--config",
        path_str(&cfg),
        "generate",
        "--model",
        path_str(&model),
        "--count",
        "4",
        "--out",
        path_str(&via_file),
    ]);
    let via_flag = dir.path().join("via_flag.png");
    run_ok(&[
        "generate",
        "--model",
        path_str(&model),
        "--count",
        "4",
        "--grid-cols",
        "2",
        "--seed",
        "33",
        "--out",
        path_str(&via_flag),
    ]);
    assert_eq!(
        std::fs::read(&via_file).unwrap(),
        std::fs::read(&via_flag).unwrap(),
        "config-file seed must act like the flag"
    );

    // A flag overrides the file entry.
    let overridden = dir.path().join("override.png");
    run_ok(&[
        "--config",
        path_str(&cfg),
        "generate",
        "--model",
        path_str(&model),
        "--count",
        "4",
        "--seed",
        "34",
        "--out",
        path_str(&overridden),
    ]);
    assert_ne!(std::fs::read(&via_file).unwrap(), std::fs::read(&overridden).unwrap());
}

#[test]
fn every_command_writes_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let model = train_small_model(dir.path(), "31");
    assert!(manifest_path(&model).exists(), "train manifest");

    let input = dir.path().join("in.png");
    let digits = synthetic_digits(1, 6);
    let tensor = nsn::Tensor3::from_vec(
        28,
        28,
        1,
        digits[0].iter().map(|&b| b as f32 / 255.0).collect(),
    )
    .unwrap();
    tensor_to_image(&tensor).unwrap().save(&input).unwrap();

    let outputs = [
        (vec!["generate", "--model", path_str(&model), "--count", "1", "--seed", "0"], "g.png"),
        (
            vec!["style", "--model", path_str(&model), "--input", path_str(&input), "--variants", "1", "--seed", "0"],
            "s.png",
        ),
        (
            vec!["inpaint", "--model", path_str(&model), "--input", path_str(&input), "--mask-rect", "0,0,4,4", "--seed", "0"],
            "i.png",
        ),
        (
            vec!["interpolate", "--model", path_str(&model), "--from", "0", "--to", "1", "--steps", "2", "--seed", "0"],
            "p.png",
        ),
        (vec!["arith", "--model", path_str(&model), "--expr", "0+1", "--count", "1", "--seed", "0"], "a.png"),
        (
            vec!["sample-layer", "--model", path_str(&model), "--layer", "1", "--count", "1", "--seed", "0"],
            "l.png",
        ),
    ];
    for (args, name) in outputs {
        let out = dir.path().join(name);
        let mut full: Vec<&str> = args.clone();
        full.push("--out");
        full.push(path_str(&out));
        run_ok(&full);
        assert!(manifest_path(&out).exists(), "{name} manifest missing");
    }

    let summary = dir.path().join("summary.txt");
    run_ok(&["inspect", "--model", path_str(&model), "--out", path_str(&summary)]);
    assert!(manifest_path(&summary).exists(), "inspect manifest missing");
    let text = std::fs::read_to_string(&summary).unwrap();
    assert!(text.contains("spatial chain: 28x28 -> 13x13 -> 6x6 -> 1x1"));

    // Without --out, inspect gets its own manifest name and must not
    // clobber the model's training manifest.
    run_ok(&["inspect", "--model", path_str(&model)]);
    let mut name = model.file_name().unwrap().to_os_string();
    name.push(".inspect.manifest.json");
    assert!(model.with_file_name(name).exists());
    assert_eq!(manifest_of(&model)["command"], "train");
}
