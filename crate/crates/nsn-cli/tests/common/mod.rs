//! Shared test support: a deterministic synthetic digit corpus in IDX form
//! and helpers for driving the compiled binary.
#![allow(dead_code)] // each test target uses a different subset

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deterministic 28x28 grayscale stroke images: a few momentum-guided pen
/// walks with soft edges and varying intensity, blurred once. Diverse
/// enough at the 4x4-patch level to exercise non-parametric spawning.
pub fn synthetic_digits(count: usize, seed: u64) -> Vec<[u8; 28 * 28]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut field = [0.0f32; 28 * 28];
            let strokes = rng.gen_range(2..=4);
            for _ in 0..strokes {
                let mut r = rng.gen_range(5.0f32..23.0);
                let mut c = rng.gen_range(5.0f32..23.0);
                let mut dir = rng.gen_range(0.0f32..std::f32::consts::TAU);
                let intensity = rng.gen_range(0.55f32..1.0);
                let steps = rng.gen_range(12..36);
                for _ in 0..steps {
                    dir += rng.gen_range(-0.6f32..0.6);
                    r = (r + dir.sin()).clamp(1.0, 26.0);
                    c = (c + dir.cos()).clamp(1.0, 26.0);
                    // Soft 3x3 stamp around the pen position.
                    let (ri, ci) = (r as i32, c as i32);
                    for dr in -1..=1i32 {
                        for dc in -1..=1i32 {
                            let (rr, cc) = (ri + dr, ci + dc);
                            if (0..28).contains(&rr) && (0..28).contains(&cc) {
                                let falloff = 1.0 - 0.35 * (dr.abs() + dc.abs()) as f32;
                                let idx = (rr * 28 + cc) as usize;
                                field[idx] = field[idx].max(intensity * falloff);
                            }
                        }
                    }
                }
            }
            // One 3x3 box blur pass softens the stroke edges.
            let mut out = [0u8; 28 * 28];
            for r in 0..28i32 {
                for c in 0..28i32 {
                    let mut sum = 0.0f32;
                    let mut n = 0.0f32;
                    for dr in -1..=1 {
                        for dc in -1..=1 {
                            let (rr, cc) = (r + dr, c + dc);
                            if (0..28).contains(&rr) && (0..28).contains(&cc) {
                                sum += field[(rr * 28 + cc) as usize];
                                n += 1.0;
                            }
                        }
                    }
                    out[(r * 28 + c) as usize] = ((sum / n).clamp(0.0, 1.0) * 255.0) as u8;
                }
            }
            out
        })
        .collect()
}

/// Serialize images as an IDX3 container.
pub fn idx_bytes(images: &[[u8; 28 * 28]]) -> Vec<u8> {
    let mut bytes = Vec::with_capacity(16 + images.len() * 28 * 28);
    bytes.extend_from_slice(&0x0000_0803u32.to_be_bytes());
    bytes.extend_from_slice(&(images.len() as u32).to_be_bytes());
    bytes.extend_from_slice(&28u32.to_be_bytes());
    bytes.extend_from_slice(&28u32.to_be_bytes());
    for im in images {
        bytes.extend_from_slice(im);
    }
    bytes
}

pub fn write_synthetic_idx(path: &Path, count: usize, seed: u64) {
    std::fs::write(path, idx_bytes(&synthetic_digits(count, seed))).unwrap();
}

/// Path to the compiled CLI binary.
pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nsn"))
}

/// Run the binary, asserting exit code 0, and return its output.
pub fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("binary runs");
    assert!(
        out.status.success(),
        "command {:?} failed with {:?}\nstdout: {}\nstderr: {}",
        args,
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Run the binary expecting a specific non-zero exit code.
pub fn run_expect(args: &[&str], code: i32) {
    let out = bin().args(args).output().expect("binary runs");
    assert_eq!(
        out.status.code(),
        Some(code),
        "command {:?}: expected exit {code}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
}

pub fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

pub fn manifest_of(output: &Path) -> serde_json::Value {
    let path = manifest_path(output);
    let text = std::fs::read_to_string(&path)
        .unwrap_or_else(|_| panic!("manifest {} missing", path.display()));
    serde_json::from_str(&text).expect("valid manifest json")
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}
