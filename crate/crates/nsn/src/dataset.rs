//! Dataset ingestion: IDX image containers, directories of raster images,
//! and tensor/raster conversion. All loaders scale pixels to `[0, 1]`.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};
use image::imageops::FilterType;

use crate::error::{Error, Result};
use crate::scalar::{real, Real};
use crate::tensor::Tensor3;

const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;

/// Images of one uniform shape.
#[derive(Debug, Clone)]
pub struct Dataset<T> {
    pub images: Vec<Tensor3<T>>,
    pub name: String,
}

impl<T: Real> Dataset<T> {
    pub fn new(images: Vec<Tensor3<T>>, name: impl Into<String>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let shape = images[0].shape();
        if images.iter().any(|im| im.shape() != shape) {
            return Err(Error::NonUniformDataset);
        }
        Ok(Dataset { images, name: name.into() })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        self.images[0].shape()
    }

    /// Keep only the first `limit` images (`0` = keep all).
    pub fn truncate(&mut self, limit: usize) {
        if limit > 0 && limit < self.images.len() {
            self.images.truncate(limit);
        }
    }

    /// Pixelwise mean image.
    pub fn mean_image(&self) -> Tensor3<T> {
        let (h, w, c) = self.shape();
        let mut acc = vec![T::zero(); h * w * c];
        for im in &self.images {
            for (a, &v) in acc.iter_mut().zip(im.as_slice()) {
                *a += v;
            }
        }
        let inv = T::one() / real::<T>(self.images.len() as f64);
        Tensor3::from_vec(h, w, c, acc.into_iter().map(|a| a * inv).collect()).expect("shape")
    }
}

/// Parse big-endian IDX3 image bytes, scaling pixels from `[0, 255]` to
/// `[0, 1]`. `expected` optionally pins the `(height, width)` of the file.
pub fn parse_idx_images<T: Real>(bytes: &[u8], expected: Option<(usize, usize)>) -> Result<Vec<Tensor3<T>>> {
    let mut cur = Cursor::new(bytes);
    let magic = cur
        .read_u32::<BigEndian>()
        .map_err(|_| Error::Format("idx file truncated before magic".into()))?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::Format(format!(
            "bad idx magic {magic:#010x}, expected {IDX_IMAGE_MAGIC:#010x}"
        )));
    }
    let count = cur.read_u32::<BigEndian>().map_err(|_| truncated())? as usize;
    let rows = cur.read_u32::<BigEndian>().map_err(|_| truncated())? as usize;
    let cols = cur.read_u32::<BigEndian>().map_err(|_| truncated())? as usize;
    if let Some((h, w)) = expected {
        if (rows, cols) != (h, w) {
            return Err(Error::ShapeMismatch {
                expected: format!("{h}x{w} images"),
                got: format!("{rows}x{cols}"),
            });
        }
    }

    let mut pixels = vec![0u8; count * rows * cols];
    cur.read_exact(&mut pixels).map_err(|_| truncated())?;

    let scale = real::<T>(1.0 / 255.0);
    let mut images = Vec::with_capacity(count);
    for i in 0..count {
        let plane = &pixels[i * rows * cols..(i + 1) * rows * cols];
        let data = plane.iter().map(|&b| real::<T>(b as f64) * scale).collect();
        images.push(Tensor3::from_vec(rows, cols, 1, data)?);
    }
    Ok(images)
}

fn truncated() -> Error {
    Error::Format("idx payload truncated".into())
}

/// Load an IDX3 image file.
pub fn load_idx<T: Real>(path: impl AsRef<Path>, expected: Option<(usize, usize)>) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let images = parse_idx_images(&bytes, expected)?;
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Dataset::new(images, name)
}

/// Load every decodable raster in a directory (sorted by file name),
/// bilinear-resized to `target x target` with `channels` color channels.
/// Grayscale files are channel-replicated when 3 channels are requested;
/// undecodable files are skipped with a warning.
pub fn load_image_dir<T: Real>(
    path: impl AsRef<Path>,
    target: usize,
    channels: usize,
) -> Result<Dataset<T>> {
    let path = path.as_ref();
    let mut entries: Vec<_> = fs::read_dir(path)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.is_file())
        .collect();
    entries.sort();

    let mut images = Vec::new();
    for file in &entries {
        let decoded = match image::open(file) {
            Ok(im) => im,
            Err(err) => {
                log::warn!("skipping {}: {err}", file.display());
                continue;
            }
        };
        let resized = decoded.resize_exact(target as u32, target as u32, FilterType::Triangle);
        images.push(dynamic_to_tensor::<T>(&resized, channels)?);
    }
    if images.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let name = path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    Dataset::new(images, name)
}

fn dynamic_to_tensor<T: Real>(im: &image::DynamicImage, channels: usize) -> Result<Tensor3<T>> {
    let scale = real::<T>(1.0 / 255.0);
    match channels {
        1 => {
            let gray = im.to_luma8();
            let (w, h) = gray.dimensions();
            let data = gray.pixels().map(|p| real::<T>(p.0[0] as f64) * scale).collect();
            Tensor3::from_vec(h as usize, w as usize, 1, data)
        }
        3 => {
            // to_rgb8 replicates the luma plane for grayscale sources.
            let rgb = im.to_rgb8();
            let (w, h) = rgb.dimensions();
            let mut data = Vec::with_capacity((w * h * 3) as usize);
            for p in rgb.pixels() {
                for ch in 0..3 {
                    data.push(real::<T>(p.0[ch] as f64) * scale);
                }
            }
            Tensor3::from_vec(h as usize, w as usize, 3, data)
        }
        other => Err(Error::Format(format!("unsupported channel count {other}"))),
    }
}

/// Quantize a `[0, 1]` tensor to an 8-bit raster (1 or 3 channels).
pub fn tensor_to_image<T: Real>(t: &Tensor3<T>) -> Result<image::DynamicImage> {
    let (h, w, c) = t.shape();
    let quant = |v: T| -> u8 {
        let x = v.to_f64().unwrap().clamp(0.0, 1.0);
        (x * 255.0).round() as u8
    };
    match c {
        1 => {
            let mut buf = image::GrayImage::new(w as u32, h as u32);
            for r in 0..h {
                for col in 0..w {
                    buf.put_pixel(col as u32, r as u32, image::Luma([quant(t.get(r, col, 0))]));
                }
            }
            Ok(image::DynamicImage::ImageLuma8(buf))
        }
        3 => {
            let mut buf = image::RgbImage::new(w as u32, h as u32);
            for r in 0..h {
                for col in 0..w {
                    let px = image::Rgb([
                        quant(t.get(r, col, 0)),
                        quant(t.get(r, col, 1)),
                        quant(t.get(r, col, 2)),
                    ]);
                    buf.put_pixel(col as u32, r as u32, px);
                }
            }
            Ok(image::DynamicImage::ImageRgb8(buf))
        }
        other => Err(Error::Format(format!("cannot rasterize {other}-channel tensor"))),
    }
}

/// Decode a raster file into a `[0, 1]` tensor with the given channels.
pub fn load_image_file<T: Real>(path: impl AsRef<Path>, channels: usize) -> Result<Tensor3<T>> {
    let decoded = image::open(path.as_ref()).map_err(|e| Error::Format(e.to_string()))?;
    dynamic_to_tensor(&decoded, channels)
}
