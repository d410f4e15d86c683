//! Model persistence.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic "NSN1" | u32 version
//! u32 input_h | u32 input_w | u32 input_c | u8 preprocessing tag
//! u64 seed | f64 gen_delta1 | f64 gen_delta2 | f64 gen_delta3 | u32 gen_n
//! u32 alpha_count | f64 alpha...
//! u32 layer_count
//! per layer, length-prefixed:
//!   u32 record_bytes
//!   u32 patch_h | u32 patch_w | u32 stride | u32 patch_channels | u32 filter_count
//!   f32 sigma[filter_count]
//!   f32 mean[filter_count * patch_h * patch_w * patch_channels]
//! zca block (only when the tag says so):
//!   u32 plane_h | u32 plane_w | u32 channels | f64 epsilon
//!   per channel: f32 mean[dim] | f32 whitening[dim*dim] | f32 dewhitening[dim*dim]
//! sha256 of everything above (32 bytes)
//! ```
//!
//! Tensors are stored as 32-bit floats: persisting an `f32` network is
//! bit-exact, while higher-precision networks are truncated to storage
//! precision on save.

use std::fs;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::filters::{FilterBank, GaussianFilter};
use crate::network::{Layer, LayerSpec, Network, Preprocessing, TrainMeta};
use crate::scalar::{real, Real};
use crate::tensor::Tensor3;
use crate::zca::ZcaTransform;

const MAGIC: &[u8; 4] = b"NSN1";
const VERSION: u32 = 1;

/// Serialize a network to bytes, checksum included.
pub fn model_to_bytes<T: Real>(net: &Network<T>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    push_u32(&mut out, VERSION);

    let (h, w, c) = net.input_shape();
    push_u32(&mut out, h as u32);
    push_u32(&mut out, w as u32);
    push_u32(&mut out, c as u32);
    out.push(net.preprocessing().tag());

    let meta = net.meta();
    push_u64(&mut out, meta.seed);
    push_f64(&mut out, meta.gen_delta1);
    push_f64(&mut out, meta.gen_delta2);
    push_f64(&mut out, meta.gen_delta3);
    push_u32(&mut out, meta.gen_n);
    push_u32(&mut out, meta.alphas.len() as u32);
    for &a in &meta.alphas {
        push_f64(&mut out, a);
    }

    push_u32(&mut out, net.num_layers() as u32);
    for layer in net.layers() {
        let (ph, pw, pc) = layer.bank.patch_shape();
        let n = layer.bank.len();
        let record_bytes = 5 * 4 + 4 * n + 4 * n * ph * pw * pc;
        push_u32(&mut out, record_bytes as u32);
        push_u32(&mut out, layer.spec.patch_h as u32);
        push_u32(&mut out, layer.spec.patch_w as u32);
        push_u32(&mut out, layer.spec.stride as u32);
        push_u32(&mut out, pc as u32);
        push_u32(&mut out, n as u32);
        for g in layer.bank.filters() {
            push_f32(&mut out, g.sigma.to_f32().unwrap());
        }
        for g in layer.bank.filters() {
            for &v in g.mean.as_slice() {
                push_f32(&mut out, v.to_f32().unwrap());
            }
        }
    }

    if let Preprocessing::Zca(z) = net.preprocessing() {
        let (ph, pw) = z.plane_shape();
        push_u32(&mut out, ph as u32);
        push_u32(&mut out, pw as u32);
        push_u32(&mut out, z.channels() as u32);
        push_f64(&mut out, z.epsilon());
        for c in 0..z.channels() {
            for &v in z.mean(c) {
                push_f32(&mut out, v.to_f32().unwrap());
            }
            for &v in z.whitening(c) {
                push_f32(&mut out, v.to_f32().unwrap());
            }
            for &v in z.dewhitening(c) {
                push_f32(&mut out, v.to_f32().unwrap());
            }
        }
    }

    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

/// Parse a network from bytes, verifying magic, version, and checksum.
pub fn model_from_bytes<T: Real>(bytes: &[u8]) -> Result<Network<T>> {
    if bytes.len() < MAGIC.len() + 4 + 32 {
        return Err(Error::Format("model file truncated".into()));
    }
    let (body, checksum) = bytes.split_at(bytes.len() - 32);
    let digest = Sha256::digest(body);
    if digest.as_slice() != checksum {
        return Err(Error::ChecksumMismatch);
    }

    let mut r = Reader { bytes: body, pos: 0 };
    let magic = r.take(4)?;
    if magic != MAGIC {
        return Err(Error::Format("bad model magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::VersionMismatch { got: version, expected: VERSION });
    }

    let h = r.u32()? as usize;
    let w = r.u32()? as usize;
    let c = r.u32()? as usize;
    let tag = r.take(1)?[0];

    let seed = r.u64()?;
    let gen_delta1 = r.f64()?;
    let gen_delta2 = r.f64()?;
    let gen_delta3 = r.f64()?;
    let gen_n = r.u32()?;
    let alpha_count = r.u32()? as usize;
    let mut alphas = Vec::with_capacity(alpha_count);
    for _ in 0..alpha_count {
        alphas.push(r.f64()?);
    }

    let layer_count = r.u32()? as usize;
    let mut layers = Vec::with_capacity(layer_count);
    for _ in 0..layer_count {
        let record_bytes = r.u32()? as usize;
        let record_start = r.pos;
        let patch_h = r.u32()? as usize;
        let patch_w = r.u32()? as usize;
        let stride = r.u32()? as usize;
        let patch_c = r.u32()? as usize;
        let n = r.u32()? as usize;
        let mut sigmas = Vec::with_capacity(n);
        for _ in 0..n {
            sigmas.push(r.f32()?);
        }
        let patch_len = patch_h * patch_w * patch_c;
        let mut bank = FilterBank::new(patch_h, patch_w, patch_c);
        for sigma in sigmas {
            let mut data = Vec::with_capacity(patch_len);
            for _ in 0..patch_len {
                data.push(real::<T>(r.f32()? as f64));
            }
            bank.push(GaussianFilter::new(
                Tensor3::from_vec(patch_h, patch_w, patch_c, data)?,
                real::<T>(sigma as f64),
            ));
        }
        if r.pos - record_start != record_bytes {
            return Err(Error::Format("layer record length mismatch".into()));
        }
        layers.push(Layer::new(LayerSpec::new(patch_h, patch_w, stride), bank));
    }

    let preprocessing = match tag {
        0 => Preprocessing::None,
        1 => Preprocessing::Normalize,
        2 => {
            let plane_h = r.u32()? as usize;
            let plane_w = r.u32()? as usize;
            let channels = r.u32()? as usize;
            let epsilon = r.f64()?;
            let dim = plane_h * plane_w;
            let mut mean = Vec::with_capacity(channels);
            let mut whitening = Vec::with_capacity(channels);
            let mut dewhitening = Vec::with_capacity(channels);
            for _ in 0..channels {
                mean.push(r.f32_vec::<T>(dim)?);
                whitening.push(r.f32_vec::<T>(dim * dim)?);
                dewhitening.push(r.f32_vec::<T>(dim * dim)?);
            }
            Preprocessing::Zca(ZcaTransform::from_parts(
                plane_h, plane_w, channels, epsilon, mean, whitening, dewhitening,
            )?)
        }
        other => return Err(Error::Format(format!("unknown preprocessing tag {other}"))),
    };

    if r.pos != body.len() {
        return Err(Error::Format("trailing bytes after model payload".into()));
    }

    let meta = TrainMeta { alphas, seed, gen_delta1, gen_delta2, gen_delta3, gen_n };
    Network::new((h, w, c), layers, preprocessing, meta)
}

pub fn save_model<T: Real>(net: &Network<T>, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, model_to_bytes(net))?;
    Ok(())
}

pub fn load_model<T: Real>(path: impl AsRef<Path>) -> Result<Network<T>> {
    let bytes = fs::read(path)?;
    model_from_bytes(&bytes)
}

fn push_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_f32(out: &mut Vec<u8>, v: f32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn push_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::Format("model file truncated".into()));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(LittleEndian::read_u32(self.take(4)?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(LittleEndian::read_u64(self.take(8)?))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(LittleEndian::read_f32(self.take(4)?))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(LittleEndian::read_f64(self.take(8)?))
    }

    fn f32_vec<T: Real>(&mut self, n: usize) -> Result<Vec<T>> {
        let raw = self.take(4 * n)?;
        let mut out = Vec::with_capacity(n);
        for chunk in raw.chunks_exact(4) {
            out.push(real::<T>(LittleEndian::read_f32(chunk) as f64));
        }
        Ok(out)
    }
}
