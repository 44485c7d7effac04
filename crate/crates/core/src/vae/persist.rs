//! Binary model file.
//!
//! Layout (all integers and floats little-endian):
//!
//! | field | type |
//! |---|---|
//! | magic `TSYNVAE\0` | 8 bytes |
//! | version | u32 |
//! | schema fingerprint | 16 ASCII hex bytes |
//! | n_window, data width, latent dim | u32 ×3 |
//! | reparameterization mode | u8 |
//! | batch-norm epsilon, momentum | f64 ×2 |
//! | encoder widths, decoder widths, group widths | u32 count + u32 each |
//! | parameter value count | u64 |
//! | values | f64 each |
//!
//! Values are written network by network (encoder, mu head, logsig head,
//! decoder); within a network all trainable blocks in layer order (affine
//! weight row-major, bias; batch-norm scale, shift) followed by the running
//! statistics (mean, variance per batch-norm layer).

use std::path::Path;

use sha2::{Digest, Sha256};

use super::model::{VaeConfig, VaeModel};
use crate::error::{Error, Result};
use crate::ingest::{ColumnLayout, Schema};
use crate::nn::{Layer, ReparamMode, BN_EPSILON, BN_MOMENTUM};

pub const MAGIC: &[u8; 8] = b"TSYNVAE\0";
pub const VERSION: u32 = 1;

fn push_u32(buf: &mut Vec<u8>, v: usize) {
    buf.extend_from_slice(&(v as u32).to_le_bytes());
}

fn push_list(buf: &mut Vec<u8>, items: &[usize]) {
    push_u32(buf, items.len());
    for &w in items {
        push_u32(buf, w);
    }
}

fn value_blocks(model: &VaeModel) -> Vec<&[f64]> {
    let mut out = Vec::new();
    for net in model.networks() {
        out.extend(net.param_blocks());
        out.extend(net.stat_blocks());
    }
    out
}

pub fn to_bytes(model: &VaeModel) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(model.schema_fingerprint.as_bytes());
    push_u32(&mut buf, model.n_window);
    push_u32(&mut buf, model.data_width());
    push_u32(&mut buf, model.latent_dim());
    buf.push(model.config.reparam.code());
    buf.extend_from_slice(&BN_EPSILON.to_le_bytes());
    buf.extend_from_slice(&BN_MOMENTUM.to_le_bytes());
    push_list(&mut buf, &model.config.encoder_widths);
    push_list(&mut buf, &model.config.decoder_widths);
    push_list(&mut buf, &model.group_widths);
    let blocks = value_blocks(model);
    let count: usize = blocks.iter().map(|b| b.len()).sum();
    buf.extend_from_slice(&(count as u64).to_le_bytes());
    for block in blocks {
        for v in block {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    buf
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::ModelFormat("truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")) as usize)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn list(&mut self) -> Result<Vec<usize>> {
        let n = self.u32()?;
        if n > 1 << 20 {
            return Err(Error::ModelFormat("implausible list length".into()));
        }
        (0..n).map(|_| self.u32()).collect()
    }
}

/// Parses a model file. `schema` supplies the category structure; its
/// fingerprint (with the stored window) must match the stored one.
pub fn from_bytes(bytes: &[u8], schema: &Schema) -> Result<VaeModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::ModelFormat("not a model file (bad magic)".into()));
    }
    let version = r.u32()? as u32;
    if version != VERSION {
        return Err(Error::ModelFormat(format!("unsupported version {version}, expected {VERSION}")));
    }
    let fingerprint = String::from_utf8(r.take(16)?.to_vec())
        .map_err(|_| Error::ModelFormat("bad fingerprint bytes".into()))?;
    let n_window = r.u32()?;
    let data_width = r.u32()?;
    let latent_dim = r.u32()?;
    let reparam = ReparamMode::from_code(r.take(1)?[0])
        .ok_or_else(|| Error::ModelFormat("unknown reparameterization code".into()))?;
    let eps = r.f64()?;
    let momentum = r.f64()?;
    let encoder_widths = r.list()?;
    let decoder_widths = r.list()?;
    let group_widths = r.list()?;

    let schema = schema.with_window(n_window)?;
    let found = schema.fingerprint();
    if found != fingerprint {
        return Err(Error::FingerprintMismatch {
            expected: fingerprint,
            found,
        });
    }
    let layout = ColumnLayout::new(&schema)?;
    let layout_widths: Vec<usize> = layout.groups.iter().map(|g| g.width).collect();
    if layout.width != data_width || layout_widths != group_widths {
        return Err(Error::ModelFormat("stored dimensions disagree with the schema".into()));
    }
    let config = VaeConfig {
        latent_dim,
        encoder_widths,
        decoder_widths,
        reparam,
    };
    let mut model = VaeModel::init(&schema, config, 0)?;
    for net in model.networks_mut() {
        for layer in &mut net.layers {
            if let Layer::BatchNorm(bn) = layer {
                bn.epsilon = eps;
                bn.momentum = momentum;
            }
        }
    }
    let count = r.u64()? as usize;
    let expected: usize = value_blocks(&model).iter().map(|b| b.len()).sum();
    if count != expected {
        return Err(Error::ModelFormat(format!("value count {count}, architecture needs {expected}")));
    }
    for net in model.networks_mut() {
        for block in net.param_blocks_mut() {
            for v in block.iter_mut() {
                *v = r.f64()?;
            }
        }
        for block in net.stat_blocks_mut() {
            for v in block.iter_mut() {
                *v = r.f64()?;
            }
        }
    }
    if r.pos != bytes.len() {
        return Err(Error::ModelFormat("trailing bytes after parameters".into()));
    }
    Ok(model)
}

pub fn save_model(model: &VaeModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>, schema: &Schema) -> Result<VaeModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes, schema)
}

/// 16-hex-digit digest of the serialized model.
pub fn model_fingerprint(model: &VaeModel) -> String {
    hex::encode(&Sha256::digest(to_bytes(model))[..8])
}
