//! `LBBW` weight files.
//!
//! ```text
//! "LBBW"  u32 version (= 1)  u32 layer count
//! per layer:
//!   u8 tag  u32 dim  tag-specific u32 header  f64 tensors (little endian)
//!
//!   0 ActNorm         tensors: scale[dim], bias[dim]
//!   1 DenseLinear     tensors: W[dim * dim] row-major
//!   2 AffineCoupling  header: reverse (0|1), context dim, n dense layers,
//!                     then (out, in) per dense layer
//!                     tensors: per dense layer W[out * in] row-major, b[out]
//!   3 Autoregressive  header: context dim, n dense layers, (out, in) pairs
//!                     tensors: as for AffineCoupling
//!   4 SigmoidSquash   nothing
//! ```
//!
//! Conditioner inputs are `[passive coordinates; context]` for a coupling and
//! `[x; context]` for an autoregressive layer; outputs are `[raw log-scale;
//! shift]`. The coupling passive half is the first `dim / 2` coordinates, or
//! the last `dim / 2` when `reverse` is set. Raw log-scales `r` become
//! `5 tanh(r / 5)`. Autoregressive masks are reapplied on load.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use sha2::{Digest, Sha256};

use super::mlp::{Dense, Mlp};
use super::{ActNorm, AffineCoupling, Autoregressive, DenseLinear, FlowLayer, FlowModel};
use crate::error::{Error, Result};
use crate::wire::{put_f64s, put_u32, Reader};

pub const WEIGHTS_MAGIC: &str = "LBBW";
pub const WEIGHTS_VERSION: u32 = 1;

const TAG_ACTNORM: u8 = 0;
const TAG_DENSE: u8 = 1;
const TAG_COUPLING: u8 = 2;
const TAG_AUTOREGRESSIVE: u8 = 3;
const TAG_SIGMOID: u8 = 4;

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

fn put_mlp(header: &mut Vec<u8>, tensors: &mut Vec<u8>, mlp: &Mlp) {
    put_u32(header, mlp.layers.len() as u32);
    for l in &mlp.layers {
        put_u32(header, l.outputs() as u32);
        put_u32(header, l.inputs() as u32);
        put_f64s(tensors, &row_major(&l.weight));
        put_f64s(tensors, l.bias.as_slice());
    }
}

pub fn to_bytes(model: &FlowModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHTS_MAGIC.as_bytes());
    put_u32(&mut out, WEIGHTS_VERSION);
    put_u32(&mut out, model.layers.len() as u32);
    for layer in &model.layers {
        let mut header = Vec::new();
        let mut tensors = Vec::new();
        let tag = match layer {
            FlowLayer::ActNorm(l) => {
                put_f64s(&mut tensors, &l.scale);
                put_f64s(&mut tensors, &l.bias);
                TAG_ACTNORM
            }
            FlowLayer::DenseLinear(l) => {
                put_f64s(&mut tensors, &row_major(&l.weight));
                TAG_DENSE
            }
            FlowLayer::AffineCoupling(l) => {
                put_u32(&mut header, l.reverse as u32);
                put_u32(&mut header, l.context_dim as u32);
                put_mlp(&mut header, &mut tensors, &l.conditioner);
                TAG_COUPLING
            }
            FlowLayer::Autoregressive(l) => {
                put_u32(&mut header, l.context_dim as u32);
                put_mlp(&mut header, &mut tensors, &l.conditioner);
                TAG_AUTOREGRESSIVE
            }
            FlowLayer::SigmoidSquash { .. } => TAG_SIGMOID,
        };
        out.push(tag);
        put_u32(&mut out, layer.dim() as u32);
        out.extend_from_slice(&header);
        out.extend_from_slice(&tensors);
    }
    out
}

fn read_mlp(r: &mut Reader) -> Result<Mlp> {
    let n = r.u32()? as usize;
    if n == 0 || n > 64 {
        return Err(Error::CorruptTensor(format!("{n} dense layers")));
    }
    let mut shapes = Vec::with_capacity(n);
    for _ in 0..n {
        shapes.push((r.u32()? as usize, r.u32()? as usize));
    }
    if shapes.windows(2).any(|w| w[0].0 != w[1].1) {
        return Err(Error::CorruptTensor("conditioner shapes do not chain".into()));
    }
    let mut layers = Vec::with_capacity(n);
    for (out, inp) in shapes {
        let w = r.f64s(out.checked_mul(inp).ok_or_else(|| Error::CorruptTensor("shape overflow".into()))?)?;
        let b = r.f64s(out)?;
        layers.push(Dense { weight: DMatrix::from_row_slice(out, inp, &w), bias: DVector::from_vec(b) });
    }
    Ok(Mlp { layers })
}

fn invalid(e: Error) -> Error {
    match e {
        Error::CorruptTensor(_) | Error::BadMagic { .. } | Error::VersionMismatch(_) => e,
        other => Error::CorruptTensor(other.to_string()),
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<FlowModel> {
    let mut r = Reader::new(bytes, Error::CorruptTensor);
    r.magic(WEIGHTS_MAGIC)?;
    let version = r.u32()?;
    if version != WEIGHTS_VERSION {
        return Err(Error::VersionMismatch(version));
    }
    let count = r.u32()? as usize;
    let mut layers = Vec::new();
    let mut dim = None;
    for _ in 0..count {
        let tag = r.u8()?;
        let d = r.u32()? as usize;
        if *dim.get_or_insert(d) != d {
            return Err(Error::CorruptTensor(format!("layer dim {d} differs from {}", dim.unwrap())));
        }
        let layer = match tag {
            TAG_ACTNORM => {
                let scale = r.f64s(d)?;
                let bias = r.f64s(d)?;
                FlowLayer::ActNorm(ActNorm::new(scale, bias).map_err(invalid)?)
            }
            TAG_DENSE => {
                let w = r.f64s(d.checked_mul(d).ok_or_else(|| Error::CorruptTensor("shape overflow".into()))?)?;
                FlowLayer::DenseLinear(DenseLinear::new(DMatrix::from_row_slice(d, d, &w)).map_err(invalid)?)
            }
            TAG_COUPLING => {
                let reverse = match r.u32()? {
                    0 => false,
                    1 => true,
                    v => return Err(Error::CorruptTensor(format!("coupling reverse flag {v}"))),
                };
                let ctx = r.u32()? as usize;
                let mlp = read_mlp(&mut r)?;
                FlowLayer::AffineCoupling(AffineCoupling::new(d, reverse, ctx, mlp).map_err(invalid)?)
            }
            TAG_AUTOREGRESSIVE => {
                let ctx = r.u32()? as usize;
                let mlp = read_mlp(&mut r)?;
                FlowLayer::Autoregressive(Autoregressive::new(d, ctx, mlp).map_err(invalid)?)
            }
            TAG_SIGMOID => FlowLayer::SigmoidSquash { dim: d },
            t => return Err(Error::CorruptTensor(format!("unknown layer tag {t}"))),
        };
        layers.push(layer);
    }
    r.finish()?;
    let dim = dim.ok_or_else(|| Error::CorruptTensor("weights file has no layers".into()))?;
    FlowModel::new(dim, layers).map_err(invalid)
}

/// A prior-only model has no layer to carry its dimension and cannot be saved.
pub fn save_weights(model: &FlowModel, path: impl AsRef<Path>) -> Result<()> {
    if model.layers.is_empty() {
        return Err(Error::InvalidParams("a model without layers has no weights file form".into()));
    }
    Ok(std::fs::write(path, to_bytes(model))?)
}

pub fn load_weights(path: impl AsRef<Path>) -> Result<FlowModel> {
    from_bytes(&std::fs::read(path)?)
}

/// First 8 bytes (little endian) of SHA-256 over the serialized models.
pub fn model_hash(models: &[&FlowModel]) -> u64 {
    let mut h = Sha256::new();
    for m in models {
        let bytes = to_bytes(m);
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    u64::from_le_bytes(h.finalize()[..8].try_into().unwrap())
}
