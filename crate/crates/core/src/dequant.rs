//! Bits-back dequantization of integer data.
//!
//! An integer vector `x` of bit depth `b` is coded by first decoding a noise
//! vector `u` in `[0, 1)^d` on the `2^-k` grid, then encoding `x + u` with the
//! density model. The decoder recovers `x` and `u` by splitting the fine bin
//! index into `index >> k` and `index & (2^k - 1)`, then gives back the bits
//! of `u`.
//!
//! A conditional dequantizer is a flow stored in sampling orientation
//! (standard normal noise to `u`, last layer `SigmoidSquash`). Its
//! conditioners read `x / 2^b` as context.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256StarStar;

use crate::ans::AnsStream;
use crate::error::{Error, Result};
use crate::flow::{standard_normal_log_density, FlowLayer, FlowModel};
use crate::lbb::{compositional_decode, compositional_encode, decode_steps, encode_steps, CodecParams};
use crate::gaussian::GridPoint;

#[derive(Clone, Debug, PartialEq)]
pub enum Dequantizer {
    Uniform,
    ConditionalFlow(FlowModel),
}

impl Dequantizer {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let Dequantizer::ConditionalFlow(m) = self else { return Ok(()) };
        if m.dim != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: m.dim });
        }
        if m.context_dim != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: m.context_dim });
        }
        if !matches!(m.layers.last(), Some(FlowLayer::SigmoidSquash { .. })) {
            return Err(Error::InvalidParams("dequantizer must end with SigmoidSquash".into()));
        }
        if m.layers.iter().any(|l| matches!(l, FlowLayer::Autoregressive(_))) {
            return Err(Error::UnsupportedLayer("Autoregressive in a dequantizer"));
        }
        Ok(())
    }

    pub fn model(&self) -> Option<&FlowModel> {
        match self {
            Dequantizer::Uniform => None,
            Dequantizer::ConditionalFlow(m) => Some(m),
        }
    }
}

/// Conditioning input for integer data of bit depth `bits`.
pub fn context(x: &[i64], bits: u32) -> Vec<f64> {
    let scale = 2f64.powi(-(bits as i32));
    x.iter().map(|&v| v as f64 * scale).collect()
}

fn check_range(x: &[i64], bits: u32) -> Result<()> {
    match x.iter().find(|&&v| v < 0 || v >= 1i64 << bits) {
        Some(&value) => Err(Error::OutOfRange { value, bits }),
        None => Ok(()),
    }
}

fn check_grid(p: &CodecParams, bits: u32) -> Result<()> {
    p.validate()?;
    if bits == 0 || bits > 16 {
        return Err(Error::InvalidParams(format!("bit depth {bits}")));
    }
    if p.kx + bits > 56 {
        return Err(Error::InvalidParams(format!("kx {} too fine for bit depth {bits}", p.kx)));
    }
    Ok(())
}

pub fn dequant_encode(
    stream: &mut AnsStream,
    x: &[i64],
    bits: u32,
    model: &FlowModel,
    deq: &Dequantizer,
    p: &CodecParams,
) -> Result<()> {
    check_grid(p, bits)?;
    deq.validate(model.dim)?;
    if x.len() != model.dim {
        return Err(Error::DimensionMismatch { expected: model.dim, got: x.len() });
    }
    check_range(x, bits)?;
    let k = p.kx;
    let u = match deq {
        Dequantizer::Uniform => x.iter().map(|_| stream.decode_bits(k).map(|v| v as i64)).collect::<Result<Vec<_>>>()?,
        Dequantizer::ConditionalFlow(q) => {
            decode_steps(stream, &q.inverse_steps(), q.dim, p, &context(x, bits), Some((0, (1i64 << k) - 1)))?
        }
    };
    let fine: Vec<i64> = x.iter().zip(&u).map(|(&xi, &ui)| (xi << k) + ui).collect();
    compositional_encode(stream, model, &GridPoint::new(fine, k), p)
}

pub fn dequant_decode(
    stream: &mut AnsStream,
    bits: u32,
    model: &FlowModel,
    deq: &Dequantizer,
    p: &CodecParams,
) -> Result<Vec<i64>> {
    check_grid(p, bits)?;
    deq.validate(model.dim)?;
    let k = p.kx;
    let fine = compositional_decode(stream, model, p)?;
    let x: Vec<i64> = fine.indices.iter().map(|&n| n >> k).collect();
    let u: Vec<i64> = fine.indices.iter().map(|&n| n & ((1i64 << k) - 1)).collect();
    check_range(&x, bits)?;
    match deq {
        Dequantizer::Uniform => {
            for &ui in u.iter().rev() {
                stream.encode_bits(ui as u64, k)?;
            }
        }
        Dequantizer::ConditionalFlow(q) => {
            encode_steps(stream, &q.inverse_steps(), &u, p, &context(&x, bits), Some((0, (1i64 << k) - 1)))?
        }
    }
    Ok(x)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundEstimate {
    pub bits_per_dim: f64,
    pub std_error: f64,
    pub samples: usize,
}

/// Monte-Carlo estimate of `E_u[log q(u|x) - log p(x + u)]` in bits per dimension.
pub fn dequant_bound(
    x: &[i64],
    bits: u32,
    model: &FlowModel,
    deq: &Dequantizer,
    n_samples: usize,
    seed: u64,
) -> Result<BoundEstimate> {
    if n_samples == 0 {
        return Err(Error::InvalidParams("dequant_bound needs at least one sample".into()));
    }
    deq.validate(model.dim)?;
    check_range(x, bits)?;
    let d = model.dim;
    let ctx = context(x, bits);
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let (mut sum, mut sq) = (0.0, 0.0);
    for _ in 0..n_samples {
        let (u, log_q) = match deq {
            Dequantizer::Uniform => ((0..d).map(|_| rng.gen::<f64>()).collect::<Vec<_>>(), 0.0),
            Dequantizer::ConditionalFlow(q) => {
                let eps: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let (u, logdet) = q.forward_logdet(&eps, &ctx)?;
                (u, standard_normal_log_density(&eps) - logdet)
            }
        };
        let point: Vec<f64> = x.iter().zip(&u).map(|(&a, b)| a as f64 + b).collect();
        let v = (log_q - model.log_density(&point, &[])?) / std::f64::consts::LN_2 / d as f64;
        sum += v;
        sq += v * v;
    }
    let n = n_samples as f64;
    let mean = sum / n;
    let var = if n_samples > 1 { (sq / n - mean * mean).max(0.0) * n / (n - 1.0) } else { 0.0 };
    Ok(BoundEstimate { bits_per_dim: mean, std_error: (var / n).sqrt(), samples: n_samples })
}
