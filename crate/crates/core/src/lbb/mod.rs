//! Local bits-back codecs for flow models.
//!
//! Every codec moves between a data-side grid point `x` and a latent-side
//! grid point `z` of the same precision. Encoding a step pops `z` from the
//! stream (bits back) and pushes `x`; decoding pops `x` and pushes `z`.
//! Encoders visit coordinates from last to first, decoders from first to last.
//!
//! * per-coordinate steps (affine coupling, autoregressive, ActNorm, sigmoid):
//!   `z_i ~ N(f_i(x_i), (sigma f_i'(x_i))^2)`, `x_i ~ N(f_i^-1(z_i), sigma^2)`.
//!   Coupling pass-through coordinates copy their bin index.
//! * black-box steps (dense layers per block, or a whole model):
//!   `z ~ N(f(x), sigma^2 J J^T)` coded through its autoregressive form, then
//!   `x ~ N(f^-1(z), sigma^2 I)`. The latent is popped first to last because
//!   each conditional reads the earlier latents.

pub mod ar_decomp;
pub mod diagnostics;

use nalgebra::{DMatrix, DVector};

use crate::ans::{AnsStream, ReservoirMode};
use crate::error::{Error, Result};
use crate::flow::{FlowLayer, FlowModel, ScalarMap, Step};
use crate::gaussian::{
    bin_center, decode_gaussian, decode_gaussian_bounded, encode_gaussian, encode_gaussian_bounded, GaussianBinSpec,
    GridPoint, CORE_SUPPORT, DEFAULT_SUPPORT,
};
pub use ar_decomp::{gaussian_to_ar, ArDecomposition};
pub use diagnostics::{logdet_gap, GapEstimate};

/// Below this many bins per noise stddev, coding degrades sharply.
pub const MIN_BINS_PER_SIGMA: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CodecParams {
    pub kx: u32,
    pub kz: u32,
    pub sigma: f64,
    /// Table precision in bits.
    pub precision: u32,
    /// Support half-width in stddevs.
    pub support: f64,
    pub seed: u64,
    pub aux_words: usize,
}

impl Default for CodecParams {
    fn default() -> Self {
        Self {
            kx: 32,
            kz: 32,
            sigma: 2f64.powi(-14),
            precision: 24,
            support: DEFAULT_SUPPORT,
            seed: 0,
            aux_words: 0,
        }
    }
}

impl CodecParams {
    pub fn new(k: u32, sigma: f64) -> Self {
        Self { kx: k, kz: k, sigma, ..Self::default() }
    }

    pub fn with_support(self, support: f64) -> Self {
        Self { support, ..self }
    }

    pub fn with_precision(self, precision: u32) -> Self {
        Self { precision, ..self }
    }

    pub fn with_seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kx != self.kz {
            return Err(Error::InvalidParams(format!("kx = {} must equal kz = {}", self.kx, self.kz)));
        }
        if self.kx > 48 {
            return Err(Error::InvalidParams(format!("precision k = {} above 48", self.kx)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParams(format!("sigma {}", self.sigma)));
        }
        if !(self.support > 0.0 && self.support.is_finite()) {
            return Err(Error::InvalidParams(format!("support {}", self.support)));
        }
        if self.precision < 8 || self.precision > crate::ans::MAX_PRECISION {
            return Err(Error::InvalidParams(format!("table precision {}", self.precision)));
        }
        if self.sigma * 2f64.powi(self.kx as i32) < MIN_BINS_PER_SIGMA {
            log::warn!(
                "sigma * 2^k = {} below {MIN_BINS_PER_SIGMA}; codelength will be far from the flow density",
                self.sigma * 2f64.powi(self.kx as i32)
            );
        }
        Ok(())
    }

    /// Fresh lenient stream holding this session's reservoir.
    pub fn stream(&self) -> AnsStream {
        AnsStream::with_mode(self.seed, self.aux_words, ReservoirMode::Lenient)
    }

    fn k(&self) -> i32 {
        self.kx as i32
    }

    fn spec(&self, mean: f64, stddev: f64) -> GaussianBinSpec {
        GaussianBinSpec::new(mean, stddev, self.k(), self.precision, self.support)
    }

    /// Posterior tables are only ever popped, then pushed back with the same
    /// value, so they need no mass beyond the core.
    fn latent_spec(&self, mean: f64, stddev: f64) -> GaussianBinSpec {
        GaussianBinSpec::new(mean, stddev, self.k(), self.precision, self.support.min(CORE_SUPPORT))
    }

    fn center(&self, n: i64) -> f64 {
        bin_center(n, self.k())
    }

    fn centers(&self, n: &[i64]) -> Vec<f64> {
        n.iter().map(|&v| self.center(v)).collect()
    }
}

/// Bounds on the data-side bin indices of the first step.
pub type Bounds = Option<(i64, i64)>;

fn push(stream: &mut AnsStream, p: &CodecParams, mean: f64, stddev: f64, bounds: Bounds, n: i64) -> Result<()> {
    let spec = p.spec(mean, stddev);
    match bounds {
        Some(b) => encode_gaussian_bounded(stream, &spec, b, n),
        None => encode_gaussian(stream, &spec, n),
    }
}

fn pop(stream: &mut AnsStream, p: &CodecParams, mean: f64, stddev: f64, bounds: Bounds) -> Result<i64> {
    let spec = p.spec(mean, stddev);
    match bounds {
        Some(b) => decode_gaussian_bounded(stream, &spec, b),
        None => decode_gaussian(stream, &spec),
    }
}

fn pop_latent(stream: &mut AnsStream, p: &CodecParams, mean: f64, stddev: f64) -> Result<i64> {
    decode_gaussian(stream, &p.latent_spec(mean, stddev))
}

fn push_latent(stream: &mut AnsStream, p: &CodecParams, mean: f64, stddev: f64, n: i64) -> Result<()> {
    encode_gaussian(stream, &p.latent_spec(mean, stddev), n)
}

fn scalar_encode(stream: &mut AnsStream, p: &CodecParams, map: &ScalarMap, nx: i64, bounds: Bounds) -> Result<i64> {
    if let ScalarMap::Identity = map {
        return Ok(nx);
    }
    let (z_mean, dz) = map.forward(p.center(nx));
    let nz = pop_latent(stream, p, z_mean, p.sigma * dz.abs())?;
    let x_mean = map.inverse(p.center(nz));
    push(stream, p, x_mean, p.sigma, bounds, nx)?;
    Ok(nz)
}

fn scalar_decode(stream: &mut AnsStream, p: &CodecParams, map: &ScalarMap, nz: i64, bounds: Bounds) -> Result<i64> {
    if let ScalarMap::Identity = map {
        return Ok(nz);
    }
    let x_mean = map.inverse(p.center(nz));
    let nx = pop(stream, p, x_mean, p.sigma, bounds)?;
    let (z_mean, dz) = map.forward(p.center(nx));
    push_latent(stream, p, z_mean, p.sigma * dz.abs(), nz)?;
    Ok(nx)
}

/// Per-coordinate codec for one step; returns the latent grid indices.
pub fn ar_encode(
    stream: &mut AnsStream,
    step: &Step,
    x: &[i64],
    p: &CodecParams,
    ctx: &[f64],
    bounds: Bounds,
) -> Result<Vec<i64>> {
    let maps = step.coord_maps(&p.centers(x), ctx)?;
    let mut z = vec![0; x.len()];
    for i in (0..x.len()).rev() {
        z[i] = scalar_encode(stream, p, &maps[i], x[i], bounds)?;
    }
    Ok(z)
}

pub fn ar_decode(
    stream: &mut AnsStream,
    step: &Step,
    z: &[i64],
    p: &CodecParams,
    ctx: &[f64],
    bounds: Bounds,
) -> Result<Vec<i64>> {
    let d = z.len();
    let mut x = vec![0; d];
    if step.is_sequential() {
        let mut xv = vec![0.0; d];
        for i in 0..d {
            let map = step.coord_map(i, &xv, ctx)?;
            x[i] = scalar_decode(stream, p, &map, z[i], bounds)?;
            xv[i] = p.center(x[i]);
        }
    } else {
        // pass-through coordinates equal on both sides, so the maps can be
        // evaluated from the latent values
        let maps = step.coord_maps(&p.centers(z), ctx)?;
        for i in 0..d {
            x[i] = scalar_decode(stream, p, &maps[i], z[i], bounds)?;
        }
    }
    Ok(x)
}

/// A differentiable bijection coded through the black-box path.
pub trait Bijection {
    fn forward(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn inverse(&self, z: &[f64]) -> Result<Vec<f64>>;
    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>>;
}

struct Linear<'a> {
    matrix: &'a DMatrix<f64>,
    inverse: &'a DMatrix<f64>,
}

impl Bijection for Linear<'_> {
    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok((self.matrix * DVector::from_column_slice(x)).as_slice().to_vec())
    }

    fn inverse(&self, z: &[f64]) -> Result<Vec<f64>> {
        Ok((self.inverse * DVector::from_column_slice(z)).as_slice().to_vec())
    }

    fn jacobian(&self, _: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.matrix.clone())
    }
}

struct WholeModel<'a> {
    model: &'a FlowModel,
    ctx: &'a [f64],
}

impl Bijection for WholeModel<'_> {
    fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.model.forward(x, self.ctx)
    }

    fn inverse(&self, z: &[f64]) -> Result<Vec<f64>> {
        self.model.inverse(z, self.ctx)
    }

    fn jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.model.jacobian(x, self.ctx)
    }
}

/// Black-box codec for one bijection; returns the latent grid indices.
pub fn bijection_encode(
    stream: &mut AnsStream,
    f: &dyn Bijection,
    x: &[i64],
    p: &CodecParams,
    bounds: Bounds,
) -> Result<Vec<i64>> {
    let d = x.len();
    let xv = p.centers(x);
    let fx = f.forward(&xv)?;
    let ar = gaussian_to_ar(&f.jacobian(&xv)?)?;
    let mut offset = vec![0.0; d];
    let mut z = vec![0; d];
    for i in 0..d {
        let (m, s) = ar.conditional(i, &offset);
        z[i] = pop_latent(stream, p, fx[i] + m, p.sigma * s)?;
        offset[i] = p.center(z[i]) - fx[i];
    }
    let x_mean = f.inverse(&p.centers(&z))?;
    for i in (0..d).rev() {
        push(stream, p, x_mean[i], p.sigma, bounds, x[i])?;
    }
    Ok(z)
}

pub fn bijection_decode(
    stream: &mut AnsStream,
    f: &dyn Bijection,
    z: &[i64],
    p: &CodecParams,
    bounds: Bounds,
) -> Result<Vec<i64>> {
    let d = z.len();
    let x_mean = f.inverse(&p.centers(z))?;
    let mut x = vec![0; d];
    for i in 0..d {
        x[i] = pop(stream, p, x_mean[i], p.sigma, bounds)?;
    }
    let xv = p.centers(&x);
    let fx = f.forward(&xv)?;
    let ar = gaussian_to_ar(&f.jacobian(&xv)?)?;
    let offset: Vec<f64> = z.iter().zip(&fx).map(|(&n, f)| p.center(n) - f).collect();
    for i in (0..d).rev() {
        let (m, s) = ar.conditional(i, &offset);
        push_latent(stream, p, fx[i] + m, p.sigma * s, z[i])?;
    }
    Ok(x)
}

/// Codes one step with whichever codec fits its layer.
pub fn step_encode(
    stream: &mut AnsStream,
    step: &Step,
    x: &[i64],
    p: &CodecParams,
    ctx: &[f64],
    bounds: Bounds,
) -> Result<Vec<i64>> {
    match step.layer {
        FlowLayer::DenseLinear(l) => {
            let mut z = x.to_vec();
            let blocks: Vec<_> = l.blocks().collect();
            for (s, w, winv) in blocks.iter().rev() {
                let (m, inv) = if step.inverted { (winv, w) } else { (w, winv) };
                let f = Linear { matrix: m, inverse: inv };
                let zb = bijection_encode(stream, &f, &x[*s..*s + w.nrows()], p, bounds)?;
                z[*s..*s + w.nrows()].copy_from_slice(&zb);
            }
            Ok(z)
        }
        _ => ar_encode(stream, step, x, p, ctx, bounds),
    }
}

pub fn step_decode(
    stream: &mut AnsStream,
    step: &Step,
    z: &[i64],
    p: &CodecParams,
    ctx: &[f64],
    bounds: Bounds,
) -> Result<Vec<i64>> {
    match step.layer {
        FlowLayer::DenseLinear(l) => {
            let mut x = z.to_vec();
            for (s, w, winv) in l.blocks() {
                let (m, inv) = if step.inverted { (&winv, &w) } else { (&w, &winv) };
                let f = Linear { matrix: m, inverse: inv };
                let xb = bijection_decode(stream, &f, &z[s..s + w.nrows()], p, bounds)?;
                x[s..s + w.nrows()].copy_from_slice(&xb);
            }
            Ok(x)
        }
        _ => ar_decode(stream, step, z, p, ctx, bounds),
    }
}

/// Standard normal prior over the final latent.
pub fn prior_encode(stream: &mut AnsStream, z: &[i64], p: &CodecParams) -> Result<()> {
    for i in (0..z.len()).rev() {
        push(stream, p, 0.0, 1.0, None, z[i])?;
    }
    Ok(())
}

pub fn prior_decode(stream: &mut AnsStream, dim: usize, p: &CodecParams) -> Result<Vec<i64>> {
    (0..dim).map(|_| pop(stream, p, 0.0, 1.0, None)).collect()
}

/// Compositional codec over an explicit list of steps. `bounds` restricts
/// the data-side indices of the first step.
pub fn encode_steps(
    stream: &mut AnsStream,
    steps: &[Step],
    x: &[i64],
    p: &CodecParams,
    ctx: &[f64],
    bounds: Bounds,
) -> Result<()> {
    p.validate()?;
    let mut cur = x.to_vec();
    for (i, step) in steps.iter().enumerate() {
        cur = step_encode(stream, step, &cur, p, ctx, if i == 0 { bounds } else { None })?;
    }
    prior_encode(stream, &cur, p)
}

pub fn decode_steps(
    stream: &mut AnsStream,
    steps: &[Step],
    dim: usize,
    p: &CodecParams,
    ctx: &[f64],
    bounds: Bounds,
) -> Result<Vec<i64>> {
    p.validate()?;
    let mut cur = prior_decode(stream, dim, p)?;
    for (i, step) in steps.iter().enumerate().rev() {
        cur = step_decode(stream, step, &cur, p, ctx, if i == 0 { bounds } else { None })?;
    }
    Ok(cur)
}

fn check_point(model: &FlowModel, x: &GridPoint, p: &CodecParams) -> Result<()> {
    if x.dim() != model.dim {
        return Err(Error::DimensionMismatch { expected: model.dim, got: x.dim() });
    }
    if x.k != p.kx {
        return Err(Error::InvalidParams(format!("grid point at k = {}, codec at kx = {}", x.k, p.kx)));
    }
    Ok(())
}

/// Layer-by-layer local bits-back coding of `x` under `model`.
pub fn compositional_encode(stream: &mut AnsStream, model: &FlowModel, x: &GridPoint, p: &CodecParams) -> Result<()> {
    check_point(model, x, p)?;
    encode_steps(stream, &model.steps(), &x.indices, p, &[], None)
}

pub fn compositional_decode(stream: &mut AnsStream, model: &FlowModel, p: &CodecParams) -> Result<GridPoint> {
    let idx = decode_steps(stream, &model.steps(), model.dim, p, &[], None)?;
    Ok(GridPoint::new(idx, p.kx))
}

/// Local bits-back coding of `x` with the Jacobian of the whole model.
pub fn blackbox_encode(stream: &mut AnsStream, model: &FlowModel, x: &GridPoint, p: &CodecParams) -> Result<()> {
    check_point(model, x, p)?;
    p.validate()?;
    let z = bijection_encode(stream, &WholeModel { model, ctx: &[] }, &x.indices, p, None)?;
    prior_encode(stream, &z, p)
}

pub fn blackbox_decode(stream: &mut AnsStream, model: &FlowModel, p: &CodecParams) -> Result<GridPoint> {
    p.validate()?;
    let z = prior_decode(stream, model.dim, p)?;
    let x = bijection_decode(stream, &WholeModel { model, ctx: &[] }, &z, p, None)?;
    Ok(GridPoint::new(x, p.kx))
}

/// `-log2 p(x) + k d`: the ideal codelength of a grid point in bits.
pub fn theoretical_bits(model: &FlowModel, x: &GridPoint) -> Result<f64> {
    Ok(model.neg_log2_density(&x.values(), &[])? + x.k as f64 * x.dim() as f64)
}
