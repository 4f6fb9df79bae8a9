//! Invertible flow layers, composite models and their densities.
//!
//! Every layer maps data-side `x` to latent-side `z` in `forward`. Layers with
//! a conditioner (coupling, autoregressive) may take an extra context vector
//! that is appended to the conditioner input; all other layers ignore it.

pub mod mlp;
pub mod weights;

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use mlp::Mlp;

/// Log-scales are soft-clamped to `(-LOG_SCALE_BOUND, LOG_SCALE_BOUND)`.
pub const LOG_SCALE_BOUND: f64 = 5.0;

/// Smallest admissible `|det W|` for a dense layer.
pub const MIN_ABS_DET: f64 = 1e-12;

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// `bound * tanh(raw / bound)` and its derivative.
#[inline]
fn soft_clamp(raw: f64) -> (f64, f64) {
    let t = (raw / LOG_SCALE_BOUND).tanh();
    (LOG_SCALE_BOUND * t, 1.0 - t * t)
}

#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn logistic_derivative(x: f64) -> f64 {
    let e = (-x.abs()).exp();
    e / ((1.0 + e) * (1.0 + e))
}

#[inline]
fn logit(z: f64) -> f64 {
    z.ln() - (-z).ln_1p()
}

#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// An invertible scalar map for one coordinate, with its derivative.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScalarMap {
    /// Coordinate passed through unchanged; coded by copying its bin index.
    Identity,
    Affine { scale: f64, shift: f64 },
    Sigmoid,
    Logit,
}

impl ScalarMap {
    /// Value and derivative at `x`.
    pub fn forward(&self, x: f64) -> (f64, f64) {
        match *self {
            ScalarMap::Identity => (x, 1.0),
            ScalarMap::Affine { scale, shift } => (scale * x + shift, scale),
            ScalarMap::Sigmoid => (logistic(x), logistic_derivative(x)),
            ScalarMap::Logit => (logit(x), 1.0 / (x * (1.0 - x))),
        }
    }

    pub fn inverse(&self, z: f64) -> f64 {
        match *self {
            ScalarMap::Identity => z,
            ScalarMap::Affine { scale, shift } => (z - shift) / scale,
            ScalarMap::Sigmoid => logit(z),
            ScalarMap::Logit => logistic(z),
        }
    }

    pub fn inverted(&self) -> ScalarMap {
        match *self {
            ScalarMap::Identity => ScalarMap::Identity,
            ScalarMap::Affine { scale, shift } => ScalarMap::Affine { scale: 1.0 / scale, shift: -shift / scale },
            ScalarMap::Sigmoid => ScalarMap::Logit,
            ScalarMap::Logit => ScalarMap::Sigmoid,
        }
    }
}

/// Elementwise `z = scale * x + bias`.
#[derive(Clone, Debug, PartialEq)]
pub struct ActNorm {
    pub scale: Vec<f64>,
    pub bias: Vec<f64>,
}

impl ActNorm {
    pub fn new(scale: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if scale.len() != bias.len() {
            return Err(Error::DimensionMismatch { expected: scale.len(), got: bias.len() });
        }
        if let Some(&s) = scale.iter().find(|s| **s == 0.0 || !s.is_finite()) {
            return Err(Error::NonInvertible { det: s });
        }
        Ok(Self { scale, bias })
    }

    pub fn identity(dim: usize) -> Self {
        Self { scale: vec![1.0; dim], bias: vec![0.0; dim] }
    }
}

/// `z = W x` with a precomputed inverse. `block` is the size of the diagonal
/// blocks `W` is made of (equal to the dimension for a full matrix).
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLinear {
    pub weight: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
    pub log_abs_det: f64,
    pub block: usize,
}

impl DenseLinear {
    pub fn new(weight: DMatrix<f64>) -> Result<Self> {
        let d = weight.nrows();
        if weight.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: weight.ncols() });
        }
        let block = (1..=d)
            .filter(|b| d % b == 0)
            .find(|&b| {
                (0..d).all(|r| (0..d).all(|c| r / b == c / b || weight[(r, c)] == 0.0))
            })
            .unwrap_or(d);
        let mut log_abs_det = 0.0;
        let mut inverse = DMatrix::zeros(d, d);
        for s in (0..d).step_by(block.max(1)) {
            let w = weight.view((s, s), (block, block)).into_owned();
            let lu = w.lu();
            let det = lu.determinant();
            if !(det.abs() >= MIN_ABS_DET) {
                return Err(Error::NonInvertible { det });
            }
            log_abs_det += det.abs().ln();
            let inv = lu.try_inverse().ok_or(Error::NonInvertible { det })?;
            inverse.view_mut((s, s), (block, block)).copy_from(&inv);
        }
        Ok(Self { weight, inverse, log_abs_det, block })
    }

    pub fn dim(&self) -> usize {
        self.weight.nrows()
    }

    /// Diagonal blocks as `(offset, W_b, W_b^-1)`.
    pub fn blocks(&self) -> impl Iterator<Item = (usize, DMatrix<f64>, DMatrix<f64>)> + '_ {
        let b = self.block;
        (0..self.dim()).step_by(b.max(1)).map(move |s| {
            (s, self.weight.view((s, s), (b, b)).into_owned(), self.inverse.view((s, s), (b, b)).into_owned())
        })
    }
}

/// Affine coupling: the passive half is copied, the active half becomes
/// `exp(a) * x + t` with `(a, t)` computed from the passive half.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineCoupling {
    pub dim: usize,
    /// If set, the second half is passive and the first half active.
    pub reverse: bool,
    pub context_dim: usize,
    /// Input `[passive; context]`, output `[raw log-scale; shift]` over the active half.
    pub conditioner: Mlp,
}

impl AffineCoupling {
    pub fn new(dim: usize, reverse: bool, context_dim: usize, conditioner: Mlp) -> Result<Self> {
        let c = Self { dim, reverse, context_dim, conditioner };
        let (p, a) = (c.passive().len(), c.active().len());
        if c.conditioner.inputs() != p + context_dim {
            return Err(Error::DimensionMismatch { expected: p + context_dim, got: c.conditioner.inputs() });
        }
        if c.conditioner.outputs() != 2 * a {
            return Err(Error::DimensionMismatch { expected: 2 * a, got: c.conditioner.outputs() });
        }
        Ok(c)
    }

    pub fn passive(&self) -> Range<usize> {
        let split = self.dim / 2;
        if self.reverse {
            self.dim - split..self.dim
        } else {
            0..split
        }
    }

    pub fn active(&self) -> Range<usize> {
        let split = self.dim / 2;
        if self.reverse {
            0..self.dim - split
        } else {
            split..self.dim
        }
    }

    fn conditioner_input(&self, x: &[f64], ctx: &[f64]) -> Vec<f64> {
        let mut input = x[self.passive()].to_vec();
        input.extend_from_slice(ctx);
        input
    }

    /// Log-scales and shifts of the active half.
    pub fn params(&self, x: &[f64], ctx: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let out = self.conditioner.forward(&self.conditioner_input(x, ctx));
        let n = self.active().len();
        (out[..n].iter().map(|&r| soft_clamp(r).0).collect(), out[n..].to_vec())
    }
}

/// Masked autoregressive affine layer: `z_i = exp(a_i(x_<i)) x_i + t_i(x_<i)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Autoregressive {
    pub dim: usize,
    pub context_dim: usize,
    /// Input `[x; context]`, output `[raw log-scale; shift]`, masked.
    pub conditioner: Mlp,
}

impl Autoregressive {
    /// Applies the autoregressive masks to `conditioner`.
    pub fn new(dim: usize, context_dim: usize, mut conditioner: Mlp) -> Result<Self> {
        if conditioner.inputs() != dim + context_dim {
            return Err(Error::DimensionMismatch { expected: dim + context_dim, got: conditioner.inputs() });
        }
        if conditioner.outputs() != 2 * dim {
            return Err(Error::DimensionMismatch { expected: 2 * dim, got: conditioner.outputs() });
        }
        let hidden: Vec<usize> = conditioner.layers[..conditioner.layers.len() - 1].iter().map(|l| l.outputs()).collect();
        conditioner.apply_masks(&mlp::autoregressive_masks(dim, context_dim, &hidden));
        Ok(Self { dim, context_dim, conditioner })
    }

    fn conditioner_input(&self, x: &[f64], ctx: &[f64]) -> Vec<f64> {
        let mut input = x.to_vec();
        input.extend_from_slice(ctx);
        input
    }

    /// Log-scales and shifts of every coordinate; entry `i` only reads `x_<i`.
    pub fn params(&self, x: &[f64], ctx: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let out = self.conditioner.forward(&self.conditioner_input(x, ctx));
        (out[..self.dim].iter().map(|&r| soft_clamp(r).0).collect(), out[self.dim..].to_vec())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FlowLayer {
    ActNorm(ActNorm),
    DenseLinear(DenseLinear),
    AffineCoupling(AffineCoupling),
    Autoregressive(Autoregressive),
    SigmoidSquash { dim: usize },
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}

impl FlowLayer {
    pub fn name(&self) -> &'static str {
        match self {
            FlowLayer::ActNorm(_) => "ActNorm",
            FlowLayer::DenseLinear(_) => "DenseLinear",
            FlowLayer::AffineCoupling(_) => "AffineCoupling",
            FlowLayer::Autoregressive(_) => "Autoregressive",
            FlowLayer::SigmoidSquash { .. } => "SigmoidSquash",
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            FlowLayer::ActNorm(l) => l.scale.len(),
            FlowLayer::DenseLinear(l) => l.dim(),
            FlowLayer::AffineCoupling(l) => l.dim,
            FlowLayer::Autoregressive(l) => l.dim,
            FlowLayer::SigmoidSquash { dim } => *dim,
        }
    }

    pub fn context_dim(&self) -> usize {
        match self {
            FlowLayer::AffineCoupling(l) => l.context_dim,
            FlowLayer::Autoregressive(l) => l.context_dim,
            _ => 0,
        }
    }

    /// `z = f(x)` and `log |det J_f(x)|`.
    pub fn forward_logdet(&self, x: &[f64], ctx: &[f64]) -> Result<(Vec<f64>, f64)> {
        check_dim(self.dim(), x.len())?;
        Ok(match self {
            FlowLayer::ActNorm(l) => (
                x.iter().zip(&l.scale).zip(&l.bias).map(|((x, s), b)| s * x + b).collect(),
                l.scale.iter().map(|s| s.abs().ln()).sum(),
            ),
            FlowLayer::DenseLinear(l) => {
                ((&l.weight * DVector::from_column_slice(x)).as_slice().to_vec(), l.log_abs_det)
            }
            FlowLayer::AffineCoupling(l) => {
                let (a, t) = l.params(x, ctx);
                let mut z = x.to_vec();
                for (j, i) in l.active().enumerate() {
                    z[i] = a[j].exp() * x[i] + t[j];
                }
                (z, a.iter().sum())
            }
            FlowLayer::Autoregressive(l) => {
                let (a, t) = l.params(x, ctx);
                ((0..l.dim).map(|i| a[i].exp() * x[i] + t[i]).collect(), a.iter().sum())
            }
            FlowLayer::SigmoidSquash { .. } => (
                x.iter().map(|&v| logistic(v)).collect(),
                x.iter().map(|&v| -softplus(v) - softplus(-v)).sum(),
            ),
        })
    }

    pub fn forward(&self, x: &[f64], ctx: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_logdet(x, ctx)?.0)
    }

    pub fn inverse(&self, z: &[f64], ctx: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), z.len())?;
        Ok(match self {
            FlowLayer::ActNorm(l) => z.iter().zip(&l.scale).zip(&l.bias).map(|((z, s), b)| (z - b) / s).collect(),
            FlowLayer::DenseLinear(l) => (&l.inverse * DVector::from_column_slice(z)).as_slice().to_vec(),
            FlowLayer::AffineCoupling(l) => {
                let (a, t) = l.params(z, ctx);
                let mut x = z.to_vec();
                for (j, i) in l.active().enumerate() {
                    x[i] = (z[i] - t[j]) * (-a[j]).exp();
                }
                x
            }
            FlowLayer::Autoregressive(l) => {
                let mut x = vec![0.0; l.dim];
                for i in 0..l.dim {
                    let (a, t) = l.params(&x, ctx);
                    x[i] = (z[i] - t[i]) * (-a[i]).exp();
                }
                x
            }
            FlowLayer::SigmoidSquash { .. } => z.iter().map(|&v| logit(v)).collect(),
        })
    }

    pub fn log_abs_det(&self, x: &[f64], ctx: &[f64]) -> Result<f64> {
        Ok(self.forward_logdet(x, ctx)?.1)
    }

    /// Dense Jacobian `dz/dx` at `x`.
    pub fn jacobian(&self, x: &[f64], ctx: &[f64]) -> Result<DMatrix<f64>> {
        let d = self.dim();
        check_dim(d, x.len())?;
        Ok(match self {
            FlowLayer::ActNorm(l) => DMatrix::from_diagonal(&DVector::from_column_slice(&l.scale)),
            FlowLayer::DenseLinear(l) => l.weight.clone(),
            FlowLayer::AffineCoupling(l) => {
                let passive = l.passive();
                let n = l.active().len();
                let (out, dout) = l.conditioner.forward_with_jacobian(&l.conditioner_input(x, ctx), passive.len());
                let mut jac = DMatrix::identity(d, d);
                for (j, i) in l.active().enumerate() {
                    let (a, da) = soft_clamp(out[j]);
                    let e = a.exp();
                    jac[(i, i)] = e;
                    for (c, p) in passive.clone().enumerate() {
                        jac[(i, p)] = x[i] * e * da * dout[(j, c)] + dout[(n + j, c)];
                    }
                }
                jac
            }
            FlowLayer::Autoregressive(l) => {
                let (out, dout) = l.conditioner.forward_with_jacobian(&l.conditioner_input(x, ctx), d);
                let mut jac = DMatrix::zeros(d, d);
                for i in 0..d {
                    let (a, da) = soft_clamp(out[i]);
                    let e = a.exp();
                    for c in 0..i {
                        jac[(i, c)] = x[i] * e * da * dout[(i, c)] + dout[(d + i, c)];
                    }
                    jac[(i, i)] = e;
                }
                jac
            }
            FlowLayer::SigmoidSquash { .. } => {
                DMatrix::from_diagonal(&DVector::from_iterator(d, x.iter().map(|&v| logistic_derivative(v))))
            }
        })
    }

    /// Scalar map of coordinate `i`, given the entries of `x` it depends on
    /// (the passive half for a coupling, `x_<i` for an autoregressive layer).
    pub fn coord_map(&self, i: usize, x: &[f64], ctx: &[f64]) -> Result<ScalarMap> {
        check_dim(self.dim(), x.len())?;
        Ok(match self {
            FlowLayer::ActNorm(l) => ScalarMap::Affine { scale: l.scale[i], shift: l.bias[i] },
            FlowLayer::DenseLinear(_) => return Err(Error::UnsupportedLayer("DenseLinear")),
            FlowLayer::AffineCoupling(l) => {
                if l.passive().contains(&i) {
                    ScalarMap::Identity
                } else {
                    let (a, t) = l.params(x, ctx);
                    let j = i - l.active().start;
                    ScalarMap::Affine { scale: a[j].exp(), shift: t[j] }
                }
            }
            FlowLayer::Autoregressive(l) => {
                let (a, t) = l.params(x, ctx);
                ScalarMap::Affine { scale: a[i].exp(), shift: t[i] }
            }
            FlowLayer::SigmoidSquash { .. } => ScalarMap::Sigmoid,
        })
    }

    /// All scalar maps at once; the conditioner runs a single time.
    pub fn coord_maps(&self, x: &[f64], ctx: &[f64]) -> Result<Vec<ScalarMap>> {
        check_dim(self.dim(), x.len())?;
        let affine = |a: &[f64], t: &[f64]| -> Vec<ScalarMap> {
            a.iter().zip(t).map(|(a, t)| ScalarMap::Affine { scale: a.exp(), shift: *t }).collect()
        };
        Ok(match self {
            FlowLayer::DenseLinear(_) => return Err(Error::UnsupportedLayer("DenseLinear")),
            FlowLayer::AffineCoupling(l) => {
                let (a, t) = l.params(x, ctx);
                let mut maps = vec![ScalarMap::Identity; l.dim];
                maps[l.active()].copy_from_slice(&affine(&a, &t));
                maps
            }
            FlowLayer::Autoregressive(l) => {
                let (a, t) = l.params(x, ctx);
                affine(&a, &t)
            }
            _ => (0..self.dim()).map(|i| self.coord_map(i, x, ctx)).collect::<Result<_>>()?,
        })
    }

    /// `(z_i, dz_i/dx_i)` for coordinate `i`.
    pub fn coord_forward(&self, i: usize, x: &[f64], ctx: &[f64]) -> Result<(f64, f64)> {
        Ok(self.coord_map(i, x, ctx)?.forward(x[i]))
    }

    /// `x_i` from `z_i`, given the entries of `x` that coordinate `i` depends on.
    pub fn coord_inverse(&self, i: usize, z_i: f64, x: &[f64], ctx: &[f64]) -> Result<f64> {
        Ok(self.coord_map(i, x, ctx)?.inverse(z_i))
    }
}

/// A layer used in either direction.
#[derive(Clone, Copy, Debug)]
pub struct Step<'a> {
    pub layer: &'a FlowLayer,
    pub inverted: bool,
}

impl<'a> Step<'a> {
    pub fn dim(&self) -> usize {
        self.layer.dim()
    }

    pub fn forward(&self, x: &[f64], ctx: &[f64]) -> Result<Vec<f64>> {
        if self.inverted {
            self.layer.inverse(x, ctx)
        } else {
            self.layer.forward(x, ctx)
        }
    }

    pub fn inverse(&self, z: &[f64], ctx: &[f64]) -> Result<Vec<f64>> {
        if self.inverted {
            self.layer.forward(z, ctx)
        } else {
            self.layer.inverse(z, ctx)
        }
    }

    pub fn forward_logdet(&self, x: &[f64], ctx: &[f64]) -> Result<(Vec<f64>, f64)> {
        if self.inverted {
            let z = self.layer.inverse(x, ctx)?;
            let ld = self.layer.log_abs_det(&z, ctx)?;
            Ok((z, -ld))
        } else {
            self.layer.forward_logdet(x, ctx)
        }
    }

    pub fn jacobian(&self, x: &[f64], ctx: &[f64]) -> Result<DMatrix<f64>> {
        if self.inverted {
            let z = self.layer.inverse(x, ctx)?;
            let j = self.layer.jacobian(&z, ctx)?;
            let det = j.determinant();
            j.try_inverse().ok_or(Error::NonInvertible { det })
        } else {
            self.layer.jacobian(x, ctx)
        }
    }

    /// Whether coordinate `i`'s map reads earlier coordinates of the input.
    pub fn is_sequential(&self) -> bool {
        matches!(self.layer, FlowLayer::Autoregressive(_)) && !self.inverted
    }

    pub fn coord_map(&self, i: usize, x: &[f64], ctx: &[f64]) -> Result<ScalarMap> {
        if self.inverted {
            if let FlowLayer::Autoregressive(_) = self.layer {
                return Err(Error::UnsupportedLayer("inverted Autoregressive"));
            }
            Ok(self.layer.coord_map(i, x, ctx)?.inverted())
        } else {
            self.layer.coord_map(i, x, ctx)
        }
    }

    pub fn coord_maps(&self, x: &[f64], ctx: &[f64]) -> Result<Vec<ScalarMap>> {
        if self.inverted {
            if let FlowLayer::Autoregressive(_) = self.layer {
                return Err(Error::UnsupportedLayer("inverted Autoregressive"));
            }
            Ok(self.layer.coord_maps(x, ctx)?.iter().map(ScalarMap::inverted).collect())
        } else {
            self.layer.coord_maps(x, ctx)
        }
    }
}

/// A composite flow `f_K o ... o f_1` with a standard Gaussian prior.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowModel {
    pub dim: usize,
    pub context_dim: usize,
    pub layers: Vec<FlowLayer>,
}

impl FlowModel {
    pub fn new(dim: usize, layers: Vec<FlowLayer>) -> Result<Self> {
        for l in &layers {
            check_dim(dim, l.dim())?;
        }
        let contexts: Vec<usize> = layers.iter().map(FlowLayer::context_dim).filter(|&c| c > 0).collect();
        let context_dim = contexts.first().copied().unwrap_or(0);
        if let Some(&c) = contexts.iter().find(|&&c| c != context_dim) {
            return Err(Error::DimensionMismatch { expected: context_dim, got: c });
        }
        Ok(Self { dim, context_dim, layers })
    }

    /// Prior-only model.
    pub fn identity(dim: usize) -> Self {
        Self { dim, context_dim: 0, layers: Vec::new() }
    }

    fn check(&self, x: &[f64], ctx: &[f64]) -> Result<()> {
        check_dim(self.dim, x.len())?;
        check_dim(self.context_dim, ctx.len())
    }

    /// Layers in data-to-latent order.
    pub fn steps(&self) -> Vec<Step<'_>> {
        self.layers.iter().map(|layer| Step { layer, inverted: false }).collect()
    }

    /// Steps of the inverse map, in its own data-to-latent order.
    pub fn inverse_steps(&self) -> Vec<Step<'_>> {
        self.layers.iter().rev().map(|layer| Step { layer, inverted: true }).collect()
    }

    pub fn forward_logdet(&self, x: &[f64], ctx: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check(x, ctx)?;
        let mut z = x.to_vec();
        let mut total = 0.0;
        for l in &self.layers {
            let (next, ld) = l.forward_logdet(&z, ctx)?;
            z = next;
            total += ld;
        }
        Ok((z, total))
    }

    pub fn forward(&self, x: &[f64], ctx: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_logdet(x, ctx)?.0)
    }

    pub fn inverse(&self, z: &[f64], ctx: &[f64]) -> Result<Vec<f64>> {
        self.check(z, ctx)?;
        let mut x = z.to_vec();
        for l in self.layers.iter().rev() {
            x = l.inverse(&x, ctx)?;
        }
        Ok(x)
    }

    /// Chain-rule product `J_K(z_{K-1}) ... J_1(x)`.
    pub fn jacobian(&self, x: &[f64], ctx: &[f64]) -> Result<DMatrix<f64>> {
        self.check(x, ctx)?;
        let mut z = x.to_vec();
        let mut jac = DMatrix::identity(self.dim, self.dim);
        for l in &self.layers {
            jac = l.jacobian(&z, ctx)? * jac;
            z = l.forward(&z, ctx)?;
        }
        Ok(jac)
    }

    /// Natural-log density of `x`.
    pub fn log_density(&self, x: &[f64], ctx: &[f64]) -> Result<f64> {
        let (z, logdet) = self.forward_logdet(x, ctx)?;
        Ok(standard_normal_log_density(&z) + logdet)
    }

    /// `-log2 p(x)`.
    pub fn neg_log2_density(&self, x: &[f64], ctx: &[f64]) -> Result<f64> {
        Ok(-self.log_density(x, ctx)? / std::f64::consts::LN_2)
    }
}

pub fn standard_normal_log_density(z: &[f64]) -> f64 {
    -0.5 * z.iter().map(|v| v * v).sum::<f64>() - HALF_LN_2PI * z.len() as f64
}

#[cfg(test)]
mod tests;
