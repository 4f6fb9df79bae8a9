//! Randomly initialized toy flows for tests, benchmarks and fixtures.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256StarStar;

use crate::error::Result;
use crate::flow::mlp::{Mlp, HIDDEN_WIDTH};
use crate::flow::{ActNorm, AffineCoupling, Autoregressive, DenseLinear, FlowLayer, FlowModel};

/// Output-layer gain of random conditioners; keeps log-scales moderate.
const OUTPUT_GAIN: f64 = 0.5;

fn conditioner<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Mlp {
    let mut mlp = Mlp::random(&[inputs, HIDDEN_WIDTH, HIDDEN_WIDTH, outputs], 1.0, rng);
    let last = mlp.layers.last_mut().unwrap();
    last.weight *= OUTPUT_GAIN;
    for b in last.bias.iter_mut() {
        *b = 0.1 * rng.sample::<f64, _>(StandardNormal);
    }
    mlp
}

pub fn random_actnorm<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> FlowLayer {
    let scale = (0..dim).map(|_| rng.gen_range(0.5..2.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 }).collect();
    let bias = (0..dim).map(|_| 0.5 * rng.sample::<f64, _>(StandardNormal)).collect();
    FlowLayer::ActNorm(ActNorm { scale, bias })
}

pub fn random_coupling<R: Rng + ?Sized>(dim: usize, reverse: bool, context_dim: usize, rng: &mut R) -> FlowLayer {
    let passive = dim / 2;
    let active = dim - passive;
    let mlp = conditioner(passive + context_dim, 2 * active, rng);
    FlowLayer::AffineCoupling(AffineCoupling::new(dim, reverse, context_dim, mlp).expect("shapes match"))
}

pub fn random_autoregressive<R: Rng + ?Sized>(dim: usize, context_dim: usize, rng: &mut R) -> FlowLayer {
    let mlp = conditioner(dim + context_dim, 2 * dim, rng);
    FlowLayer::Autoregressive(Autoregressive::new(dim, context_dim, mlp).expect("shapes match"))
}

/// Block-diagonal `I + 0.4 N / sqrt(block)`, redrawn until comfortably invertible.
pub fn random_dense<R: Rng + ?Sized>(dim: usize, block: usize, rng: &mut R) -> FlowLayer {
    let block = block.clamp(1, dim);
    assert_eq!(dim % block, 0, "block {block} does not divide {dim}");
    let mut w = DMatrix::zeros(dim, dim);
    for s in (0..dim).step_by(block) {
        loop {
            let b = DMatrix::<f64>::identity(block, block)
                + DMatrix::from_fn(block, block, |_, _| 0.4 / (block as f64).sqrt() * rng.sample::<f64, _>(StandardNormal));
            if b.determinant().abs() > 0.1 {
                w.view_mut((s, s), (block, block)).copy_from(&b);
                break;
            }
        }
    }
    FlowLayer::DenseLinear(DenseLinear::new(w).expect("determinant checked"))
}

/// ActNorm, `couplings` alternating couplings, then a block-diagonal dense layer.
pub fn realnvp(dim: usize, couplings: usize, block: usize, seed: u64) -> FlowModel {
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let mut layers = vec![random_actnorm(dim, &mut rng)];
    for c in 0..couplings {
        layers.push(random_coupling(dim, c % 2 == 1, 0, &mut rng));
    }
    layers.push(random_dense(dim, block, &mut rng));
    FlowModel::new(dim, layers).expect("dims chain")
}

/// Random stack of `depth` layers drawn from every layer type that has a
/// per-coordinate or blockwise codec.
pub fn random_model(dim: usize, depth: usize, seed: u64) -> FlowModel {
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let block = (1..=dim.min(4)).rev().find(|b| dim % b == 0).unwrap_or(1);
    let layers = (0..depth)
        .map(|i| match rng.gen_range(0..4) {
            0 => random_actnorm(dim, &mut rng),
            1 => random_coupling(dim, i % 2 == 1, 0, &mut rng),
            2 => random_autoregressive(dim, 0, &mut rng),
            _ => random_dense(dim, block, &mut rng),
        })
        .collect();
    FlowModel::new(dim, layers).expect("dims chain")
}

/// Density model for 8-bit data: scales `[0, 256)` to roughly unit range,
/// then a few couplings.
pub fn byte_model(dim: usize, couplings: usize, seed: u64) -> FlowModel {
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let mut layers = vec![FlowLayer::ActNorm(ActNorm { scale: vec![1.0 / 64.0; dim], bias: vec![-2.0; dim] })];
    for c in 0..couplings {
        layers.push(random_coupling(dim, c % 2 == 1, 0, &mut rng));
    }
    FlowModel::new(dim, layers).expect("dims chain")
}

/// Conditional dequantizer in sampling orientation: noise to `(0, 1)^dim`.
pub fn conditional_dequantizer(dim: usize, couplings: usize, seed: u64) -> Result<FlowModel> {
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let mut layers = Vec::new();
    for c in 0..couplings {
        layers.push(random_coupling(dim, c % 2 == 1, dim, &mut rng));
    }
    layers.push(FlowLayer::ActNorm(ActNorm { scale: vec![0.8; dim], bias: vec![0.0; dim] }));
    layers.push(FlowLayer::SigmoidSquash { dim });
    FlowModel::new(dim, layers)
}

/// Bytes from a three-component Gaussian mixture, clipped to `[0, 255]`.
pub fn byte_data(items: usize, dim: usize, seed: u64) -> Vec<Vec<i64>> {
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let centers = [64.0, 128.0, 192.0];
    (0..items)
        .map(|_| {
            let c = centers[rng.gen_range(0..3)];
            (0..dim)
                .map(|_| (c + 12.0 * rng.sample::<f64, _>(StandardNormal)).round().clamp(0.0, 255.0) as i64)
                .collect()
        })
        .collect()
}
