//! Monte-Carlo check of the log-determinant identity behind local bits-back.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256StarStar;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::FlowModel;

const PAIRS_PER_CHUNK: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GapEstimate {
    /// Estimate of `E[log p(z|x) - log p(x|z)]` under the noisy flow.
    pub estimate: f64,
    /// `-log |det J(x)|`, the value the estimate approaches as sigma shrinks.
    pub neg_logdet: f64,
    /// `estimate - neg_logdet`.
    pub gap: f64,
    /// Standard error of `gap`.
    pub std_error: f64,
    pub samples: usize,
}

/// Draws `z = f(x) + sigma J eps` with antithetic pairs `(eps, -eps)` and
/// averages `|x - f^-1(z)|^2 / (2 sigma^2) - |eps|^2 / 2`, which is exactly
/// the gap per sample. The same `seed` gives the same `eps` for every sigma.
pub fn logdet_gap(model: &FlowModel, x: &[f64], sigma: f64, n_samples: usize, seed: u64) -> Result<GapEstimate> {
    if n_samples == 0 {
        return Err(Error::InvalidParams("logdet_gap needs at least one sample".into()));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidParams(format!("sigma {sigma}")));
    }
    let (fx, logdet) = model.forward_logdet(x, &[])?;
    let jac = model.jacobian(x, &[])?;
    let d = model.dim;
    let pairs = n_samples.div_ceil(2);
    let chunks = pairs.div_ceil(PAIRS_PER_CHUNK);

    let sample = |eps: &DVector<f64>| -> Result<f64> {
        let shift = &jac * eps * sigma;
        let z: Vec<f64> = fx.iter().zip(shift.iter()).map(|(a, b)| a + b).collect();
        let back = model.inverse(&z, &[])?;
        let err: f64 = x.iter().zip(&back).map(|(a, b)| (a - b) * (a - b)).sum();
        Ok(err / (2.0 * sigma * sigma) - 0.5 * eps.norm_squared())
    };

    let partial: Vec<Result<(f64, f64)>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = Xoshiro256StarStar::seed_from_u64(seed ^ (c as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let n = PAIRS_PER_CHUNK.min(pairs - c * PAIRS_PER_CHUNK);
            let (mut sum, mut sq) = (0.0, 0.0);
            for _ in 0..n {
                let eps = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
                let v = 0.5 * (sample(&eps)? + sample(&-&eps)?);
                sum += v;
                sq += v * v;
            }
            Ok((sum, sq))
        })
        .collect();
    let (mut sum, mut sq) = (0.0, 0.0);
    for p in partial {
        let (s, q) = p?;
        sum += s;
        sq += q;
    }
    let mean = sum / pairs as f64;
    let var = if pairs > 1 { (sq / pairs as f64 - mean * mean).max(0.0) * pairs as f64 / (pairs - 1) as f64 } else { 0.0 };
    Ok(GapEstimate {
        estimate: -logdet + mean,
        neg_logdet: -logdet,
        gap: mean,
        std_error: (var / pairs as f64).sqrt(),
        samples: 2 * pairs,
    })
}
