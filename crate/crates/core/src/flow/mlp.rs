//! Tanh multilayer perceptrons used as coupling and autoregressive conditioners.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

/// Hidden width of conditioner networks.
pub const HIDDEN_WIDTH: usize = 64;

#[derive(Clone, Debug, PartialEq)]
pub struct Dense {
    /// `out x in`
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { weight: DMatrix::zeros(outputs, inputs), bias: DVector::zeros(outputs) }
    }

    pub fn inputs(&self) -> usize {
        self.weight.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.nrows()
    }
}

/// Fully connected network: tanh on every hidden layer, linear output.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Dense>,
}

impl Mlp {
    /// Random network with `N(0, gain^2 / fan_in)` weights and zero biases.
    pub fn random<R: Rng + ?Sized>(widths: &[usize], gain: f64, rng: &mut R) -> Self {
        let layers = widths
            .windows(2)
            .map(|w| {
                let std = gain / (w[0].max(1) as f64).sqrt();
                let weight = DMatrix::from_fn(w[1], w[0], |_, _| std * rng.sample::<f64, _>(StandardNormal));
                Dense { weight, bias: DVector::zeros(w[1]) }
            })
            .collect();
        Self { layers }
    }

    /// Network whose output is identically zero.
    pub fn zeros(widths: &[usize]) -> Self {
        Self { layers: widths.windows(2).map(|w| Dense::zeros(w[0], w[1])).collect() }
    }

    pub fn inputs(&self) -> usize {
        self.layers.first().map_or(0, Dense::inputs)
    }

    pub fn outputs(&self) -> usize {
        self.layers.last().map_or(0, Dense::outputs)
    }

    pub fn forward(&self, x: &[f64]) -> Vec<f64> {
        let mut h = DVector::from_column_slice(x);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = &layer.weight * h + &layer.bias;
            if i < last {
                h.apply(|v| *v = v.tanh());
            }
        }
        h.as_slice().to_vec()
    }

    /// Output and its Jacobian with respect to the first `wrt` inputs.
    pub fn forward_with_jacobian(&self, x: &[f64], wrt: usize) -> (Vec<f64>, DMatrix<f64>) {
        let mut h = DVector::from_column_slice(x);
        let mut jac = DMatrix::<f64>::identity(x.len(), x.len()).columns(0, wrt).into_owned();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            h = &layer.weight * h + &layer.bias;
            jac = &layer.weight * jac;
            if i < last {
                h.apply(|v| *v = v.tanh());
                for (r, v) in h.iter().enumerate() {
                    let g = 1.0 - v * v;
                    jac.row_mut(r).scale_mut(g);
                }
            }
        }
        (h.as_slice().to_vec(), jac)
    }

    /// Zero every weight whose mask entry is zero.
    pub fn apply_masks(&mut self, masks: &[DMatrix<f64>]) {
        for (layer, mask) in self.layers.iter_mut().zip(masks) {
            layer.weight.component_mul_assign(mask);
        }
    }
}

/// Connectivity masks for an autoregressive network over `dim` coordinates.
///
/// Inputs are `dim` coordinates (degree `i + 1`) followed by `context` inputs
/// (degree 0). Hidden unit `j` has degree `j mod dim`. The output is
/// `[log_scale; shift]`, each entry `i` of degree `i + 1`, so output `i`
/// only sees coordinates `< i`.
pub fn autoregressive_masks(dim: usize, context: usize, hidden: &[usize]) -> Vec<DMatrix<f64>> {
    let input_deg: Vec<usize> = (0..dim).map(|i| i + 1).chain(std::iter::repeat(0).take(context)).collect();
    let output_deg: Vec<usize> = (0..2 * dim).map(|o| o % dim + 1).collect();
    let mut degrees = vec![input_deg];
    for &w in hidden {
        degrees.push((0..w).map(|j| j % dim.max(1)).collect());
    }
    let mut masks = Vec::with_capacity(hidden.len() + 1);
    for l in 0..hidden.len() {
        let (prev, next) = (&degrees[l], &degrees[l + 1]);
        masks.push(DMatrix::from_fn(next.len(), prev.len(), |r, c| f64::from(next[r] >= prev[c])));
    }
    let prev = degrees.last().unwrap();
    masks.push(DMatrix::from_fn(output_deg.len(), prev.len(), |r, c| f64::from(output_deg[r] > prev[c])));
    masks
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_xoshiro::Xoshiro256StarStar;

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = Xoshiro256StarStar::seed_from_u64(1);
        let mlp = Mlp::random(&[5, 8, 8, 3], 1.0, &mut rng);
        let x = [0.3, -0.2, 0.9, 0.1, -0.7];
        let (y, jac) = mlp.forward_with_jacobian(&x, 4);
        assert_eq!(y, mlp.forward(&x));
        assert_eq!(jac.shape(), (3, 4));
        let h = 1e-6;
        for c in 0..4 {
            let mut xp = x;
            let mut xm = x;
            xp[c] += h;
            xm[c] -= h;
            let (fp, fm) = (mlp.forward(&xp), mlp.forward(&xm));
            for r in 0..3 {
                assert!(((fp[r] - fm[r]) / (2.0 * h) - jac[(r, c)]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn masks_are_autoregressive() {
        let mut rng = Xoshiro256StarStar::seed_from_u64(2);
        let (d, ctx) = (4, 2);
        let mut mlp = Mlp::random(&[d + ctx, 16, 16, 2 * d], 1.0, &mut rng);
        mlp.apply_masks(&autoregressive_masks(d, ctx, &[16, 16]));
        let x = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6];
        let (_, jac) = mlp.forward_with_jacobian(&x, d + ctx);
        for o in 0..2 * d {
            for c in 0..d {
                if c >= o % d {
                    assert_eq!(jac[(o, c)], 0.0, "output {o} sees input {c}");
                }
            }
        }
        // first coordinate's parameters still depend on the context
        assert!(jac[(0, d)] != 0.0 || jac[(0, d + 1)] != 0.0);
    }
}
