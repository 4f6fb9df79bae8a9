//! Autoregressive form of a zero-mean Gaussian with covariance `J J^T`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// `y ~ N(0, J J^T)` written as `y_i | y_<i ~ N(mean_i(y_<i), L_ii^2)` with
/// `L` the lower Cholesky factor of `J J^T`.
#[derive(Clone, Debug)]
pub struct ArDecomposition {
    pub chol: DMatrix<f64>,
    pub chol_inv: DMatrix<f64>,
}

/// Lower Cholesky factor; no jitter is added.
pub fn cholesky(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let d = a.nrows();
    let mut l = DMatrix::zeros(d, d);
    for j in 0..d {
        let mut diag = a[(j, j)];
        for k in 0..j {
            diag -= l[(j, k)] * l[(j, k)];
        }
        if !(diag > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: j, value: diag });
        }
        let ljj = diag.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..d {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(l)
}

/// Inverse of a lower-triangular matrix by forward substitution.
pub fn lower_triangular_inverse(l: &DMatrix<f64>) -> DMatrix<f64> {
    let d = l.nrows();
    let mut inv = DMatrix::zeros(d, d);
    for c in 0..d {
        inv[(c, c)] = 1.0 / l[(c, c)];
        for r in c + 1..d {
            let mut s = 0.0;
            for k in c..r {
                s += l[(r, k)] * inv[(k, c)];
            }
            inv[(r, c)] = -s / l[(r, r)];
        }
    }
    inv
}

pub fn gaussian_to_ar(jacobian: &DMatrix<f64>) -> Result<ArDecomposition> {
    let cov = jacobian * jacobian.transpose();
    let chol = cholesky(&cov)?;
    let chol_inv = lower_triangular_inverse(&chol);
    Ok(ArDecomposition { chol, chol_inv })
}

impl ArDecomposition {
    pub fn dim(&self) -> usize {
        self.chol.nrows()
    }

    /// Conditional mean and standard deviation of `y_i` given `y_<i`.
    pub fn conditional(&self, i: usize, prefix: &[f64]) -> (f64, f64) {
        let lii = self.chol[(i, i)];
        let s: f64 = prefix[..i].iter().enumerate().map(|(j, y)| self.chol_inv[(i, j)] * y).sum();
        (-lii * s, lii)
    }

    /// Joint natural-log density as the product of the conditionals.
    pub fn log_density(&self, y: &[f64]) -> f64 {
        (0..self.dim())
            .map(|i| {
                let (m, s) = self.conditional(i, y);
                let u = (y[i] - m) / s;
                -0.5 * u * u - s.ln() - HALF_LN_2PI
            })
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::StandardNormal;
    use rand_xoshiro::Xoshiro256StarStar;

    #[test]
    fn identity_gives_independent_unit_conditionals() {
        let ar = gaussian_to_ar(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(ar.chol, DMatrix::identity(3, 3));
        assert_eq!(ar.conditional(2, &[5.0, -1.0]), (0.0, 1.0));
    }

    #[test]
    fn two_by_two_example() {
        let j = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 1.0]);
        let ar = gaussian_to_ar(&j).unwrap();
        assert!((ar.chol.clone() - DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 1.0, 1.0])).abs().max() < 1e-15);
        assert_eq!(ar.conditional(0, &[]), (0.0, 2.0));
        let (m, s) = ar.conditional(1, &[3.0]);
        assert!((m - 1.5).abs() < 1e-15 && (s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn singular_jacobian_is_rejected() {
        let j = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(gaussian_to_ar(&j), Err(Error::NotPositiveDefinite { pivot: 1, .. })));
    }

    #[test]
    fn factor_reproduces_covariance() {
        let mut rng = Xoshiro256StarStar::seed_from_u64(3);
        for d in [1, 3, 8, 20] {
            let j = DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal)) + DMatrix::identity(d, d) * 2.0;
            let ar = gaussian_to_ar(&j).unwrap();
            let cov = &j * j.transpose();
            assert!((&ar.chol * ar.chol.transpose() - &cov).abs().max() <= 1e-8 * cov.abs().max());
            assert!((&ar.chol * &ar.chol_inv - DMatrix::identity(d, d)).abs().max() < 1e-10);
        }
    }
}
