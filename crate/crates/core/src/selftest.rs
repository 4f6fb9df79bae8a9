//! Quick randomized checks of every module, runnable from the CLI.

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256StarStar;

use crate::ans::{AnsStream, SymbolTable};
use crate::archive::{compress, decompress};
use crate::dequant::{dequant_decode, dequant_encode, Dequantizer};
use crate::error::Result;
use crate::gaussian::{build_table, quantize, GaussianBinSpec};
use crate::lbb::{blackbox_decode, blackbox_encode, compositional_decode, compositional_encode, gaussian_to_ar, CodecParams};
use crate::toy;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: usize,
    pub failed: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SelfTestReport {
    pub suites: Vec<SuiteResult>,
}

impl SelfTestReport {
    pub fn ok(&self) -> bool {
        self.suites.iter().all(|s| s.failed == 0 && s.passed > 0)
    }
}

pub type TableBuilder = dyn Fn(&GaussianBinSpec) -> Result<SymbolTable> + Sync;

fn suite(name: &'static str, cases: usize, seed: u64, mut case: impl FnMut(&mut Xoshiro256StarStar) -> bool) -> SuiteResult {
    let mut rng = Xoshiro256StarStar::seed_from_u64(seed);
    let passed = (0..cases).filter(|_| case(&mut rng)).count();
    SuiteResult { name, passed, failed: cases - passed }
}

fn random_spec(rng: &mut Xoshiro256StarStar) -> GaussianBinSpec {
    GaussianBinSpec::new(rng.gen_range(-20.0..20.0), rng.gen_range(0.05..3.0), rng.gen_range(0..5), 16, 16.0)
}

pub fn selftest() -> SelfTestReport {
    selftest_with(&build_table)
}

/// Runs every suite with `tables` in place of the Gaussian table builder.
pub fn selftest_with(tables: &TableBuilder) -> SelfTestReport {
    let mut suites = Vec::new();

    suites.push(suite("table_exact_mass", 200, 1, |rng| {
        let spec = random_spec(rng);
        match tables(&spec) {
            Ok(t) => {
                t.freqs().iter().map(|&f| f as u64).sum::<u64>() == 1 << spec.precision
                    && t.freqs().iter().all(|&f| f >= 1)
                    && tables(&spec).ok() == Some(t)
            }
            Err(_) => false,
        }
    }));

    suites.push(suite("table_symmetry", 50, 2, |rng| {
        let spec = GaussianBinSpec::new(0.0, rng.gen_range(0.1..3.0), rng.gen_range(0..5), 16, 16.0);
        match tables(&spec) {
            Ok(t) => (t.symbol_base()..t.symbol_base() + t.len() as i64).all(|n| t.freq(n) == t.freq(-1 - n)),
            Err(_) => false,
        }
    }));

    suites.push(suite("ans_round_trip", 100, 3, |rng| {
        let spec = random_spec(rng);
        let Ok(t) = tables(&spec) else { return false };
        let mut s = AnsStream::new(rng.gen(), rng.gen_range(0..4));
        let syms: Vec<i64> = (0..50).map(|_| s.decode(&t)).collect::<Result<_>>().unwrap_or_default();
        if syms.len() != 50 {
            return false;
        }
        syms.iter().rev().all(|&v| s.encode(&t, v).is_ok()) && s.is_pristine()
    }));

    suites.push(suite("flow_bijection", 50, 4, |rng| {
        let d = rng.gen_range(1..12);
        let m = toy::random_model(d, rng.gen_range(1..5), rng.gen());
        let x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let Ok(z) = m.forward(&x, &[]) else { return false };
        let Ok(back) = m.inverse(&z, &[]) else { return false };
        x.iter().zip(&back).all(|(a, b)| (a - b).abs() <= 1e-10 * a.abs().max(1.0))
    }));

    suites.push(suite("flow_logdet", 50, 5, |rng| {
        let d = rng.gen_range(1..10);
        let m = toy::random_model(d, rng.gen_range(1..5), rng.gen());
        let x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let (Ok((_, ld)), Ok(j)) = (m.forward_logdet(&x, &[]), m.jacobian(&x, &[])) else { return false };
        (ld - j.determinant().abs().ln()).abs() <= 1e-8
    }));

    suites.push(suite("codec_round_trip", 60, 6, |rng| {
        let d = rng.gen_range(1..6);
        let m = toy::random_model(d, rng.gen_range(1..4), rng.gen());
        let k = rng.gen_range(12..28);
        let p = CodecParams::new(k, 2f64.powi(-rng.gen_range(6..(k as i32 - 2).min(16)))).with_support(64.0);
        let eps: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let Ok(x) = m.inverse(&eps, &[]).and_then(|v| quantize(&v, k)) else { return false };
        let blackbox = rng.gen_bool(0.5);
        let mut s = AnsStream::new(rng.gen(), 0);
        let enc = if blackbox { blackbox_encode(&mut s, &m, &x, &p) } else { compositional_encode(&mut s, &m, &x, &p) };
        if enc.is_err() {
            return false;
        }
        let dec = if blackbox { blackbox_decode(&mut s, &m, &p) } else { compositional_decode(&mut s, &m, &p) };
        dec.ok() == Some(x) && s.is_pristine()
    }));

    suites.push(suite("ar_oracle", 50, 7, |rng| {
        let d = if rng.gen_bool(0.5) { 4 } else { 8 };
        let j = nalgebra::DMatrix::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let Ok(ar) = gaussian_to_ar(&j) else { return false };
        let y: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let cov = &j * j.transpose();
        let Some(inv) = cov.clone().try_inverse() else { return false };
        let yv = nalgebra::DVector::from_vec(y.clone());
        let dense = -0.5 * (yv.transpose() * inv * &yv)[0] - 0.5 * (2.0 * std::f64::consts::PI * cov).determinant().ln();
        (ar.log_density(&y) - dense).abs() <= 1e-8 * dense.abs().max(1.0)
    }));

    suites.push(suite("dequant_round_trip", 50, 8, |rng| {
        let d = rng.gen_range(1..5);
        let m = toy::byte_model(d, 2, rng.gen());
        let deq = if rng.gen_bool(0.5) {
            Dequantizer::Uniform
        } else {
            match toy::conditional_dequantizer(d, 2, rng.gen()) {
                Ok(q) => Dequantizer::ConditionalFlow(q),
                Err(_) => return false,
            }
        };
        let p = CodecParams::new(20, 2f64.powi(-10));
        let x: Vec<i64> = (0..d).map(|_| rng.gen_range(0..256)).collect();
        let mut s = AnsStream::new(rng.gen(), 0);
        dequant_encode(&mut s, &x, 8, &m, &deq, &p).is_ok()
            && dequant_decode(&mut s, 8, &m, &deq, &p).ok() == Some(x)
            && s.is_pristine()
    }));

    suites.push(suite("archive_round_trip", 5, 9, |rng| {
        let m = toy::byte_model(3, 2, rng.gen());
        let rows: Vec<Vec<i64>> = (0..8).map(|_| (0..3).map(|_| rng.gen_range(0..256)).collect()).collect();
        let p = CodecParams::new(20, 2f64.powi(-10)).with_seed(rng.gen());
        let Ok((bytes, _)) = compress(&rows, 8, &m, &Dequantizer::Uniform, &p, None) else { return false };
        matches!(decompress(&bytes, &m, &Dequantizer::Uniform, None), Ok((back, r)) if back == rows && r.reservoir_verified)
    }));

    SelfTestReport { suites }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_build_passes() {
        let r = selftest();
        assert!(r.ok(), "{r:?}");
        assert_eq!(r.suites.len(), 9);
    }

    #[test]
    fn broken_normalization_is_caught() {
        // one unit of surplus mass in the last bin
        let broken = |spec: &GaussianBinSpec| -> Result<SymbolTable> {
            let t = build_table(spec)?;
            let mut f = t.freqs();
            let last = f.len() - 1;
            f[last] += 1;
            SymbolTable::from_frequencies(t.symbol_base(), &f, spec.precision)
        };
        let r = selftest_with(&broken);
        let mass = r.suites.iter().find(|s| s.name == "table_exact_mass").unwrap();
        assert_eq!(mass.passed, 0);
        assert!(!r.ok());
    }
}
