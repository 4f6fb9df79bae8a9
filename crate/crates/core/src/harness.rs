//! Evaluation, parameter sweeps and timing benchmarks behind the CLI.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;
use rand_xoshiro::Xoshiro256StarStar;
use rayon::prelude::*;

use crate::ans::AnsStream;
use crate::archive::{item_seed, mean, with_threads};
use crate::dequant::{dequant_bound, dequant_encode, Dequantizer};
use crate::error::{Error, Result};
use crate::flow::FlowModel;
use crate::gaussian::{quantize, GridPoint};
use crate::lbb::{blackbox_decode, blackbox_encode, compositional_decode, compositional_encode, theoretical_bits, CodecParams};
use crate::toy;

fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub dim: usize,
    /// Per-item bits per dimension.
    pub per_item: Vec<f64>,
    pub bits_per_dim: f64,
    pub std_error: f64,
}

impl EvalReport {
    fn from_items(dim: usize, per_item: Vec<f64>) -> Self {
        let bits_per_dim = mean(&per_item);
        let std_error = std_dev(&per_item) / (per_item.len().max(1) as f64).sqrt();
        Self { dim, per_item, bits_per_dim, std_error }
    }
}

/// Dequantization bound of integer data, in bits per dimension.
pub fn eval_integer(
    data: &[Vec<i64>],
    bits: u32,
    model: &FlowModel,
    deq: &Dequantizer,
    n_samples: usize,
    seed: u64,
) -> Result<EvalReport> {
    let per_item = data
        .par_iter()
        .enumerate()
        .map(|(i, x)| Ok(dequant_bound(x, bits, model, deq, n_samples, item_seed(seed, i as u64))?.bits_per_dim))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_items(model.dim, per_item))
}

/// `(-log2 p(x) + k d) / d` of real data quantized at precision `k`.
pub fn eval_continuous(data: &[Vec<f64>], k: u32, model: &FlowModel) -> Result<EvalReport> {
    let per_item = data
        .iter()
        .map(|x| Ok(theoretical_bits(model, &quantize(x, k)?)? / model.dim as f64))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_items(model.dim, per_item))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepStats {
    pub net_bits_per_dim: f64,
    pub net_std: f64,
    pub aux_bits_per_dim: f64,
    pub aux_std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub k: u32,
    pub sigma: f64,
    /// Error kind of the first failure, if any seed failed.
    pub outcome: std::result::Result<SweepStats, String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepConfig {
    pub ks: Vec<u32>,
    pub sigmas: Vec<f64>,
    pub seeds: usize,
    pub items_per_seed: usize,
    pub bits: u32,
    /// Precision, support, seed and reservoir size; k and sigma are swept.
    pub base: CodecParams,
}

fn sweep_seed(
    data: &[Vec<i64>],
    model: &FlowModel,
    deq: &Dequantizer,
    cfg: &SweepConfig,
    p: &CodecParams,
    seed_index: usize,
) -> Result<(f64, f64)> {
    let mut s = AnsStream::new(item_seed(p.seed, seed_index as u64), p.aux_words);
    for t in 0..cfg.items_per_seed {
        let x = &data[(seed_index * cfg.items_per_seed + t) % data.len()];
        dequant_encode(&mut s, x, cfg.bits, model, deq, p)?;
    }
    let d = model.dim as f64;
    Ok((s.net_bits() / (cfg.items_per_seed as f64 * d), s.peak_aux_bits() / d))
}

/// Codes `items_per_seed` items in sequence on one stream per seed, for
/// every `(k, sigma)` cell.
pub fn sweep(
    data: &[Vec<i64>],
    model: &FlowModel,
    deq: &Dequantizer,
    cfg: &SweepConfig,
    threads: Option<usize>,
) -> Result<Vec<SweepCell>> {
    if cfg.ks.is_empty() || cfg.sigmas.is_empty() || cfg.seeds == 0 || cfg.items_per_seed == 0 || data.is_empty() {
        return Err(Error::InvalidParams("sweep needs non-empty k and sigma lists, seeds, items and data".into()));
    }
    let cells: Vec<(u32, f64)> = cfg.ks.iter().flat_map(|&k| cfg.sigmas.iter().map(move |&s| (k, s))).collect();
    with_threads(threads, || {
        cells
            .par_iter()
            .map(|&(k, sigma)| {
                let p = CodecParams { kx: k, kz: k, sigma, ..cfg.base };
                let runs: Vec<Result<(f64, f64)>> =
                    (0..cfg.seeds).into_par_iter().map(|j| sweep_seed(data, model, deq, cfg, &p, j)).collect();
                let outcome = match runs.into_iter().collect::<Result<Vec<_>>>() {
                    Ok(v) => {
                        let net: Vec<f64> = v.iter().map(|r| r.0).collect();
                        let aux: Vec<f64> = v.iter().map(|r| r.1).collect();
                        Ok(SweepStats {
                            net_bits_per_dim: mean(&net),
                            net_std: std_dev(&net),
                            aux_bits_per_dim: mean(&aux),
                            aux_std: std_dev(&aux),
                        })
                    }
                    Err(e) => Err(e.kind().to_string()),
                };
                SweepCell { k, sigma, outcome }
            })
            .collect()
    })
}

pub const SWEEP_CSV_HEADER: &str = "k,sigma,net_bits_per_dim,net_std,aux_bits_per_dim,aux_std,status";

/// One row per cell; failed cells keep their row with empty numbers.
pub fn sweep_csv(cells: &[SweepCell]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for c in cells {
        match &c.outcome {
            Ok(s) => out.push_str(&format!(
                "{},{:e},{:.6},{:.6},{:.6},{:.6},ok\n",
                c.k, c.sigma, s.net_bits_per_dim, s.net_std, s.aux_bits_per_dim, s.aux_std
            )),
            Err(kind) => out.push_str(&format!("{},{:e},,,,,failed:{kind}\n", c.k, c.sigma)),
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    BlackBox,
    Compositional,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::BlackBox => "blackbox",
            Method::Compositional => "compositional",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub dim: usize,
    pub method: Method,
    /// Seconds per datapoint.
    pub encode_mean: f64,
    pub encode_std: f64,
    pub decode_mean: f64,
    pub decode_std: f64,
    pub net_bits_per_dim: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub blackbox_slope: f64,
    pub compositional_slope: f64,
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let (mx, my) = (mean(&lx), mean(&ly));
    let cov: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let var: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    cov / var
}

/// Toy model used for timing at dimension `dim`.
pub fn bench_model(dim: usize, seed: u64) -> FlowModel {
    let block = (1..=4).rev().find(|b| dim % b == 0).unwrap_or(1);
    toy::realnvp(dim, 4, block, seed)
}

fn time_method(model: &FlowModel, x: &GridPoint, p: &CodecParams, method: Method, reps: usize) -> Result<BenchRow> {
    let (mut enc, mut dec, mut net) = (Vec::new(), Vec::new(), Vec::new());
    for r in 0..reps {
        let mut s = AnsStream::new(r as u64, 0);
        let t = Instant::now();
        match method {
            Method::BlackBox => blackbox_encode(&mut s, model, x, p)?,
            Method::Compositional => compositional_encode(&mut s, model, x, p)?,
        }
        enc.push(t.elapsed().as_secs_f64());
        net.push(s.net_bits() / model.dim as f64);
        let t = Instant::now();
        let back = match method {
            Method::BlackBox => blackbox_decode(&mut s, model, p)?,
            Method::Compositional => compositional_decode(&mut s, model, p)?,
        };
        dec.push(t.elapsed().as_secs_f64());
        if &back != x || !s.is_pristine() {
            return Err(Error::CorruptArchive(format!("{} round trip failed in benchmark", method.name())));
        }
    }
    Ok(BenchRow {
        dim: model.dim,
        method,
        encode_mean: mean(&enc),
        encode_std: std_dev(&enc),
        decode_mean: mean(&dec),
        decode_std: std_dev(&dec),
        net_bits_per_dim: mean(&net),
    })
}

/// Times both codecs per datapoint across dimensions, single-threaded.
pub fn bench(dims: &[usize], reps: usize, seed: u64, p: &CodecParams) -> Result<BenchReport> {
    if dims.len() < 2 || reps == 0 {
        return Err(Error::InvalidParams("bench needs at least two dimensions and one repetition".into()));
    }
    let mut rows = Vec::new();
    for &d in dims {
        let model = bench_model(d, seed);
        let mut rng = Xoshiro256StarStar::seed_from_u64(seed ^ d as u64);
        let eps: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let x = quantize(&model.inverse(&eps, &[])?, p.kx)?;
        for method in [Method::BlackBox, Method::Compositional] {
            // one untimed warm-up pass
            time_method(&model, &x, p, method, 1)?;
            rows.push(time_method(&model, &x, p, method, reps)?);
        }
    }
    let slope = |m: Method| {
        let sel: Vec<&BenchRow> = rows.iter().filter(|r| r.method == m).collect();
        let x: Vec<f64> = sel.iter().map(|r| r.dim as f64).collect();
        let y: Vec<f64> = sel.iter().map(|r| r.encode_mean + r.decode_mean).collect();
        loglog_slope(&x, &y)
    };
    Ok(BenchReport { blackbox_slope: slope(Method::BlackBox), compositional_slope: slope(Method::Compositional), rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let x = [16.0, 64.0, 256.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(2.5)).collect();
        assert!((loglog_slope(&x, &y) - 2.5).abs() < 1e-12);
    }

    #[test]
    fn continuous_eval_of_origin() {
        let r = eval_continuous(&[vec![0.0, 0.0]], 0, &FlowModel::identity(2)).unwrap();
        // bin centers (0.5, 0.5) at k = 0
        let expect = (FlowModel::identity(2).neg_log2_density(&[0.5, 0.5], &[]).unwrap()) / 2.0;
        assert!((r.bits_per_dim - expect).abs() < 1e-12);
        let r = eval_continuous(&[vec![0.0, 0.0]], 30, &FlowModel::identity(2)).unwrap();
        let expect = (2.0 * std::f64::consts::PI).log2() / 2.0 + 30.0;
        assert!((r.bits_per_dim - expect).abs() < 1e-9);
    }

    #[test]
    fn sweep_records_failures_and_is_deterministic() {
        let m = toy::byte_model(2, 1, 1);
        let data: Vec<Vec<i64>> = (0..10).map(|i| vec![100 + i, 120 - i]).collect();
        let cfg = SweepConfig {
            ks: vec![4, 20],
            sigmas: vec![2f64.powi(-10)],
            seeds: 2,
            items_per_seed: 3,
            bits: 8,
            base: CodecParams::default(),
        };
        let a = sweep(&data, &m, &Dequantizer::Uniform, &cfg, None).unwrap();
        let b = sweep(&data, &m, &Dequantizer::Uniform, &cfg, Some(1)).unwrap();
        assert_eq!(sweep_csv(&a), sweep_csv(&b));
        assert!(a[1].outcome.is_ok());
        let csv = sweep_csv(&a);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with(SWEEP_CSV_HEADER));
    }
}
