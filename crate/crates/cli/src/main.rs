//! `lbb`: compress, decompress, evaluate, sweep and benchmark local bits-back coding.
//!
//! Reports go to stdout as JSON. Failures go to stderr as a JSON object
//! `{"error": kind, "message": text}`. Exit codes: 0 ok, 1 usage, 2 codec error.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use lbb::archive::{compress, decompress};
use lbb::dequant::Dequantizer;
use lbb::flow::weights::{load_weights, save_weights};
use lbb::flow::FlowModel;
use lbb::harness::{bench, eval_continuous, eval_integer, sweep, sweep_csv, SweepConfig};
use lbb::lbb::CodecParams;
use lbb::selftest::selftest;
use lbb::tensor::{Tensor, TensorData};
use lbb::{toy, Error};

#[derive(Parser)]
#[command(name = "lbb", version, about = "Lossless compression with local bits-back coding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compress a u8 LBBT tensor of shape (items, dim) into an LBBA archive.
    Compress {
        #[command(flatten)]
        models: ModelArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 8)]
        bits: u32,
        #[command(flatten)]
        codec: CodecArgs,
    },
    /// Restore the LBBT tensor from an archive.
    Decompress {
        #[command(flatten)]
        models: ModelArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        batch_threads: Option<usize>,
    },
    /// Ideal codelength: dequantization bound for u8 data, flow density for f64 data.
    Eval {
        #[command(flatten)]
        models: ModelArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 8)]
        bits: u32,
        /// Monte-Carlo samples per item (u8 data).
        #[arg(long, default_value_t = 100)]
        samples: usize,
        /// Grid precision for f64 data.
        #[arg(long, default_value_t = 32)]
        kx: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Net and auxiliary bits over a grid of precisions and noise scales, as CSV.
    Sweep {
        #[command(flatten)]
        models: ModelArgs,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        ks: Vec<u32>,
        #[arg(long, value_delimiter = ',', required = true, value_parser = parse_sigma)]
        sigmas: Vec<f64>,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        #[arg(long, default_value_t = 20)]
        items: usize,
        #[arg(long, default_value_t = 8)]
        bits: u32,
        #[command(flatten)]
        codec: CodecArgs,
    },
    /// Time black-box and compositional coding per datapoint across dimensions.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [16usize, 64, 256])]
        dims: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        reps: usize,
        #[arg(long, default_value_t = 24)]
        kx: u32,
        #[arg(long, default_value = "2^-12", value_parser = parse_sigma)]
        sigma: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the randomized checks of every module.
    Selftest,
    /// Write a randomly initialized toy model.
    MakeToy {
        #[arg(long, value_enum)]
        kind: ToyKind,
        #[arg(long)]
        dim: usize,
        #[arg(long, default_value_t = 4)]
        couplings: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Write synthetic 8-bit data as a u8 LBBT tensor.
    MakeData {
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        items: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Clone, Copy, clap::ValueEnum)]
enum ToyKind {
    /// Density model for bytes.
    Byte,
    /// Conditional dequantizer.
    Dequant,
    /// ActNorm, couplings and a block-diagonal dense layer.
    Realnvp,
}

#[derive(Args)]
struct ModelArgs {
    /// Density model (LBBW).
    #[arg(long)]
    model: PathBuf,
    /// Conditional dequantizer (LBBW); uniform noise if absent.
    #[arg(long)]
    dequant: Option<PathBuf>,
}

#[derive(Args)]
struct CodecArgs {
    #[arg(long, default_value_t = 32)]
    kx: u32,
    /// Defaults to kx.
    #[arg(long)]
    kz: Option<u32>,
    /// Noise scale; accepts "2^-14".
    #[arg(long, default_value = "2^-14", value_parser = parse_sigma)]
    sigma: f64,
    #[arg(long, default_value_t = 24)]
    table_bits: u32,
    /// Support half-width in standard deviations.
    #[arg(long, default_value_t = 16.0)]
    support: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    aux_words: usize,
    #[arg(long)]
    batch_threads: Option<usize>,
}

impl CodecArgs {
    fn params(&self) -> CodecParams {
        CodecParams {
            kx: self.kx,
            kz: self.kz.unwrap_or(self.kx),
            sigma: self.sigma,
            precision: self.table_bits,
            support: self.support,
            seed: self.seed,
            aux_words: self.aux_words,
        }
    }
}

fn parse_sigma(s: &str) -> Result<f64, String> {
    let v = match s.trim().strip_prefix("2^") {
        Some(exp) => 2f64.powi(exp.parse::<i32>().map_err(|e| format!("bad exponent in {s:?}: {e}"))?),
        None => s.trim().parse::<f64>().map_err(|e| format!("bad sigma {s:?}: {e}"))?,
    };
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("sigma must be positive, got {s:?}"))
    }
}

fn params_json(p: &CodecParams) -> Value {
    json!({
        "kx": p.kx, "kz": p.kz, "sigma": p.sigma, "sigma_log2": p.sigma.log2(),
        "table_bits": p.precision, "support": p.support, "seed": p.seed, "aux_words": p.aux_words,
    })
}

fn load_models(args: &ModelArgs) -> lbb::Result<(FlowModel, Dequantizer)> {
    let model = load_weights(&args.model)?;
    let deq = match &args.dequant {
        Some(p) => Dequantizer::ConditionalFlow(load_weights(p)?),
        None => Dequantizer::Uniform,
    };
    Ok((model, deq))
}

fn byte_rows(path: &Path, bits: u32) -> lbb::Result<Vec<Vec<i64>>> {
    let t = Tensor::load(path)?;
    if t.shape.len() != 2 {
        return Err(Error::CorruptTensor(format!("expected shape (items, dim), got {:?}", t.shape)));
    }
    if bits > 8 {
        return Err(Error::InvalidParams(format!("bit depth {bits} exceeds u8 data")));
    }
    Ok(t.rows_u8()?.into_iter().map(|r| r.into_iter().map(i64::from).collect()).collect())
}

fn run(command: Command) -> lbb::Result<Value> {
    match command {
        Command::Compress { models, input, output, bits, codec } => {
            let (model, deq) = load_models(&models)?;
            let rows = byte_rows(&input, bits)?;
            let p = codec.params();
            let (bytes, r) = compress(&rows, bits, &model, &deq, &p, codec.batch_threads)?;
            std::fs::write(&output, &bytes)?;
            let aux: Vec<f64> = r.items.iter().map(|i| i.peak_aux_bits / r.dim as f64).collect();
            Ok(json!({
                "command": "compress", "items": rows.len(), "dim": r.dim, "bits": bits,
                "params": params_json(&p),
                "mean_net_bits_per_dim": r.mean_net_bits_per_dim(),
                "mean_aux_bits_per_dim": r.mean_aux_bits_per_dim(),
                "net_bits_per_dim": r.net_bits_per_dim(),
                "aux_bits_per_dim": aux,
                "archive_bytes": r.archive_bytes,
                "seconds": r.seconds,
            }))
        }
        Command::Decompress { models, input, output, batch_threads } => {
            let (model, deq) = load_models(&models)?;
            let archive = std::fs::read(&input)?;
            let (rows, r) = decompress(&archive, &model, &deq, batch_threads)?;
            let bytes: Vec<Vec<u8>> = rows.iter().map(|row| row.iter().map(|&v| v as u8).collect()).collect();
            let mut t = Tensor::from_rows_u8(&bytes)?;
            t.shape = vec![rows.len() as u64, model.dim as u64];
            t.save(&output)?;
            Ok(json!({
                "command": "decompress", "items": rows.len(), "dim": model.dim,
                "params": params_json(&r.header.params),
                "reservoir_verified": r.reservoir_verified,
                "seconds": r.seconds,
            }))
        }
        Command::Eval { models, input, bits, samples, kx, seed } => {
            let (model, deq) = load_models(&models)?;
            let t = Tensor::load(&input)?;
            let (r, kind) = match t.data {
                TensorData::U8(_) => (eval_integer(&byte_rows(&input, bits)?, bits, &model, &deq, samples, seed)?, "dequantization_bound"),
                TensorData::F64(_) => (eval_continuous(&t.rows_f64()?, kx, &model)?, "flow_density"),
            };
            Ok(json!({
                "command": "eval", "kind": kind, "items": r.per_item.len(), "dim": r.dim,
                "bits_per_dim": r.bits_per_dim, "std_error": r.std_error,
            }))
        }
        Command::Sweep { models, input, output, ks, sigmas, seeds, items, bits, codec } => {
            let (model, deq) = load_models(&models)?;
            let rows = byte_rows(&input, bits)?;
            let cfg = SweepConfig { ks, sigmas, seeds, items_per_seed: items, bits, base: codec.params() };
            let cells = sweep(&rows, &model, &deq, &cfg, codec.batch_threads)?;
            std::fs::write(&output, sweep_csv(&cells))?;
            let failed = cells.iter().filter(|c| c.outcome.is_err()).count();
            Ok(json!({ "command": "sweep", "cells": cells.len(), "failed_cells": failed, "output": output }))
        }
        Command::Bench { dims, reps, kx, sigma, seed } => {
            let r = bench(&dims, reps, seed, &CodecParams::new(kx, sigma).with_support(16.0))?;
            let rows: Vec<Value> = r
                .rows
                .iter()
                .map(|b| {
                    json!({
                        "dim": b.dim, "method": b.method.name(),
                        "encode_seconds": b.encode_mean, "encode_std": b.encode_std,
                        "decode_seconds": b.decode_mean, "decode_std": b.decode_std,
                        "net_bits_per_dim": b.net_bits_per_dim,
                    })
                })
                .collect();
            Ok(json!({
                "command": "bench", "rows": rows,
                "blackbox_slope": r.blackbox_slope, "compositional_slope": r.compositional_slope,
            }))
        }
        Command::Selftest => {
            let r = selftest();
            let suites: Vec<Value> =
                r.suites.iter().map(|s| json!({ "suite": s.name, "passed": s.passed, "failed": s.failed })).collect();
            if !r.ok() {
                return Err(Error::InvalidParams(format!("selftest failed: {}", Value::from(suites))));
            }
            Ok(json!({ "command": "selftest", "ok": true, "suites": suites }))
        }
        Command::MakeToy { kind, dim, couplings, seed, output } => {
            let model = match kind {
                ToyKind::Byte => toy::byte_model(dim, couplings, seed),
                ToyKind::Dequant => toy::conditional_dequantizer(dim, couplings, seed)?,
                ToyKind::Realnvp => toy::realnvp(dim, couplings, (1..=4).rev().find(|b| dim % b == 0).unwrap_or(1), seed),
            };
            save_weights(&model, &output)?;
            Ok(json!({ "command": "make-toy", "dim": dim, "layers": model.layers.len(), "output": output }))
        }
        Command::MakeData { dim, items, seed, output } => {
            let rows: Vec<Vec<u8>> =
                toy::byte_data(items, dim, seed).into_iter().map(|r| r.into_iter().map(|v| v as u8).collect()).collect();
            let mut t = Tensor::from_rows_u8(&rows)?;
            t.shape = vec![items as u64, dim as u64];
            t.save(&output)?;
            Ok(json!({ "command": "make-data", "items": items, "dim": dim, "output": output }))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli.command) {
        Ok(report) => {
            let _ = writeln!(std::io::stdout(), "{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::from(2)
        }
    }
}
