//! `LBBA` archives: one bits-back stream per data item.
//!
//! ```text
//! "LBBA"  u32 version (= 1)  u64 model hash  u32 bit depth  u32 dim  u64 items
//! u32 kx  u32 kz  f64 sigma  u32 table precision  f64 support  u64 seed  u32 aux words
//! u64 payload length
//! payload: per item  u32 byte length, flushed stream (u64 state, u32 words bottom first)
//! ```
//!
//! Item `i` starts from the reservoir seeded with `item_seed(seed, i)`, so
//! results do not depend on thread scheduling. After decoding, each stream
//! must equal the untouched reservoir of its seed; this is checked.

use std::time::Instant;

use rayon::prelude::*;

use crate::ans::AnsStream;
use crate::dequant::{dequant_decode, dequant_encode, Dequantizer};
use crate::error::{Error, Result};
use crate::flow::weights::model_hash;
use crate::flow::FlowModel;
use crate::lbb::CodecParams;
use crate::wire::{put_u32, put_u64, Reader};

pub const ARCHIVE_MAGIC: &str = "LBBA";
pub const ARCHIVE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct ArchiveHeader {
    pub version: u32,
    pub model_hash: u64,
    pub bit_depth: u32,
    pub dim: u32,
    pub items: u64,
    pub params: CodecParams,
    pub payload_len: u64,
}

impl ArchiveHeader {
    pub const LEN: usize = 4 + 4 + 8 + 4 + 4 + 8 + 4 + 4 + 8 + 4 + 8 + 8 + 4 + 8;

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::LEN);
        out.extend_from_slice(ARCHIVE_MAGIC.as_bytes());
        put_u32(&mut out, self.version);
        put_u64(&mut out, self.model_hash);
        put_u32(&mut out, self.bit_depth);
        put_u32(&mut out, self.dim);
        put_u64(&mut out, self.items);
        let p = &self.params;
        put_u32(&mut out, p.kx);
        put_u32(&mut out, p.kz);
        out.extend_from_slice(&p.sigma.to_le_bytes());
        put_u32(&mut out, p.precision);
        out.extend_from_slice(&p.support.to_le_bytes());
        put_u64(&mut out, p.seed);
        put_u32(&mut out, p.aux_words as u32);
        put_u64(&mut out, self.payload_len);
        out
    }

    fn read(r: &mut Reader) -> Result<Self> {
        r.magic(ARCHIVE_MAGIC)?;
        let version = r.u32()?;
        if version != ARCHIVE_VERSION {
            return Err(Error::VersionMismatch(version));
        }
        Ok(Self {
            version,
            model_hash: r.u64()?,
            bit_depth: r.u32()?,
            dim: r.u32()?,
            items: r.u64()?,
            params: CodecParams {
                kx: r.u32()?,
                kz: r.u32()?,
                sigma: r.f64()?,
                precision: r.u32()?,
                support: r.f64()?,
                seed: r.u64()?,
                aux_words: r.u32()? as usize,
            },
            payload_len: r.u64()?,
        })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        Self::read(&mut Reader::new(bytes, Error::CorruptArchive))
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Reservoir seed of item `index`.
pub fn item_seed(seed: u64, index: u64) -> u64 {
    splitmix64(seed ^ splitmix64(index))
}

/// Hash identifying the model pair an archive was made with.
pub fn models_hash(model: &FlowModel, deq: &Dequantizer) -> u64 {
    match deq.model() {
        Some(q) => model_hash(&[model, q]),
        None => model_hash(&[model]),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ItemReport {
    pub net_bits: f64,
    pub peak_aux_bits: f64,
    pub flushed_bits: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CompressReport {
    pub dim: usize,
    pub items: Vec<ItemReport>,
    pub archive_bytes: usize,
    pub seconds: f64,
}

impl CompressReport {
    pub fn net_bits_per_dim(&self) -> Vec<f64> {
        self.items.iter().map(|r| r.net_bits / self.dim as f64).collect()
    }

    pub fn mean_net_bits_per_dim(&self) -> f64 {
        mean(&self.net_bits_per_dim())
    }

    pub fn mean_aux_bits_per_dim(&self) -> f64 {
        mean(&self.items.iter().map(|r| r.peak_aux_bits / self.dim as f64).collect::<Vec<_>>())
    }
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

/// Runs `f` on a pool of `threads` workers, or the global pool.
pub fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::InvalidParams(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

pub fn compress(
    data: &[Vec<i64>],
    bit_depth: u32,
    model: &FlowModel,
    deq: &Dequantizer,
    params: &CodecParams,
    threads: Option<usize>,
) -> Result<(Vec<u8>, CompressReport)> {
    let start = Instant::now();
    params.validate()?;
    deq.validate(model.dim)?;
    if let Some(row) = data.iter().find(|r| r.len() != model.dim) {
        return Err(Error::DimensionMismatch { expected: model.dim, got: row.len() });
    }
    let streams: Vec<Result<(Vec<u8>, ItemReport)>> = with_threads(threads, || {
        data.par_iter()
            .enumerate()
            .map(|(i, x)| {
                let mut s = AnsStream::new(item_seed(params.seed, i as u64), params.aux_words);
                dequant_encode(&mut s, x, bit_depth, model, deq, params)?;
                let report =
                    ItemReport { net_bits: s.net_bits(), peak_aux_bits: s.peak_aux_bits(), flushed_bits: s.flushed_bits() };
                Ok((s.to_bytes(), report))
            })
            .collect()
    })?;
    let mut payload = Vec::new();
    let mut items = Vec::with_capacity(data.len());
    for r in streams {
        let (bytes, report) = r?;
        put_u32(&mut payload, bytes.len() as u32);
        payload.extend_from_slice(&bytes);
        items.push(report);
    }
    let header = ArchiveHeader {
        version: ARCHIVE_VERSION,
        model_hash: models_hash(model, deq),
        bit_depth,
        dim: model.dim as u32,
        items: data.len() as u64,
        params: *params,
        payload_len: payload.len() as u64,
    };
    let mut out = header.to_bytes();
    out.extend_from_slice(&payload);
    let report = CompressReport { dim: model.dim, items, archive_bytes: out.len(), seconds: start.elapsed().as_secs_f64() };
    Ok((out, report))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecompressReport {
    pub header: ArchiveHeader,
    /// Every recovered reservoir matched its seeded generator.
    pub reservoir_verified: bool,
    pub seconds: f64,
}

pub fn decompress(
    archive: &[u8],
    model: &FlowModel,
    deq: &Dequantizer,
    threads: Option<usize>,
) -> Result<(Vec<Vec<i64>>, DecompressReport)> {
    let start = Instant::now();
    let mut r = Reader::new(archive, Error::CorruptArchive);
    let header = ArchiveHeader::read(&mut r)?;
    let supplied = models_hash(model, deq);
    if header.model_hash != supplied {
        return Err(Error::HashMismatch { archive: header.model_hash, supplied });
    }
    if header.dim as usize != model.dim {
        return Err(Error::CorruptArchive(format!("archive dim {} vs model dim {}", header.dim, model.dim)));
    }
    if header.payload_len != r.remaining() as u64 {
        return Err(Error::CorruptArchive(format!(
            "payload length {} but {} bytes follow the header",
            header.payload_len,
            r.remaining()
        )));
    }
    let mut frames = Vec::new();
    for _ in 0..header.items {
        let len = r.u32()? as usize;
        frames.push(r.take(len)?);
    }
    r.finish()?;
    let p = header.params;
    p.validate().map_err(|e| Error::CorruptArchive(e.to_string()))?;
    let decoded: Vec<Result<Vec<i64>>> = with_threads(threads, || {
        frames
            .par_iter()
            .enumerate()
            .map(|(i, bytes)| {
                let corrupt = |e: Error| Error::CorruptArchive(format!("item {i}: {e}"));
                let mut s = AnsStream::from_bytes(bytes).map_err(corrupt)?;
                let x = dequant_decode(&mut s, header.bit_depth, model, deq, &p).map_err(corrupt)?;
                let seed = item_seed(p.seed, i as u64);
                let witness = AnsStream::new(seed, s.words().len());
                if s.words().len() < p.aux_words || s != witness {
                    return Err(Error::CorruptArchive(format!("item {i}: reservoir mismatch")));
                }
                Ok(x)
            })
            .collect()
    })?;
    let rows = decoded.into_iter().collect::<Result<Vec<_>>>()?;
    Ok((rows, DecompressReport { header, reservoir_verified: true, seconds: start.elapsed().as_secs_f64() }))
}
