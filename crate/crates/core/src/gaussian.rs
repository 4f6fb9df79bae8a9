//! Fixed-point grids and integer probability tables for discretized Gaussians.
//!
//! Bin `n` at precision `k` is the interval `[n 2^-k, (n+1) 2^-k)`, represented
//! by its center `(n + 1/2) 2^-k`. All Gaussian masses are exact CDF
//! differences; `Phi(x) = erfc(-x / sqrt 2) / 2` with `erfc` from `libm`
//! (a port of the FreeBSD msun rational approximations, error below 1 ulp).
//!
//! Two quantizers are provided:
//!
//! * [`build_table`] materializes every bin of the support window and
//!   normalizes with largest-remainder rounding. It is the reference table.
//! * [`QuantizedGaussian`] evaluates cumulative masses on demand with the
//!   rule `cum(j) = floor(F(e_j) * (2^r - W)) + j` where `F` is the
//!   window-normalized CDF at the lower edge `e_j` of symbol `j` and `W` the
//!   number of symbols. Every symbol gets at least mass 1 and the total is
//!   exactly `2^r`. Far tails are grouped into power-of-two runs so that the
//!   mass-1 floor does not add up over hundreds of bins.
//!
//! [`encode_gaussian`] / [`decode_gaussian`] never build a window finer than
//! 32 bins per standard deviation: a fine index is split into a coarse bucket
//! (coded with a [`QuantizedGaussian`]) and an offset inside the bucket
//! (coded as raw uniform bits).

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::ans::{AnsStream, EntropyModel, SymbolTable, MAX_PRECISION};
use crate::error::{Error, Result};

/// Default support half-width in standard deviations.
pub const DEFAULT_SUPPORT: f64 = 16.0;

/// Coarse buckets hold between 16 and 32 bins per standard deviation.
const BUCKET_BINS_LOG2: i32 = 4;

/// Smallest admissible `stddev * 2^k`.
const MIN_SCALED_STDDEV: f64 = 1.0 / (1u64 << 20) as f64;

#[inline]
pub fn bin_width(k: i32) -> f64 {
    2f64.powi(-k)
}

#[inline]
pub fn bin_center(index: i64, k: i32) -> f64 {
    (index as f64 + 0.5) * bin_width(k)
}

/// Standard normal CDF.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * std::f64::consts::FRAC_1_SQRT_2)
}

/// Mass of the standard normal on `[a, b)`, evaluated on the tail side that
/// avoids cancellation.
pub fn normal_mass(a: f64, b: f64) -> f64 {
    if a >= 0.0 {
        normal_cdf(-a) - normal_cdf(-b)
    } else if b <= 0.0 {
        normal_cdf(b) - normal_cdf(a)
    } else {
        1.0 - normal_cdf(a) - normal_cdf(-b)
    }
}

/// A point on the fixed-point grid of precision `k`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GridPoint {
    pub indices: Vec<i64>,
    pub k: u32,
}

impl GridPoint {
    pub fn new(indices: Vec<i64>, k: u32) -> Self {
        Self { indices, k }
    }

    pub fn dim(&self) -> usize {
        self.indices.len()
    }

    pub fn value(&self, i: usize) -> f64 {
        bin_center(self.indices[i], self.k as i32)
    }

    pub fn values(&self) -> Vec<f64> {
        self.indices.iter().map(|&n| bin_center(n, self.k as i32)).collect()
    }
}

/// Bin index `floor(x 2^k)` of a scalar.
pub fn quantize_scalar(x: f64, k: u32) -> Result<i64> {
    let scaled = x * 2f64.powi(k as i32);
    if !scaled.is_finite() || scaled.abs() >= (1u64 << 62) as f64 {
        return Err(Error::Overflow { value: x, k });
    }
    Ok(scaled.floor() as i64)
}

pub fn quantize(x: &[f64], k: u32) -> Result<GridPoint> {
    let indices = x.iter().map(|&v| quantize_scalar(v, k)).collect::<Result<_>>()?;
    Ok(GridPoint { indices, k })
}

/// A Gaussian discretized to bins of width `2^-k`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianBinSpec {
    pub mean: f64,
    pub stddev: f64,
    pub k: i32,
    /// Table precision: masses sum to `2^precision`.
    pub precision: u32,
    /// Support half-width in standard deviations.
    pub support: f64,
}

impl GaussianBinSpec {
    pub fn new(mean: f64, stddev: f64, k: i32, precision: u32, support: f64) -> Self {
        Self { mean, stddev, k, precision, support }
    }

    fn validate(&self) -> Result<()> {
        if !self.mean.is_finite() || !self.stddev.is_finite() || !(self.stddev > 0.0) {
            return Err(Error::InvalidParams(format!(
                "gaussian mean {} stddev {}",
                self.mean, self.stddev
            )));
        }
        if !(self.support > 0.0) || !self.support.is_finite() {
            return Err(Error::InvalidParams(format!("support {}", self.support)));
        }
        if self.precision == 0 || self.precision > MAX_PRECISION {
            return Err(Error::InvalidParams(format!("table precision {}", self.precision)));
        }
        let scale = 2f64.powi(self.k);
        if (self.mean.abs() + self.support * self.stddev) * scale >= 2f64.powi(60) {
            return Err(Error::Overflow { value: self.mean, k: self.k.max(0) as u32 });
        }
        if self.stddev * 2f64.powi(self.k) < MIN_SCALED_STDDEV {
            return Err(Error::DegenerateStddev { stddev: self.stddev, k: self.k });
        }
        Ok(())
    }

    /// Bins intersecting `[mean - T s, mean + T s)`, as an inclusive range.
    /// Symmetric about the mean whenever the mean sits on a bin edge.
    pub fn window(&self) -> (i64, i64) {
        let scale = 2f64.powi(self.k);
        let half = self.support * self.stddev;
        let lo = ((self.mean - half) * scale).floor();
        let hi = ((self.mean + half) * scale).ceil() - 1.0;
        let lo = lo.clamp(-(2f64.powi(62)), 2f64.powi(62)) as i64;
        let hi = hi.clamp(-(2f64.powi(62)), 2f64.powi(62)) as i64;
        (lo, hi.max(lo))
    }

    /// Standardized position of the lower edge of bin `n`.
    #[inline]
    fn standardized_edge(&self, n: i64) -> f64 {
        (n as f64 * bin_width(self.k) - self.mean) / self.stddev
    }

    fn bin_mass(&self, n: i64) -> f64 {
        normal_mass(self.standardized_edge(n), self.standardized_edge(n + 1))
    }
}

/// Materialized table over the support window, largest-remainder rounded.
///
/// Ideal masses `2^r * P(bin) / P(window)` are floored, the remaining units go
/// to the largest fractional parts, then every zero-mass bin is raised to 1,
/// each unit taken from the currently largest bin. Ties go to the bin closest
/// to the mean, then to the lower index, so mirrored bins are always treated
/// as a pair.
pub fn build_table(spec: &GaussianBinSpec) -> Result<SymbolTable> {
    spec.validate()?;
    let (lo, hi) = spec.window();
    let bins = (hi - lo + 1) as u64;
    if bins > 1 << spec.precision {
        return Err(Error::WindowTooLarge { bins, precision: spec.precision });
    }
    let masses: Vec<f64> = (lo..=hi).map(|n| spec.bin_mass(n)).collect();
    let total_mass: f64 = masses.iter().sum();
    let total = 1u64 << spec.precision;
    let ideal: Vec<f64> = masses.iter().map(|m| m / total_mass * total as f64).collect();
    let mut freq: Vec<u64> = ideal.iter().map(|v| v.floor() as u64).collect();
    let assigned: u64 = freq.iter().sum();
    let mut left = total.saturating_sub(assigned);

    let centre = spec.mean * 2f64.powi(spec.k);
    let distance: Vec<f64> = (lo..=hi).map(|n| (n as f64 + 0.5 - centre).abs()).collect();
    let mut rank: Vec<usize> = (0..freq.len()).collect();
    rank.sort_by(|&a, &b| distance[a].total_cmp(&distance[b]).then(a.cmp(&b)));
    let mut closeness = vec![0usize; freq.len()];
    for (r, &i) in rank.iter().enumerate() {
        closeness[i] = r;
    }

    let mut order: Vec<usize> = (0..freq.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = ideal[a] - ideal[a].floor();
        let rb = ideal[b] - ideal[b].floor();
        rb.total_cmp(&ra).then(closeness[a].cmp(&closeness[b]))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        freq[i] += 1;
        left -= 1;
    }

    let mut heap: BinaryHeap<(u64, Reverse<usize>, usize)> =
        freq.iter().enumerate().map(|(i, &f)| (f, Reverse(closeness[i]), i)).collect();
    let zeros: Vec<usize> = (0..freq.len()).filter(|&i| freq[i] == 0).collect();
    for i in zeros {
        freq[i] = 1;
        loop {
            let (f, _, j) = heap.pop().expect("nonempty");
            if f != freq[j] {
                continue; // stale entry
            }
            if f <= 1 {
                return Err(Error::WindowTooLarge { bins, precision: spec.precision });
            }
            freq[j] -= 1;
            heap.push((freq[j], Reverse(closeness[j]), j));
            break;
        }
    }
    let freq: Vec<u32> = freq.into_iter().map(|f| f as u32).collect();
    SymbolTable::from_frequencies(lo, &freq, spec.precision)
}

/// Half-width, in standard deviations, of the part of the window coded bin by bin.
pub const CORE_SUPPORT: f64 = 6.0;

/// A run of `2^bits` adjacent bins coded as one symbol plus raw offset bits.
#[derive(Clone, Copy, Debug, PartialEq)]
struct TailSegment {
    start: i64,
    bits: u32,
}

/// Splits `[start, start + len)` into power-of-two runs, largest first when
/// `largest_first`.
fn segments(start: i64, len: i64, largest_first: bool) -> Vec<TailSegment> {
    let mut bits: Vec<u32> = (0..63).filter(|b| len >> b & 1 == 1).collect();
    if largest_first {
        bits.reverse();
    }
    let mut at = start;
    bits.into_iter()
        .map(|b| {
            let s = TailSegment { start: at, bits: b };
            at += 1 << b;
            s
        })
        .collect()
}

/// Lazily evaluated leaky quantization of a Gaussian over a window of bins.
///
/// Bins within [`CORE_SUPPORT`] standard deviations of the mean are symbols of
/// their own. Beyond that each tail is cut into power-of-two runs, one symbol
/// per run, with the position inside the run sent as raw bits. Symbol `j` gets
/// mass `cum(j + 1) - cum(j)` with `cum(j) = floor(F(e_j) (2^r - W)) + j`,
/// where `e_j` is its lower edge, `F` the window-normalized CDF and `W` the
/// number of symbols.
#[derive(Clone, Debug)]
pub struct QuantizedGaussian {
    spec: GaussianBinSpec,
    lo: i64,
    hi: i64,
    core_lo: i64,
    core_hi: i64,
    low_tail: Vec<TailSegment>,
    high_tail: Vec<TailSegment>,
    leak_free_mass: u64,
    cdf_lo: f64,
    window_mass: f64,
}

impl QuantizedGaussian {
    pub fn new(spec: GaussianBinSpec) -> Result<Self> {
        let (lo, hi) = spec.window();
        Self::with_window(spec, lo, hi)
    }

    /// Restrict to the intersection of the support window with `[lo, hi]`.
    pub fn bounded(spec: GaussianBinSpec, lo: i64, hi: i64) -> Result<Self> {
        let (wlo, whi) = spec.window();
        let (lo, hi) = (wlo.max(lo), whi.min(hi));
        if lo > hi {
            return Err(Error::OutOfSupport { index: lo, lo: wlo, hi: whi, mean: spec.mean, stddev: spec.stddev });
        }
        Self::with_window(spec, lo, hi)
    }

    fn with_window(spec: GaussianBinSpec, lo: i64, hi: i64) -> Result<Self> {
        spec.validate()?;
        let (clo, chi) = GaussianBinSpec { support: spec.support.min(CORE_SUPPORT), ..spec }.window();
        let (mut core_lo, mut core_hi) = (clo.max(lo), chi.min(hi));
        if core_lo > core_hi {
            (core_lo, core_hi) = (lo, hi);
        }
        let low_tail = segments(lo, core_lo - lo, true);
        let high_tail = segments(core_hi + 1, hi - core_hi, false);
        let symbols = (low_tail.len() + high_tail.len()) as u64 + (core_hi - core_lo + 1) as u64;
        if symbols >= 1 << spec.precision {
            return Err(Error::WindowTooLarge { bins: symbols, precision: spec.precision });
        }
        let cdf_lo = normal_cdf(spec.standardized_edge(lo));
        let cdf_hi = normal_cdf(spec.standardized_edge(hi + 1));
        Ok(Self {
            spec,
            lo,
            hi,
            core_lo,
            core_hi,
            low_tail,
            high_tail,
            leak_free_mass: (1u64 << spec.precision) - symbols,
            cdf_lo,
            window_mass: cdf_hi - cdf_lo,
        })
    }

    pub fn window(&self) -> (i64, i64) {
        (self.lo, self.hi)
    }

    pub fn contains(&self, n: i64) -> bool {
        (self.lo..=self.hi).contains(&n)
    }

    fn symbols(&self) -> i64 {
        (self.low_tail.len() + self.high_tail.len()) as i64 + self.core_hi - self.core_lo + 1
    }

    /// Lower edge of symbol `j`, for `j` in `0..=symbols`.
    fn edge(&self, j: i64) -> i64 {
        let low = self.low_tail.len() as i64;
        let core = self.core_hi - self.core_lo + 1;
        if j < low {
            self.low_tail[j as usize].start
        } else if j < low + core {
            self.core_lo + (j - low)
        } else if j < self.symbols() {
            self.high_tail[(j - low - core) as usize].start
        } else {
            self.hi + 1
        }
    }

    /// Symbol of bin `n` and its raw offset `(value, bits)` inside the symbol.
    fn symbol_of(&self, n: i64) -> (i64, u64, u32) {
        let low = self.low_tail.len() as i64;
        let core = self.core_hi - self.core_lo + 1;
        if n < self.core_lo {
            let j = self.low_tail.partition_point(|s| s.start <= n) - 1;
            let s = self.low_tail[j];
            (j as i64, (n - s.start) as u64, s.bits)
        } else if n <= self.core_hi {
            (low + n - self.core_lo, 0, 0)
        } else {
            let j = self.high_tail.partition_point(|s| s.start <= n) - 1;
            let s = self.high_tail[j];
            (low + core + j as i64, (n - s.start) as u64, s.bits)
        }
    }

    /// Cumulative mass below symbol `j`, for `j` in `0..=symbols`.
    fn cum(&self, j: i64) -> u64 {
        if j <= 0 {
            return 0;
        }
        if j >= self.symbols() {
            return 1 << self.spec.precision;
        }
        let e = self.edge(j);
        let f = if self.window_mass > 0.0 {
            ((normal_cdf(self.spec.standardized_edge(e)) - self.cdf_lo) / self.window_mass).clamp(0.0, 1.0)
        } else {
            (e - self.lo) as f64 / (self.hi - self.lo + 1) as f64
        };
        (f * self.leak_free_mass as f64).floor() as u64 + j as u64
    }

    fn out_of_support(&self, n: i64) -> Error {
        Error::OutOfSupport { index: n, lo: self.lo, hi: self.hi, mean: self.spec.mean, stddev: self.spec.stddev }
    }

    pub fn encode(&self, stream: &mut AnsStream, n: i64) -> Result<()> {
        if !self.contains(n) {
            return Err(self.out_of_support(n));
        }
        let (j, offset, bits) = self.symbol_of(n);
        stream.encode_bits(offset, bits)?;
        stream.encode(self, j)
    }

    pub fn decode(&self, stream: &mut AnsStream) -> Result<i64> {
        let j = stream.decode(self)?;
        let start = self.edge(j);
        let (_, _, bits) = self.symbol_of(start);
        Ok(start + stream.decode_bits(bits)? as i64)
    }
}

/// Entropy model over symbol numbers `0..W`; use [`QuantizedGaussian::encode`]
/// and [`QuantizedGaussian::decode`] to code bins.
impl EntropyModel for QuantizedGaussian {
    fn precision(&self) -> u32 {
        self.spec.precision
    }

    fn interval(&self, symbol: i64) -> Result<(u32, u32)> {
        if !(0..self.symbols()).contains(&symbol) {
            return Err(Error::SymbolOutOfTable { symbol, lo: 0, hi: self.symbols() - 1 });
        }
        let c0 = self.cum(symbol);
        let c1 = self.cum(symbol + 1);
        if c1 <= c0 {
            // only reachable if the CDF approximation were non-monotone
            return Err(Error::InvalidParams(format!("empty symbol {symbol} in quantized gaussian")));
        }
        Ok((c0 as u32, (c1 - c0) as u32))
    }

    fn lookup(&self, slot: u32) -> (i64, u32, u32) {
        // largest j with cum(j) <= slot
        let (mut a, mut b) = (0, self.symbols());
        while b - a > 1 {
            let mid = a + (b - a) / 2;
            if self.cum(mid) <= slot as u64 {
                a = mid;
            } else {
                b = mid;
            }
        }
        let c0 = self.cum(a);
        let c1 = self.cum(a + 1);
        (a, c0 as u32, (c1 - c0) as u32)
    }
}

/// Number of fine bins per coarse bucket, as a power of two.
pub fn bucket_shift(stddev: f64, k: i32) -> u32 {
    let scaled = (stddev * 2f64.powi(k)).log2().floor() as i32;
    (scaled - BUCKET_BINS_LOG2).max(0) as u32
}

struct BucketCoder {
    shift: u32,
    model: QuantizedGaussian,
}

impl BucketCoder {
    fn new(spec: &GaussianBinSpec, bounds: Option<(i64, i64)>) -> Result<Self> {
        spec.validate()?;
        let mut shift = bucket_shift(spec.stddev, spec.k);
        if let Some((lo, hi)) = bounds {
            while shift > 0 && (lo.rem_euclid(1 << shift) != 0 || (hi + 1).rem_euclid(1 << shift) != 0) {
                shift -= 1;
            }
        }
        let coarse = GaussianBinSpec { k: spec.k - shift as i32, ..*spec };
        let model = match bounds {
            Some((lo, hi)) => QuantizedGaussian::bounded(coarse, lo >> shift, hi >> shift)?,
            None => QuantizedGaussian::new(coarse)?,
        };
        Ok(Self { shift, model })
    }

    fn encode(&self, stream: &mut AnsStream, index: i64) -> Result<()> {
        let bucket = index >> self.shift;
        if !self.model.contains(bucket) {
            let (lo, hi) = self.model.window();
            return Err(Error::OutOfSupport {
                index,
                lo: lo << self.shift,
                hi: ((hi + 1) << self.shift) - 1,
                mean: self.model.spec.mean,
                stddev: self.model.spec.stddev,
            });
        }
        let offset = index - (bucket << self.shift);
        stream.encode_bits(offset as u64, self.shift)?;
        self.model.encode(stream, bucket)
    }

    fn decode(&self, stream: &mut AnsStream) -> Result<i64> {
        let bucket = self.model.decode(stream)?;
        let offset = stream.decode_bits(self.shift)? as i64;
        Ok((bucket << self.shift) + offset)
    }
}

/// Encode fine bin `index` under the discretized Gaussian `spec`.
pub fn encode_gaussian(stream: &mut AnsStream, spec: &GaussianBinSpec, index: i64) -> Result<()> {
    BucketCoder::new(spec, None)?.encode(stream, index)
}

pub fn decode_gaussian(stream: &mut AnsStream, spec: &GaussianBinSpec) -> Result<i64> {
    BucketCoder::new(spec, None)?.decode(stream)
}

/// As [`encode_gaussian`], with the support further restricted to `[lo, hi]`.
pub fn encode_gaussian_bounded(
    stream: &mut AnsStream,
    spec: &GaussianBinSpec,
    bounds: (i64, i64),
    index: i64,
) -> Result<()> {
    BucketCoder::new(spec, Some(bounds))?.encode(stream, index)
}

pub fn decode_gaussian_bounded(stream: &mut AnsStream, spec: &GaussianBinSpec, bounds: (i64, i64)) -> Result<i64> {
    BucketCoder::new(spec, Some(bounds))?.decode(stream)
}
